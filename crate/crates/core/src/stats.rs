//! Univariate and bivariate statistical primitives: empirical marginals,
//! the standard normal CDF and its inverse, Pearson correlation, the
//! one-dimensional earth mover's distance, and summary tables.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// A distribution that can be pushed through the NORTA transform.
///
/// `inverse_cdf` must accept the closed interval `[0, 1]`: the endpoints
/// can be produced by `normal_cdf` in floating point and map onto the
/// ends of the support.
pub trait Marginal: Send + Sync {
    fn inverse_cdf(&self, u: f64) -> f64;

    /// The NORTA coordinate map `F^{-1}(Phi(z))`.
    fn transform(&self, z: f64) -> f64 {
        self.inverse_cdf(normal_cdf(z))
    }

    /// Point masses have no variance and take no part in correlation matching.
    fn is_degenerate(&self) -> bool {
        false
    }

    /// Step-function view, when the marginal is an empirical distribution.
    fn as_empirical(&self) -> Option<&EmpiricalMarginal> {
        None
    }
}

/// Empirical distribution of one scenario coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmpiricalMarginal {
    sorted_values: Vec<f64>,
}

impl EmpiricalMarginal {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientData(
                "empirical marginal needs at least one sample".into(),
            ));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "empirical marginal samples must be finite".into(),
            ));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self {
            sorted_values: samples,
        })
    }

    pub fn from_slice(samples: &[f64]) -> Result<Self> {
        Self::new(samples.to_vec())
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted_values
    }

    pub fn n(&self) -> usize {
        self.sorted_values.len()
    }

    pub fn min(&self) -> f64 {
        self.sorted_values[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted_values[self.n() - 1]
    }

    /// Number of samples `<= x`.
    fn count_le(&self, x: f64) -> usize {
        self.sorted_values.partition_point(|&v| v <= x)
    }

    /// Right-continuous empirical CDF: fraction of samples `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.count_le(x) as f64 / self.n() as f64
    }

    /// Generalized inverse `inf { x : F(x) >= u }` for `u` in `(0, 1]`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::Domain(format!(
                "empirical quantile level must lie in (0, 1], got {u}"
            )));
        }
        Ok(self.sorted_values[self.level_index(u)])
    }

    /// Index of the smallest order statistic whose CDF level reaches `u`.
    fn level_index(&self, u: f64) -> usize {
        let n = self.n();
        let nf = n as f64;
        // Levels are compared as count / n, the same expression `cdf` uses,
        // so the round trip through `cdf` is exact.
        let mut c = ((u * nf).ceil() as usize).clamp(1, n);
        while c > 1 && (c - 1) as f64 / nf >= u {
            c -= 1;
        }
        while c < n && (c as f64) / nf < u {
            c += 1;
        }
        c - 1
    }

    /// Distinct support points in ascending order.
    pub fn support(&self) -> Vec<f64> {
        let mut s = self.sorted_values.clone();
        s.dedup();
        s
    }

    pub fn mean(&self) -> f64 {
        self.sorted_values.iter().sum::<f64>() / self.n() as f64
    }

    /// Population variance of the samples (the variance of the ECDF law).
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.sorted_values
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / self.n() as f64
    }

    /// Distinct values paired with their CDF levels.
    pub fn levels(&self) -> Vec<(f64, f64)> {
        let n = self.n() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (idx, &v) in self.sorted_values.iter().enumerate() {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = (idx + 1) as f64 / n,
                _ => out.push((v, (idx + 1) as f64 / n)),
            }
        }
        out
    }
}

impl TryFrom<Vec<f64>> for EmpiricalMarginal {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<EmpiricalMarginal> for Vec<f64> {
    fn from(m: EmpiricalMarginal) -> Self {
        m.sorted_values
    }
}

impl Marginal for EmpiricalMarginal {
    fn inverse_cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            self.min()
        } else {
            self.sorted_values[self.level_index(u.min(1.0))]
        }
    }

    fn is_degenerate(&self) -> bool {
        self.min() == self.max()
    }

    fn as_empirical(&self) -> Option<&EmpiricalMarginal> {
        Some(self)
    }
}

/// Standard normal distribution, for use as an analytic marginal.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardNormal;

impl Marginal for StandardNormal {
    fn inverse_cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            f64::NEG_INFINITY
        } else if u >= 1.0 {
            f64::INFINITY
        } else {
            normal_quantile_unchecked(u)
        }
    }

    fn transform(&self, z: f64) -> f64 {
        z
    }
}

pub fn ecdf_eval(m: &EmpiricalMarginal, x: f64) -> f64 {
    m.cdf(x)
}

pub fn ecdf_quantile(m: &EmpiricalMarginal, u: f64) -> Result<f64> {
    m.quantile(u)
}

/// Upper-tail probability `1 - Phi(z)` for `z >= 0`, computed without
/// cancellation (Hart's rational approximation, continued fraction past 7.07).
fn upper_tail(z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    if z > 37.0 {
        return 0.0;
    }
    let e = (-0.5 * z * z).exp();
    if z < 7.071_067_811_865_47 {
        let num = (((((0.035_262_496_599_891_1 * z + 0.700_383_064_443_688) * z
            + 6.373_962_203_531_65)
            * z
            + 33.912_866_078_383)
            * z
            + 112.079_291_497_871)
            * z
            + 221.213_596_169_931)
            * z
            + 220.206_867_912_376;
        let den = ((((((0.088_388_347_648_318_4 * z + 1.755_667_163_182_64) * z
            + 16.064_177_579_207)
            * z
            + 86.780_732_202_946_1)
            * z
            + 296.564_248_779_674)
            * z
            + 637.333_633_378_831)
            * z
            + 793.826_512_519_948)
            * z
            + 440.413_735_824_752;
        e * num / den
    } else {
        let cf = z + 1.0 / (z + 2.0 / (z + 3.0 / (z + 4.0 / (z + 0.65))));
        e / cf / SQRT_2PI
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z >= 0.0 {
        1.0 - upper_tail(z)
    } else {
        upper_tail(-z)
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// Inverse standard normal CDF on the open interval `(0, 1)`.
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile level must lie in (0, 1), got {u}"
        )));
    }
    Ok(normal_quantile_unchecked(u))
}

/// Acklam's rational approximation followed by one Halley step. The step is
/// taken against the tail probability on the side of `u`, so upper-tail
/// levels keep full precision (`1 - u` is exact for `u >= 0.5`).
pub(crate) fn normal_quantile_unchecked(u: f64) -> f64 {
    if u > 0.5 {
        -lower_quantile(1.0 - u)
    } else {
        lower_quantile(u)
    }
}

fn lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    // Halley refinement on the lower-tail probability.
    let e = normal_cdf(x) - p;
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    let refined = x - u / (1.0 + 0.5 * x * u);
    if refined.is_finite() {
        refined
    } else {
        x
    }
}

/// Sample Pearson correlation coefficient.
pub fn pearson_corr(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Contract(format!(
            "correlation inputs differ in length ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData(
            "correlation needs at least two observations".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one of the inputs is constant".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation with the constant-input fallback of 0.
pub fn pearson_or_zero(xs: &[f64], ys: &[f64]) -> Result<f64> {
    match pearson_corr(xs, ys) {
        Err(Error::UndefinedCorrelation(_)) => Ok(0.0),
        other => other,
    }
}

/// Earth mover's distance between two empirical distributions, i.e. the
/// exact integral of `|F - G|` over the merged breakpoint grid.
pub fn emd(f: &EmpiricalMarginal, g: &EmpiricalMarginal) -> f64 {
    let a = f.sorted_values();
    let b = g.sorted_values();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut total = 0.0;
    let mut prev = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let gap = (i as f64 / na - j as f64 / nb).abs();
        total += gap * (next - prev);
        while i < a.len() && a[i] <= next {
            i += 1;
        }
        while j < b.len() && b[j] <= next {
            j += 1;
        }
        prev = next;
    }
    total
}

/// Symmetric correlation matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    /// Builds from row-major entries, checking symmetry, unit diagonal and range.
    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Contract(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        let m = Self { dim, entries };
        m.check_structure(1e-12)?;
        Ok(m)
    }

    pub fn from_dmatrix(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Contract("correlation matrix must be square".into()));
        }
        let n = a.nrows();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(a[(i, j)]);
            }
        }
        Self::from_row_major(n, entries)
    }

    pub(crate) fn check_structure(&self, tol: f64) -> Result<()> {
        let n = self.dim;
        for i in 0..n {
            if (self.get(i, i) - 1.0).abs() > tol {
                return Err(Error::Contract(format!(
                    "diagonal entry ({i},{i}) is {} instead of 1",
                    self.get(i, i)
                )));
            }
            for j in 0..n {
                let v = self.get(i, j);
                if !v.is_finite() || v.abs() > 1.0 + tol {
                    return Err(Error::Contract(format!(
                        "entry ({i},{j}) = {v} outside [-1, 1]"
                    )));
                }
                if (v - self.get(j, i)).abs() > tol {
                    return Err(Error::Contract(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub(crate) fn set_pair(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.dim + j] = v;
        self.entries[j * self.dim + i] = v;
    }

    pub fn row_major(&self) -> &[f64] {
        &self.entries
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        self.to_dmatrix().symmetric_eigenvalues().min()
    }

    /// Frobenius distance to another matrix of the same size.
    pub fn frobenius_distance(&self, other: &CorrelationMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// The seven-row summary used by the validation and out-of-sample tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub max: f64,
}

impl Summary {
    pub const ROW_NAMES: [&'static str; 7] = ["mean", "std", "min", "25%", "50%", "75%", "max"];

    /// Mean, sample standard deviation (denominator `M - 1`, zero when
    /// `M = 1`), and order statistics with linearly interpolated quartiles.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData(
                "cannot summarize an empty column".into(),
            ));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            // Keep the invariant min <= mean <= max under rounding.
            mean: mean.clamp(sorted[0], sorted[sorted.len() - 1]),
            std,
            min: sorted[0],
            q25: interpolated_quantile(&sorted, 0.25),
            q50: interpolated_quantile(&sorted, 0.50),
            q75: interpolated_quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        })
    }

    pub fn rows(&self) -> [f64; 7] {
        [
            self.mean, self.std, self.min, self.q25, self.q50, self.q75, self.max,
        ]
    }
}

/// Quantile of sorted data by linear interpolation between order
/// statistics at position `p * (M - 1)`.
pub fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
