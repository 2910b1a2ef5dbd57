//! NORTA model fitting and sampling.
//!
//! Fitting estimates the empirical marginals and the target correlation
//! matrix from a scenario set, inverts the correlation-matching map pair by
//! pair to get the base-normal correlation matrix, repairs that matrix to
//! the nearest correlation matrix, and factors it. Sampling pushes
//! correlated standard normals through `F^{-1}(Phi(.))` coordinate-wise.

mod matching;
mod repair;

use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use matching::{
    c_of_rho, solve_rho_z, Matched, RhoZSolution, BRACKET_EPS, HERMITE_DEGREE, MATCH_TOLERANCE,
    MAX_BISECTIONS,
};
pub use repair::{
    jittered_cholesky, nearest_correlation, nearest_correlation_with_stats, Repair, PSD_FLOOR,
    REPAIR_MAX_ITERATIONS, REPAIR_TOLERANCE,
};

pub use crate::scenario::ScenarioSet;
use crate::error::{Error, Result};
use crate::stats::{normal_quantile_unchecked, pearson_or_zero, CorrelationMatrix, EmpiricalMarginal, Marginal};
use matching::Prepared;

/// Per-dimension empirical marginals and the pairwise Pearson matrix.
pub fn estimate_inputs(s: &ScenarioSet) -> Result<(Vec<EmpiricalMarginal>, CorrelationMatrix)> {
    if s.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "NORTA fitting needs at least 2 scenarios, got {}",
            s.len()
        )));
    }
    let n = s.dim();
    let columns: Vec<Vec<f64>> = (0..n).map(|i| s.column(i)).collect();
    let marginals = columns
        .iter()
        .map(|c| EmpiricalMarginal::from_slice(c))
        .collect::<Result<Vec<_>>>()?;
    let mut sigma_x = CorrelationMatrix::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            sigma_x.set_pair(i, j, pearson_or_zero(&columns[i], &columns[j])?);
        }
    }
    Ok((marginals, sigma_x))
}

/// Matching result for one unordered pair `(i, j)`, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFit {
    pub i: usize,
    pub j: usize,
    pub target: f64,
    pub rho_z: f64,
    pub residual: f64,
    pub clamped: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub pairs: Vec<PairFit>,
    pub clamped_pairs: usize,
    pub max_residual: f64,
    /// Smallest eigenvalue of the matched base-normal matrix; negative
    /// means the matched matrix was not a valid correlation matrix.
    pub sigma_z_min_eigenvalue: f64,
    /// Frobenius distance between the matched and the repaired matrix.
    pub repair_distance: f64,
    pub repair_iterations: usize,
    pub repair_converged: bool,
    pub cholesky_jitter: f64,
}

/// Output of [`fit_correlation`].
#[derive(Debug, Clone)]
pub struct CorrelationFit {
    pub sigma_z: CorrelationMatrix,
    pub y: CorrelationMatrix,
    pub chol: DMatrix<f64>,
    pub report: FitReport,
}

/// Base-normal correlation, its repair, and the Cholesky factor for any
/// marginals and target matrix.
pub fn fit_correlation<M: Marginal>(marginals: &[M], sigma_x: &CorrelationMatrix) -> Result<CorrelationFit> {
    let n = marginals.len();
    if sigma_x.dim() != n {
        return Err(Error::Contract(format!(
            "{n} marginals but a {}x{} target matrix",
            sigma_x.dim(),
            sigma_x.dim()
        )));
    }
    let prepared: Vec<Prepared<M>> = marginals.iter().map(Prepared::new).collect();
    let index_pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let pairs: Vec<PairFit> = index_pairs
        .par_iter()
        .map(|&(i, j)| {
            let target = sigma_x.get(i, j);
            let degenerate = marginals[i].is_degenerate() || marginals[j].is_degenerate();
            let sol = matching::solve_prepared(&prepared[i], &prepared[j], target);
            PairFit {
                i,
                j,
                target,
                rho_z: sol.rho_z,
                residual: sol.residual,
                clamped: sol.clamped,
                degenerate,
            }
        })
        .collect();

    let mut sigma_z = CorrelationMatrix::identity(n);
    for p in &pairs {
        sigma_z.set_pair(p.i, p.j, p.rho_z);
    }
    let sigma_z_dense = sigma_z.to_dmatrix();
    let sigma_z_min_eigenvalue = repair::min_eigenvalue(&sigma_z_dense);
    let repaired = nearest_correlation_with_stats(&sigma_z_dense)?;
    let (chol, y, jitter) = jittered_cholesky(&repaired.matrix)?;

    let report = FitReport {
        clamped_pairs: pairs.iter().filter(|p| p.clamped).count(),
        max_residual: pairs
            .iter()
            .filter(|p| !p.clamped)
            .map(|p| p.residual)
            .fold(0.0, f64::max),
        sigma_z_min_eigenvalue,
        repair_distance: sigma_z.frobenius_distance(&y),
        repair_iterations: repaired.iterations,
        repair_converged: repaired.converged,
        cholesky_jitter: jitter,
        pairs,
    };
    Ok(CorrelationFit {
        sigma_z,
        y,
        chol,
        report,
    })
}

/// Uniform on the open interval (0, 1) from 53 random bits.
pub(crate) fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Draws `m` NORTA vectors. Draw `d` uses ChaCha stream `d` of `seed`, so
/// output does not depend on how draws are scheduled across threads.
pub fn draw<M: Marginal>(marginals: &[M], chol: &DMatrix<f64>, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = marginals.len();
    (0..m)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            let independent: Vec<f64> = (0..n)
                .map(|_| normal_quantile_unchecked(open_unit(&mut rng)))
                .collect();
            (0..n)
                .map(|j| {
                    let z: f64 = (0..=j).map(|k| chol[(j, k)] * independent[k]).sum();
                    marginals[j].transform(z)
                })
                .collect()
        })
        .collect()
}

/// A fitted NORTA model over empirical marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NortaModel {
    pub dim: usize,
    pub labels: Vec<String>,
    pub marginals: Vec<EmpiricalMarginal>,
    pub sigma_x: CorrelationMatrix,
    pub sigma_z: CorrelationMatrix,
    pub y: CorrelationMatrix,
    /// Lower-triangular factor of `y`, row-major.
    pub chol: Vec<f64>,
    pub fit_report: FitReport,
}

impl NortaModel {
    pub fn fit(s: &ScenarioSet) -> Result<Self> {
        let (marginals, sigma_x) = estimate_inputs(s)?;
        let fitted = fit_correlation(&marginals, &sigma_x)?;
        let n = s.dim();
        let mut chol = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                chol.push(fitted.chol[(i, j)]);
            }
        }
        Ok(Self {
            dim: n,
            labels: s.labels().to_vec(),
            marginals,
            sigma_x,
            sigma_z: fitted.sigma_z,
            y: fitted.y,
            chol,
            fit_report: fitted.report,
        })
    }

    pub fn chol_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.chol)
    }

    /// Structural checks for a model read from disk.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim;
        if self.labels.len() != n
            || self.marginals.len() != n
            || self.sigma_x.dim() != n
            || self.sigma_z.dim() != n
            || self.y.dim() != n
            || self.chol.len() != n * n
        {
            return Err(Error::Validation(format!(
                "model components disagree with dimension {n}"
            )));
        }
        self.y.check_structure(1e-9)?;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.chol[i * n + j] != 0.0 {
                    return Err(Error::Validation(
                        "Cholesky factor must be lower triangular".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `m` synthetic equiprobable scenarios; values always lie in the
    /// support of the fitted marginals.
    pub fn sample(&self, m: usize, seed: u64) -> Result<ScenarioSet> {
        if m == 0 {
            return Err(Error::Validation("sample count must be at least 1".into()));
        }
        let rows = draw(&self.marginals, &self.chol_matrix(), m, seed);
        let heights = rows
            .into_iter()
            .map(|r| r.into_iter().map(|v| v as u32).collect())
            .collect();
        ScenarioSet::new(self.labels.clone(), heights)
    }
}
