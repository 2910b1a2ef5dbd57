//! The correlation-matching map `c(rho_z)` and its inversion by bisection.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::quadrature::{gauss_hermite, orthant_excess, Rule};
use crate::stats::{normal_quantile_unchecked, EmpiricalMarginal, Marginal};

/// Nodes per axis of the tensor Gauss–Hermite rule.
pub const HERMITE_DEGREE: usize = 64;
/// Bisection bracket is `[-1 + EPS, 1 - EPS]`.
pub const BRACKET_EPS: f64 = 1e-6;
pub const MATCH_TOLERANCE: f64 = 1e-4;
pub const MAX_BISECTIONS: usize = 200;

fn hermite() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| gauss_hermite(HERMITE_DEGREE))
}

/// Value of `c(rho_z)`, with the degenerate-marginal flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matched {
    pub value: f64,
    pub degenerate: bool,
}

/// Outcome of inverting `c` for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoZSolution {
    pub rho_z: f64,
    pub residual: f64,
    pub clamped: bool,
}

/// Empirical marginal as `X = x_0 + sum_a jump_a * 1{Z > threshold_a}`.
#[derive(Debug, Clone)]
pub(crate) struct StepForm {
    thresholds: Vec<f64>,
    jumps: Vec<f64>,
    std_dev: f64,
}

impl StepForm {
    pub(crate) fn new(m: &EmpiricalMarginal) -> Self {
        let levels = m.levels();
        let mut thresholds = Vec::with_capacity(levels.len().saturating_sub(1));
        let mut jumps = Vec::with_capacity(thresholds.capacity());
        for pair in levels.windows(2) {
            // X >= v_a exactly when Phi(Z) > F(v_{a-1}).
            thresholds.push(normal_quantile_unchecked(pair[0].1));
            jumps.push(pair[1].0 - pair[0].0);
        }
        Self {
            thresholds,
            jumps,
            std_dev: m.variance().sqrt(),
        }
    }

    fn is_degenerate(&self) -> bool {
        self.jumps.is_empty() || self.std_dev == 0.0
    }
}

/// A marginal prepared for repeated evaluation of `c`.
pub(crate) enum Prepared<'a, M: Marginal> {
    Steps(StepForm),
    General(&'a M),
}

impl<'a, M: Marginal> Prepared<'a, M> {
    pub(crate) fn new(m: &'a M) -> Self {
        match m.as_empirical() {
            Some(e) => Prepared::Steps(StepForm::new(e)),
            None => Prepared::General(m),
        }
    }

    fn is_degenerate(&self) -> bool {
        match self {
            Prepared::Steps(s) => s.is_degenerate(),
            Prepared::General(m) => m.is_degenerate(),
        }
    }

    fn transform(&self, z: f64) -> f64 {
        match self {
            Prepared::Steps(s) => s
                .thresholds
                .iter()
                .zip(&s.jumps)
                .filter(|(t, _)| z > **t)
                .map(|(_, j)| j)
                .sum(),
            Prepared::General(m) => m.transform(z),
        }
    }
}

/// Correlation of `(F_i^{-1}(Phi(Z1)), F_j^{-1}(Phi(Z2)))` for a standard
/// bivariate normal `(Z1, Z2)` with correlation `rho_z`.
pub fn c_of_rho<A: Marginal, B: Marginal>(m_i: &A, m_j: &B, rho_z: f64) -> Matched {
    evaluate(&Prepared::new(m_i), &Prepared::new(m_j), rho_z)
}

pub(crate) fn evaluate<A: Marginal, B: Marginal>(a: &Prepared<A>, b: &Prepared<B>, rho_z: f64) -> Matched {
    if a.is_degenerate() || b.is_degenerate() {
        return Matched {
            value: 0.0,
            degenerate: true,
        };
    }
    let value = match (a, b) {
        (Prepared::Steps(x), Prepared::Steps(y)) => step_correlation(x, y, rho_z),
        _ => hermite_correlation(a, b, rho_z),
    };
    Matched {
        value: value.clamp(-1.0, 1.0),
        degenerate: false,
    }
}

/// Exact for step marginals: the covariance is a sum over threshold pairs of
/// `jump_a * jump_b * (P(Z1 > s_a, Z2 > t_b) - P(Z1 > s_a) P(Z2 > t_b))`.
fn step_correlation(x: &StepForm, y: &StepForm, rho: f64) -> f64 {
    let mut cov = 0.0;
    for (&s, &dx) in x.thresholds.iter().zip(&x.jumps) {
        for (&t, &dy) in y.thresholds.iter().zip(&y.jumps) {
            cov += dx * dy * orthant_excess(s, t, rho);
        }
    }
    cov / (x.std_dev * y.std_dev)
}

/// Tensor Gauss–Hermite over the rotated pair `Z2 = rho Z1 + sqrt(1-rho^2) W`.
/// Moments come from the same rule, so `c(0) = 0` holds to rounding.
fn hermite_correlation<A: Marginal, B: Marginal>(a: &Prepared<A>, b: &Prepared<B>, rho: f64) -> f64 {
    let rule = hermite();
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    let xs: Vec<f64> = rule.nodes.iter().map(|&u| a.transform(u)).collect();
    let (mut ex, mut ey, mut exx, mut eyy, mut exy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, (&u, &wu)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let xv = xs[k];
        let (mut row_y, mut row_yy) = (0.0, 0.0);
        for (&v, &wv) in rule.nodes.iter().zip(&rule.weights) {
            let yv = b.transform(rho * u + s * v);
            row_y += wv * yv;
            row_yy += wv * yv * yv;
        }
        ex += wu * xv;
        exx += wu * xv * xv;
        ey += wu * row_y;
        eyy += wu * row_yy;
        exy += wu * xv * row_y;
    }
    let vx = exx - ex * ex;
    let vy = eyy - ey * ey;
    if vx <= 0.0 || vy <= 0.0 {
        return 0.0;
    }
    (exy - ex * ey) / (vx.sqrt() * vy.sqrt())
}

/// Finds `rho_z` with `c(rho_z) = rho_x_target` by bisection on the
/// non-decreasing map `c`. Unreachable targets clamp to the nearer end of
/// the bracket.
pub fn solve_rho_z<A: Marginal, B: Marginal>(m_i: &A, m_j: &B, rho_x_target: f64) -> RhoZSolution {
    solve_prepared(&Prepared::new(m_i), &Prepared::new(m_j), rho_x_target)
}

pub(crate) fn solve_prepared<A: Marginal, B: Marginal>(
    a: &Prepared<A>,
    b: &Prepared<B>,
    target: f64,
) -> RhoZSolution {
    if a.is_degenerate() || b.is_degenerate() {
        return RhoZSolution {
            rho_z: 0.0,
            residual: target.abs(),
            clamped: false,
        };
    }
    let c = |r: f64| evaluate(a, b, r).value;
    let mut lo = -1.0 + BRACKET_EPS;
    let mut hi = 1.0 - BRACKET_EPS;
    let c_lo = c(lo);
    let c_hi = c(hi);
    if target <= c_lo {
        return RhoZSolution {
            rho_z: lo,
            residual: (c_lo - target).abs(),
            clamped: target < c_lo - MATCH_TOLERANCE,
        };
    }
    if target >= c_hi {
        return RhoZSolution {
            rho_z: hi,
            residual: (c_hi - target).abs(),
            clamped: target > c_hi + MATCH_TOLERANCE,
        };
    }
    let mut mid = 0.5 * (lo + hi);
    let mut c_mid = c(mid);
    for _ in 0..MAX_BISECTIONS {
        if (c_mid - target).abs() <= MATCH_TOLERANCE {
            break;
        }
        if c_mid < target {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        c_mid = c(mid);
    }
    RhoZSolution {
        rho_z: mid,
        residual: (c_mid - target).abs(),
        clamped: false,
    }
}
