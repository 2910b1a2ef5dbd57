//! Gauss rules and the bivariate normal orthant integral.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::stats::normal_cdf;

/// Nodes and weights of an `n`-point rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss–Hermite rule for the standard normal density: `sum w_i f(x_i)`
/// approximates `E[f(Z)]`, weights sum to one. Golub–Welsch on the
/// probabilists' Hermite Jacobi matrix.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize: the exact rule is symmetric about zero.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    }
}

/// Gauss–Legendre rule on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

fn legendre20() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

/// Plackett integrand after the substitution `r = sin(theta)`, times `2 pi`.
#[inline]
fn orthant_integrand(theta: f64, hk: f64, hs: f64) -> f64 {
    let s = theta.sin();
    ((s * hk - hs) / (1.0 - s * s)).exp()
}

fn integrate_panel(a: f64, b: f64, hk: f64, hs: f64) -> f64 {
    let rule = legendre20();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&t, &w)| w * orthant_integrand(mid + half * t, hk, hs))
        .sum::<f64>()
        * half
}

/// `P(Z1 > h, Z2 > k) - P(Z1 > h) P(Z2 > k)` for a standard bivariate
/// normal pair with correlation `rho`.
///
/// Uses `d/dr P(Z1 > h, Z2 > k) = phi2(h, k; r)` integrated from 0 to
/// `rho`. Past |rho| = 0.925 the panel toward the endpoint is refined
/// geometrically because the integrand develops a boundary layer there.
pub fn orthant_excess(h: f64, k: f64, rho: f64) -> f64 {
    if rho == 0.0 {
        return 0.0;
    }
    let rho = rho.clamp(-1.0, 1.0);
    let hk = h * k;
    let hs = 0.5 * (h * h + k * k);
    let end = rho.asin();
    let split = 0.925f64.asin();
    let sign = end.signum();
    let span = end.abs();
    let total = if span <= split {
        integrate_panel(0.0, end, hk, hs)
    } else {
        let mut acc = integrate_panel(0.0, sign * split, hk, hs);
        let mut lo = split;
        let mut width = span - split;
        for _ in 0..12 {
            width *= 0.5;
            acc += integrate_panel(sign * lo, sign * (lo + width), hk, hs);
            lo += width;
        }
        acc + integrate_panel(sign * lo, end, hk, hs)
    };
    total / (2.0 * PI)
}

/// `P(Z1 > h, Z2 > k)` for a standard bivariate normal pair.
pub fn orthant_probability(h: f64, k: f64, rho: f64) -> f64 {
    let q = (1.0 - normal_cdf(h)) * (1.0 - normal_cdf(k));
    (q + orthant_excess(h, k, rho)).clamp(0.0, 1.0)
}
