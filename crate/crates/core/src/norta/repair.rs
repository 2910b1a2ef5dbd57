//! Nearest correlation matrix and the jittered Cholesky factor.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::stats::CorrelationMatrix;

pub const REPAIR_TOLERANCE: f64 = 1e-9;
pub const REPAIR_MAX_ITERATIONS: usize = 1000;
/// Smallest eigenvalue accepted after repair.
pub const PSD_FLOOR: f64 = -1e-8;

/// Outcome of [`nearest_correlation_with_stats`].
#[derive(Debug, Clone)]
pub struct Repair {
    pub matrix: CorrelationMatrix,
    pub iterations: usize,
    pub converged: bool,
}

/// Frobenius-nearest correlation matrix (PSD, unit diagonal) by alternating
/// projections with Dykstra's correction.
pub fn nearest_correlation(a: &DMatrix<f64>) -> Result<CorrelationMatrix> {
    nearest_correlation_with_stats(a).map(|r| r.matrix)
}

pub fn nearest_correlation_with_stats(a: &DMatrix<f64>) -> Result<Repair> {
    check_input(a)?;
    let n = a.nrows();
    let mut y = a.clone();
    let mut correction = DMatrix::<f64>::zeros(n, n);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < REPAIR_MAX_ITERATIONS {
        iterations += 1;
        let r = &y - &correction;
        let x = project_psd(&r);
        correction = &x - &r;
        let mut next = x;
        for i in 0..n {
            next[(i, i)] = 1.0;
        }
        let step = (&next - &y).norm();
        y = next;
        if step <= REPAIR_TOLERANCE {
            converged = true;
            break;
        }
    }
    symmetrize(&mut y);
    if min_eigenvalue(&y) < PSD_FLOOR {
        // Rescaled eigenvalue clipping restores PSD without touching the diagonal.
        y = project_psd(&y);
        rescale_unit_diagonal(&mut y);
    }
    for v in y.iter_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
    for i in 0..n {
        y[(i, i)] = 1.0;
    }
    Ok(Repair {
        matrix: CorrelationMatrix::from_dmatrix(&y)?,
        iterations,
        converged,
    })
}

fn check_input(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Contract("matrix must be square".into()));
    }
    let n = a.nrows();
    for i in 0..n {
        if (a[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!(
                "diagonal entry ({i},{i}) is {} instead of 1",
                a[(i, i)]
            )));
        }
        for j in 0..n {
            let v = a[(i, j)];
            if !v.is_finite() || v.abs() > 1.0 + 1e-12 {
                return Err(Error::Contract(format!("entry ({i},{j}) = {v} outside [-1, 1]")));
            }
            if (v - a[(j, i)]).abs() > 1e-12 {
                return Err(Error::Contract(format!("matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Projection onto the PSD cone: clip negative eigenvalues to zero.
fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    symmetrize(&mut out);
    out
}

fn rescale_unit_diagonal(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let v = m[(i, i)];
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] *= d[i] * d[j];
        }
        m[(i, i)] = 1.0;
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone().symmetric_eigenvalues().min()
}

/// Lower Cholesky factor of `y`, adding diagonal jitter `delta` (starting at
/// 1e-10, growing tenfold) when `y` is numerically singular. The matrix
/// actually factored is `(y + delta I) / (1 + delta)`, which keeps a unit
/// diagonal; it is returned alongside the factor and the jitter used.
pub fn jittered_cholesky(y: &CorrelationMatrix) -> Result<(DMatrix<f64>, CorrelationMatrix, f64)> {
    let base = y.to_dmatrix();
    let n = base.nrows();
    if let Some(ch) = Cholesky::new(base.clone()) {
        return Ok((ch.l(), y.clone(), 0.0));
    }
    let mut delta = 1e-10;
    while delta <= 1e-2 {
        let mut m = &base + DMatrix::<f64>::identity(n, n) * delta;
        m /= 1.0 + delta;
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        if let Some(ch) = Cholesky::new(m.clone()) {
            return Ok((ch.l(), CorrelationMatrix::from_dmatrix(&m)?, delta));
        }
        delta *= 10.0;
    }
    Err(Error::Numerical(
        "Cholesky factorization failed even with diagonal jitter 1e-2".into(),
    ))
}
