//! Small dense linear-algebra helpers shared by the model, sampler and
//! estimator.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance for accepting a symmetric matrix as PSD.
pub const PSD_REL_TOL: f64 = 1e-10;

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Checks positive semi-definiteness with eigenvalues `≥ -1e-10·‖m‖₂`.
///
/// Returns the smallest eigenvalue on failure.
pub fn check_psd(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    let ev = sorted_eigenvalues(m);
    let scale = ev.iter().fold(0.0_f64, |a, &e| a.max(e.abs()));
    let min = ev.first().copied().unwrap_or(0.0);
    if min < -PSD_REL_TOL * scale {
        return Err(Error::NotPsd {
            what,
            eigenvalue: min,
        });
    }
    Ok(())
}

/// A factor `F` with `F Fᵀ = m`, eigenvalues clipped at zero.
///
/// Also returns the smallest unclipped eigenvalue.
pub fn psd_factor(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let mut f = eig.eigenvectors;
    for (c, &e) in eig.eigenvalues.iter().enumerate() {
        let s = e.max(0.0).sqrt();
        f.column_mut(c).scale_mut(s);
    }
    (f, min)
}

/// Inverse and log-determinant of a symmetric positive definite matrix.
pub fn spd_inverse_logdet(m: &DMatrix<f64>, what: &'static str) -> Result<(DMatrix<f64>, f64)> {
    let chol = m.clone().cholesky().ok_or(Error::NotPd { what })?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok((inv, logdet))
}

pub fn spd_logdet(m: &DMatrix<f64>, what: &'static str) -> Result<f64> {
    let chol = m.clone().cholesky().ok_or(Error::NotPd { what })?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut c = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
