//! Dense complex linear algebra shared by the estimation and rate modules.
//!
//! Every matrix handled here is Hermitian (covariances, Gram matrices), so
//! the helpers work with Hermitian eigendecompositions and Cholesky factors
//! only.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Eigenvalues below this fraction of the largest eigenvalue are treated as
/// zero by the square roots and the log-det repair path.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Negative eigenvalues smaller in magnitude than this fraction of the
/// largest eigenvalue are attributed to rounding rather than indefiniteness.
pub const PSD_TOLERANCE: f64 = 1e-10;

static LOGDET_REPAIRS: AtomicU64 = AtomicU64::new(0);

/// Number of times [`log2_det_hpd`] fell back to eigenvalue clamping since
/// process start.
pub fn logdet_repair_count() -> u64 {
    LOGDET_REPAIRS.load(Ordering::Relaxed)
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Hermitian eigendecomposition of `(m + m^H) / 2`.
pub fn eigh(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    (eig.eigenvalues, eig.eigenvectors)
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    eigh(m).0.iter().copied().fold(f64::INFINITY, f64::min)
}

fn spectral_scale(values: &DVector<f64>) -> f64 {
    values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `V diag(f(values)) V^H`.
fn spectral_map(values: &DVector<f64>, vectors: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        let s = f(v);
        scaled.column_mut(j).scale_mut(s);
    }
    &scaled * vectors.adjoint()
}

/// Hermitian PSD square root.
pub fn psd_sqrt(m: &CMatrix, what: &'static str) -> Result<CMatrix> {
    if m.is_empty() {
        return Ok(m.clone());
    }
    let (values, vectors) = eigh(m);
    let scale = spectral_scale(&values);
    if scale == 0.0 {
        return Ok(CMatrix::zeros(m.nrows(), m.ncols()));
    }
    let min = values.min();
    if min < -PSD_TOLERANCE * scale {
        return Err(Error::NotPositiveSemidefinite {
            what,
            min_eigenvalue: min,
        });
    }
    let floor = EIGEN_FLOOR * scale;
    Ok(spectral_map(&values, &vectors, |v| {
        if v < floor {
            0.0
        } else {
            v.sqrt()
        }
    }))
}

/// Inverse Hermitian square root of a positive definite matrix.
pub fn pd_inv_sqrt(m: &CMatrix, what: &'static str) -> Result<CMatrix> {
    let (values, vectors) = eigh(m);
    let scale = spectral_scale(&values);
    if scale == 0.0 || values.min() <= EIGEN_FLOOR * scale {
        return Err(Error::Singular { what });
    }
    Ok(spectral_map(&values, &vectors, |v| 1.0 / v.sqrt()))
}

/// Cholesky factor of a Hermitian matrix, or `None` unless it is positive
/// definite.
///
/// The complex square root never fails, so nalgebra happily factors
/// indefinite complex input; the pivots are checked here instead.
pub fn try_cholesky(m: CMatrix) -> Option<Cholesky<C64, Dyn>> {
    let chol = Cholesky::new(m)?;
    let l = chol.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-8 * d.re
    });
    ok.then_some(chol)
}

pub fn cholesky(m: &CMatrix, what: &'static str) -> Result<Cholesky<C64, Dyn>> {
    try_cholesky(hermitian_part(m)).ok_or(Error::Singular { what })
}

/// `log2 det` of a Cholesky factor's matrix.
pub fn log2_det_from_cholesky(chol: &Cholesky<C64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>() / std::f64::consts::LN_2
}

/// `log2 det` of a Hermitian positive definite matrix.
///
/// Uses a Cholesky factorisation. If that fails the matrix is repaired by
/// clamping its eigenvalues at [`EIGEN_FLOOR`] relative to the largest one,
/// and the process-wide repair counter is bumped.
pub fn log2_det_hpd(m: &CMatrix) -> Result<f64> {
    if let Some(chol) = try_cholesky(hermitian_part(m)) {
        return Ok(log2_det_from_cholesky(&chol));
    }
    let (values, _) = eigh(m);
    let scale = spectral_scale(&values);
    if scale == 0.0 || values.max() <= 0.0 {
        return Err(Error::Singular {
            what: "log-det argument",
        });
    }
    LOGDET_REPAIRS.fetch_add(1, Ordering::Relaxed);
    log::warn!(
        "cholesky failed for a {}x{} log-det argument (min eigenvalue {:e}); clamping",
        m.nrows(),
        m.ncols(),
        values.min()
    );
    let floor = EIGEN_FLOOR * scale;
    Ok(values.iter().map(|v| v.max(floor).log2()).sum())
}

pub fn block_diagonal(blocks: &[CMatrix]) -> CMatrix {
    let dim = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(dim, dim);
    let mut offset = 0;
    for b in blocks {
        let n = b.nrows();
        out.view_mut((offset, offset), (n, n)).copy_from(b);
        offset += n;
    }
    out
}

/// `Tr(a b)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Largest modulus among the off-diagonal entries.
pub fn max_offdiag_abs(m: &CMatrix) -> f64 {
    let mut max = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                max = max.max(m[(i, j)].norm());
            }
        }
    }
    max
}

pub fn real_diagonal(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(
        values.len(),
        values.iter().map(|&v| C64::new(v, 0.0)),
    ))
}
