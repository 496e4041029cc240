//! Small dense Hermitian helpers shared by the state and process code.
//!
//! Everything here works on `DMatrix<Complex64>`; the 2×2 and 4×4 callers
//! convert through [`to_dyn`] / [`from_dyn`].

use nalgebra::{DMatrix, SMatrix, SymmetricEigen};
use num_complex::Complex64;

/// Eigenvalues at or above this (but below zero) are treated as round-off and clamped.
pub const PSD_FLOOR: f64 = -1e-9;

pub(crate) fn to_dyn<const N: usize>(m: &SMatrix<Complex64, N, N>) -> DMatrix<Complex64> {
    DMatrix::from_column_slice(N, N, m.as_slice())
}

pub(crate) fn from_dyn<const N: usize>(m: &DMatrix<Complex64>) -> SMatrix<Complex64, N, N> {
    SMatrix::from_column_slice(m.as_slice())
}

pub(crate) fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()).scale(0.5)
}

/// Largest elementwise deviation from Hermiticity.
pub(crate) fn hermiticity_error(m: &DMatrix<Complex64>) -> f64 {
    (m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub(crate) fn eigh(m: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub(crate) fn min_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    eigh(m).0[0]
}

/// Rebuilds `V diag(f(λ)) V†`.
pub(crate) fn spectral_map(m: &DMatrix<Complex64>, f: impl Fn(f64) -> f64) -> DMatrix<Complex64> {
    let (values, vectors) = eigh(m);
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (k, &lambda) in values.iter().enumerate() {
        let w = f(lambda);
        if w == 0.0 {
            continue;
        }
        let v = vectors.column(k);
        out += (v * v.adjoint()).scale(w);
    }
    out
}

/// Eigenvalues below this fraction of the largest one are round-off from a
/// rank-deficient matrix and are zeroed before taking square roots.
const RANK_CUTOFF: f64 = 1e-14;

/// Square root of a positive semidefinite matrix. Eigenvalues in
/// `[PSD_FLOOR, 0)` are clamped to zero; anything more negative is refused.
pub(crate) fn psd_sqrt(m: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let (values, _) = eigh(m);
    if values[0] < PSD_FLOOR {
        return None;
    }
    let cutoff = RANK_CUTOFF * values[values.len() - 1].max(0.0);
    Some(spectral_map(
        m,
        |l| if l <= cutoff { 0.0 } else { l.sqrt() },
    ))
}

/// Projection onto the PSD cone in Frobenius norm.
pub(crate) fn psd_projection(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    spectral_map(m, |l| l.max(0.0))
}

/// `tr √(√a b √a)` for PSD `a`, `b`. Returns `None` if either is not PSD
/// within [`PSD_FLOOR`].
///
/// Evaluated as the sum of singular values of `√a √b`, whose squares are the
/// eigenvalues of `√a b √a`; this keeps zero eigenvalues of rank-deficient
/// arguments from turning into `√ε` noise.
pub(crate) fn uhlmann_fidelity(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Option<f64> {
    let root_a = psd_sqrt(a)?;
    let root_b = psd_sqrt(b)?;
    let product = root_a * root_b;
    Some(product.singular_values().iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eigh_orders_and_reconstructs() {
        let m =
            DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let (values, vectors) = eigh(&m);
        assert!((values[0] - 1.0).abs() < 1e-14 && (values[1] - 3.0).abs() < 1e-14);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            2,
            values.iter().map(|&l| c(l, 0.0)),
        ));
        let back = &vectors * d * vectors.adjoint();
        assert!((back - m).norm() < 1e-13);
    }

    #[test]
    fn sqrt_clamps_tiny_negative_and_rejects_large() {
        let tiny = DMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-5e-10, 0.0)],
        );
        let r = psd_sqrt(&tiny).unwrap();
        assert!((r[(1, 1)]).norm() < 1e-15);
        let bad = DMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1e-6, 0.0)],
        );
        assert!(psd_sqrt(&bad).is_none());
    }
}
