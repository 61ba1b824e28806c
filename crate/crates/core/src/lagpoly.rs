//! Matrix lag polynomials `A(L) = I - A_1 L - ... - A_s L^s`.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// `r·s x r·s` companion matrix of `A_1..A_s`.
pub fn companion_matrix(coeffs: &[DMatrix<f64>]) -> DMatrix<f64> {
    let s = coeffs.len();
    if s == 0 {
        return DMatrix::zeros(0, 0);
    }
    let r = coeffs[0].nrows();
    let mut c = DMatrix::zeros(r * s, r * s);
    for (k, a) in coeffs.iter().enumerate() {
        c.view_mut((0, k * r), (r, r)).copy_from(a);
    }
    for k in 1..s {
        c.view_mut((k * r, (k - 1) * r), (r, r)).fill_with_identity();
    }
    c
}

/// Eigenvalues of the companion matrix (inverse roots of `det A(z)`).
pub fn companion_eigenvalues(coeffs: &[DMatrix<f64>]) -> Vec<Complex64> {
    let c = companion_matrix(coeffs);
    if c.nrows() == 0 {
        return Vec::new();
    }
    c.complex_eigenvalues().iter().copied().collect()
}

/// Number of companion eigenvalues within `tol` of `1`.
pub fn count_unit_roots(coeffs: &[DMatrix<f64>], tol: f64) -> usize {
    companion_eigenvalues(coeffs)
        .iter()
        .filter(|z| (*z - Complex64::new(1.0, 0.0)).norm() < tol)
        .count()
}

/// `A(1) = I - Σ A_k`.
pub fn value_at_one(coeffs: &[DMatrix<f64>], dim: usize) -> DMatrix<f64> {
    let mut a1 = DMatrix::identity(dim, dim);
    for a in coeffs {
        a1 -= a;
    }
    a1
}

/// Singular values of `A(1)` below `tol`: the multiplicity of the root at `z = 1`.
pub fn unit_root_rank_deficiency(coeffs: &[DMatrix<f64>], dim: usize, tol: f64) -> usize {
    value_at_one(coeffs, dim).singular_values().iter().filter(|s| **s < tol).count()
}
