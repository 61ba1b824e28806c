//! Principal-component estimation of loadings and I(1) factors.
//!
//! Loadings come from the eigenvectors of the uncentred covariance of first
//! differences, scaled so that `Λ'Λ / n = I_r`. Factor levels are formed
//! directly from the (detrended) levels, `F_t = Λ' x_t / n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, sym_eigen_desc, symmetrize};
use crate::panel::difference;
use crate::serial::MatrixJson;

/// Tag recorded in serialized models for the eigenvector sign rule.
pub const SIGN_CONVENTION: &str = "largest-abs-entry-positive";

/// Above this dimension `top_eigen` switches to subspace iteration.
pub const FULL_EIGEN_MAX_DIM: usize = 2000;

/// `diffs diffs' / T` without centring.
pub fn covariance_uncentered(diffs: &DMatrix<f64>) -> DMatrix<f64> {
    let t = diffs.ncols().max(1) as f64;
    symmetrize(&(diffs * diffs.transpose() / t))
}

/// Flips each column so that its entry of largest absolute value is positive
/// (the first such entry wins ties).
pub fn apply_sign_convention(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0_f64;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col.len() > 0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// The `k` largest eigenvalues (descending) of a symmetric matrix and their
/// orthonormal eigenvectors under the sign convention.
pub fn top_eigen(sym: &DMatrix<f64>, k: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = sym.nrows();
    if !is_symmetric(sym, 1e-10) {
        return Err(Error::InvalidInput("top_eigen requires a symmetric matrix".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("requested {k} eigenpairs of a {n}x{n} matrix")));
    }
    let (values, mut vectors) = if n <= FULL_EIGEN_MAX_DIM {
        let (vals, vecs) = sym_eigen_desc(sym);
        (vals.rows(0, k).into_owned(), vecs.columns(0, k).into_owned())
    } else {
        subspace_iteration(sym, k)
    };
    apply_sign_convention(&mut vectors);
    Ok((values, vectors))
}

/// Block power iteration with Rayleigh-Ritz extraction, for large `n`.
pub(crate) fn subspace_iteration(a: &DMatrix<f64>, k: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let block = (k + 8).min(n);
    // Deterministic start: a fixed pseudo-random basis.
    let mut rng_state = 0x2545_f491_4f6c_dd1d_u64;
    let mut q = DMatrix::from_fn(n, block, |_, _| {
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        (rng_state as f64 / u64::MAX as f64) - 0.5
    });
    q = q.qr().q();
    let mut prev = DVector::from_element(k, f64::INFINITY);
    let mut ritz_vals = DVector::zeros(block);
    let mut ritz_vecs = DMatrix::zeros(block, block);
    for _ in 0..2000 {
        let z = a * &q;
        q = z.qr().q();
        let small = q.transpose() * a * &q;
        let (vals, vecs) = sym_eigen_desc(&small);
        ritz_vals = vals;
        ritz_vecs = vecs;
        let head = ritz_vals.rows(0, k).into_owned();
        let scale = head[0].abs().max(f64::MIN_POSITIVE);
        if (&head - &prev).abs().max() <= 1e-13 * scale {
            break;
        }
        prev = head;
    }
    let vectors = &q * ritz_vecs.columns(0, k);
    (ritz_vals.rows(0, k).into_owned(), vectors)
}

/// Estimated loadings and factor paths.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    /// `n x r`, normalised so that `Λ'Λ / n = I_r`.
    pub loadings: DMatrix<f64>,
    /// `r x (T+1)` factor levels.
    pub factors: DMatrix<f64>,
    /// `r x T` factor differences.
    pub diff_factors: DMatrix<f64>,
    /// Leading `r` eigenvalues of the differenced covariance, descending.
    pub eigvals: DVector<f64>,
    pub r: usize,
}

impl FactorModel {
    /// Common component `Λ F` (`n x (T+1)`).
    pub fn common_component(&self) -> DMatrix<f64> {
        &self.loadings * &self.factors
    }

    /// Idiosyncratic component `x - Λ F`.
    pub fn idiosyncratic(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x - self.common_component()
    }

    pub fn to_json(&self) -> FactorModelJson {
        FactorModelJson {
            r: self.r,
            eigvals: self.eigvals.iter().copied().collect(),
            sign_convention: SIGN_CONVENTION.to_string(),
            loadings: MatrixJson::from(&self.loadings),
            factors: MatrixJson::from(&self.factors),
        }
    }
}

/// Serialized form of a [`FactorModel`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FactorModelJson {
    pub r: usize,
    pub eigvals: Vec<f64>,
    pub sign_convention: String,
    pub loadings: MatrixJson,
    pub factors: MatrixJson,
}

/// Principal-component loadings and factors of a (detrended) `n x (T+1)` panel.
pub fn estimate_factors(x: &DMatrix<f64>, r: usize) -> Result<FactorModel> {
    let n = x.nrows();
    let dx = difference(x)?;
    let t = dx.ncols();
    if r == 0 || r > n.min(t) {
        return Err(Error::InvalidInput(format!("r = {r} must lie in 1..=min(n, T) = {}", n.min(t))));
    }
    let gamma0 = covariance_uncentered(&dx);
    let (eigvals, w) = top_eigen(&gamma0, r)?;
    let lead = eigvals[0];
    if !(lead > 0.0) || eigvals[r - 1] <= 1e-12 * lead {
        return Err(Error::Rank(format!(
            "r = {r} exceeds the numerical rank of the differenced covariance (eigenvalues {:?})",
            eigvals.as_slice()
        )));
    }
    let sqrt_n = (n as f64).sqrt();
    let loadings = &w * sqrt_n;
    let factors = loadings.transpose() * x / n as f64;
    let diff_factors = loadings.transpose() * &dx / n as f64;
    Ok(FactorModel { loadings, factors, diff_factors, eigvals, r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn random_walk_panel(rng: &mut ChaCha8Rng, n: usize, t: usize, r: usize, noise: f64) -> DMatrix<f64> {
        let lam = randn(rng, n, r);
        let shocks = randn(rng, r, t);
        let f = crate::panel::integrate(&shocks, &DVector::zeros(r)).unwrap();
        let mut x = lam * f;
        if noise > 0.0 {
            let e = randn(rng, n, t);
            let xi = crate::panel::integrate(&(e * noise), &DVector::zeros(n)).unwrap();
            x += xi;
        }
        x
    }

    #[test]
    fn covariance_examples() {
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, -1.0]);
        assert_eq!(covariance_uncentered(&v), &v * v.transpose());
        assert_eq!(covariance_uncentered(&DMatrix::zeros(2, 4)), DMatrix::zeros(2, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = randn(&mut rng, 3, 5);
        let c = covariance_uncentered(&d);
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for t in 0..5 {
                    s += d[(i, t)] * d[(j, t)];
                }
                assert!((c[(i, j)] - s / 5.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn top_eigen_examples() {
        let (vals, vecs) = top_eigen(&DMatrix::identity(3, 3), 2).unwrap();
        assert_eq!(vals.as_slice(), &[1.0, 1.0]);
        assert!((vecs.transpose() * &vecs - DMatrix::identity(2, 2)).abs().max() < 1e-12);

        let (vals, vecs) = top_eigen(&DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])), 1).unwrap();
        assert_eq!(vals[0], 4.0);
        assert!((vecs[(0, 0)] - 1.0).abs() < 1e-15 && vecs[(1, 0)].abs() < 1e-15);

        let non_sym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(top_eigen(&non_sym, 1).is_err());
        assert!(top_eigen(&DMatrix::identity(2, 2), 3).is_err());
        assert!(top_eigen(&DMatrix::identity(2, 2), 0).is_err());
    }

    // Closed-form eigenvalues of a symmetric 2x2 block.
    fn eig2(a: f64, b: f64, d: f64) -> (f64, f64) {
        let m = 0.5 * (a + d);
        let r = (0.25 * (a - d).powi(2) + b * b).sqrt();
        (m + r, m - r)
    }

    #[test]
    fn top_eigen_matches_block_diagonal_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = DMatrix::zeros(4, 4);
        let mut expected = Vec::new();
        for blk in 0..2 {
            let (p, q, s) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let o = 2 * blk;
            a[(o, o)] = p;
            a[(o, o + 1)] = q;
            a[(o + 1, o)] = q;
            a[(o + 1, o + 1)] = s;
            let (l1, l2) = eig2(p, q, s);
            expected.push(l1);
            expected.push(l2);
        }
        expected.sort_by(|x, y| y.total_cmp(x));
        let (vals, vecs) = top_eigen(&a, 4).unwrap();
        for (v, e) in vals.iter().zip(&expected) {
            assert!((v - e).abs() < 1e-10);
        }
        for j in 0..4 {
            let resid = &a * vecs.column(j) - vecs.column(j) * vals[j];
            assert!(resid.abs().max() < 1e-9);
        }
        // A random dense symmetric matrix as well.
        let g = randn(&mut rng, 4, 4);
        let s = symmetrize(&g);
        let (vals, vecs) = top_eigen(&s, 4).unwrap();
        for j in 0..4 {
            assert!((&s * vecs.column(j) - vecs.column(j) * vals[j]).abs().max() < 1e-9);
        }
    }

    #[test]
    fn subspace_iteration_agrees_with_full_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_walk_panel(&mut rng, 60, 120, 3, 0.5);
        let c = covariance_uncentered(&difference(&x).unwrap());
        let (full_vals, mut full_vecs) = {
            let (v, w) = sym_eigen_desc(&c);
            (v.rows(0, 3).into_owned(), w.columns(0, 3).into_owned())
        };
        apply_sign_convention(&mut full_vecs);
        let (vals, mut vecs) = subspace_iteration(&c, 3);
        apply_sign_convention(&mut vecs);
        assert!((vals - full_vals).abs().max() < 1e-8 * c.norm());
        assert!((vecs - full_vecs).abs().max() < 1e-6);
    }

    #[test]
    fn noiseless_one_factor_panel_is_reproduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_walk_panel(&mut rng, 20, 80, 1, 0.0);
        let fm = estimate_factors(&x, 1).unwrap();
        assert!((fm.common_component() - &x).abs().max() < 1e-8 * crate::linalg::max_abs(&x).max(1.0));
    }

    #[test]
    fn fitted_model_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_walk_panel(&mut rng, 40, 100, 3, 1.0);
        let fm = estimate_factors(&x, 3).unwrap();
        let n = 40.0;
        let norm = fm.loadings.transpose() * &fm.loadings / n;
        assert!((norm - DMatrix::identity(3, 3)).abs().max() < 1e-10);

        let cov = covariance_uncentered(&fm.diff_factors);
        for i in 0..3 {
            assert!((cov[(i, i)] - fm.eigvals[i] / n).abs() < 1e-8);
            for j in 0..3 {
                if i != j {
                    assert!(cov[(i, j)].abs() < 1e-8);
                }
            }
        }
        let df = difference(&fm.factors).unwrap();
        assert!((df - &fm.diff_factors).abs().max() < 1e-10);

        // Residual orthogonal to the differenced factors.
        let dx = difference(&x).unwrap();
        let resid = &dx - &fm.loadings * &fm.diff_factors;
        let cross = &resid * fm.diff_factors.transpose();
        assert!(cross.abs().max() < 1e-8 * dx.norm_squared());
    }

    #[test]
    fn rank_check_and_range_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_walk_panel(&mut rng, 10, 50, 1, 0.0);
        assert!(matches!(estimate_factors(&x, 2), Err(Error::Rank(_))));
        assert!(estimate_factors(&x, 0).is_err());
        assert!(estimate_factors(&x, 11).is_err());
    }

    fn projector(l: &DMatrix<f64>) -> DMatrix<f64> {
        let g = (l.transpose() * l).try_inverse().unwrap();
        l * g * l.transpose()
    }

    #[test]
    fn scale_and_permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_walk_panel(&mut rng, 25, 90, 2, 0.7);
        let fm = estimate_factors(&x, 2).unwrap();
        let scaled = estimate_factors(&(&x * 3.5), 2).unwrap();
        assert!((projector(&fm.loadings) - projector(&scaled.loadings)).abs().max() < 1e-9);
        assert!((scaled.common_component() - fm.common_component() * 3.5).abs().max() < 1e-8 * x.norm());

        let perm: Vec<usize> = (0..25).rev().collect();
        let xp = DMatrix::from_fn(25, x.ncols(), |i, t| x[(perm[i], t)]);
        let fp = estimate_factors(&xp, 2).unwrap();
        for j in 0..2 {
            // Compare up to the sign of each factor.
            let s = if (fp.factors.row(j) - fm.factors.row(j)).abs().max() < 1e-8 { 1.0 } else { -1.0 };
            assert!((fp.factors.row(j) * s - fm.factors.row(j)).abs().max() < 1e-8);
            for i in 0..25 {
                assert!((fp.loadings[(i, j)] * s - fm.loadings[(perm[i], j)]).abs() < 1e-8);
            }
        }
    }
}
