//! Dense linear-algebra helpers shared by the estimators.
//!
//! Time series are stored with time running along columns: a panel of `n`
//! series observed `T` times is an `n x T` matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative singular-value threshold below which a regressor direction is
/// treated as numerically absent.
pub const RANK_TOL: f64 = 1e-10;

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `true` when `|a_ij - a_ji| <= tol * max(1, max|a|)` for every pair.
pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = max_abs(a).max(1.0);
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Full symmetric eigendecomposition with eigenvalues in descending order.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in idx.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Symmetric inverse square root of a positive definite matrix.
///
/// Fails when the condition number exceeds `max_cond`, naming the smallest
/// eigenvalue.
pub fn sym_inv_sqrt(a: &DMatrix<f64>, max_cond: f64, what: &str) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen_desc(a);
    let n = vals.len();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let largest = vals[0];
    let smallest = vals[n - 1];
    if largest <= 0.0 || smallest <= 0.0 || largest / smallest > max_cond {
        return Err(Error::Estimation(format!(
            "{what} is ill-conditioned: smallest eigenvalue {smallest:e}, largest {largest:e}"
        )));
    }
    let d = DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt()));
    Ok(&vecs * d * vecs.transpose())
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Lower-triangular Cholesky factor with positive diagonal.
pub fn lower_cholesky(spd: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(spd))
        .map(|c| c.l())
        .ok_or_else(|| Error::Rank("matrix is not positive definite".into()))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// diagonal of R forced positive).
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// How a least-squares solve treats a rank-deficient regressor matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankPolicy {
    /// Fail with [`Error::Rank`].
    Strict,
    /// Minimum-norm (pseudo-inverse) solution.
    PseudoInverse,
}

/// Result of a multivariate least-squares regression `y = coef * x (+ intercept) + e`.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// `m x k` coefficient matrix.
    pub coef: DMatrix<f64>,
    pub intercept: Option<DVector<f64>>,
    /// `m x N` residuals.
    pub residuals: DMatrix<f64>,
    /// Number of regressor directions kept by the solve.
    pub rank: usize,
}

fn row_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.ncols().max(1) as f64;
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum() / n))
}

fn center_rows(m: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mu) in means.iter().enumerate() {
        out.row_mut(i).add_scalar_mut(-mu);
    }
    out
}

/// Least squares of each row of `y` (`m x N`) on the rows of `x` (`k x N`).
///
/// With `intercept`, both sides are centred first so that the intercept
/// absorbs the means; a constant regressor then gets a zero slope under the
/// pseudo-inverse policy.
pub fn ols(y: &DMatrix<f64>, x: &DMatrix<f64>, intercept: bool, policy: RankPolicy) -> Result<OlsFit> {
    let n_obs = y.ncols();
    if x.ncols() != n_obs {
        return Err(Error::Dimension(format!(
            "regressand has {} observations, regressors have {}",
            n_obs,
            x.ncols()
        )));
    }
    let m = y.nrows();
    let k = x.nrows();
    let (yc, xc, y_mean, x_mean) = if intercept {
        let ym = row_means(y);
        let xm = row_means(x);
        (center_rows(y, &ym), center_rows(x, &xm), Some(ym), Some(xm))
    } else {
        (y.clone(), x.clone(), None, None)
    };

    let (coef, rank) = if k == 0 {
        (DMatrix::zeros(m, 0), 0)
    } else {
        let svd = xc.transpose().svd(true, true);
        let u = svd.u.as_ref().expect("u requested");
        let vt = svd.v_t.as_ref().expect("v_t requested");
        let s = &svd.singular_values;
        let smax = s.max();
        let cutoff = RANK_TOL * smax;
        let keep: Vec<usize> = (0..s.len()).filter(|&i| smax > 0.0 && s[i] > cutoff).collect();
        if keep.len() < k && policy == RankPolicy::Strict {
            return Err(Error::Rank(format!(
                "regressor matrix has numerical rank {} < {} (singular values {:?})",
                keep.len(),
                k,
                s.as_slice()
            )));
        }
        // coef = yc * U * S^+ * V'
        let mut coef = DMatrix::zeros(m, k);
        for &i in &keep {
            let proj = &yc * u.column(i) / s[i];
            coef += proj * vt.row(i);
        }
        (coef, keep.len())
    };

    let mut residuals = &yc - &coef * &xc;
    let intercept_vec = match (y_mean, x_mean) {
        (Some(ym), Some(xm)) => Some(&ym - &coef * &xm),
        _ => None,
    };
    if intercept_vec.is_none() {
        residuals = y - &coef * x;
    }
    Ok(OlsFit { coef, intercept: intercept_vec, residuals, rank })
}

/// Uncentred second moment `a b' / N` of two column-time matrices.
pub fn cross_moment(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols().max(1) as f64;
    a * b.transpose() / n
}
