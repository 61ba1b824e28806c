//! Unrestricted least-squares VAR(p) in levels for the factors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ols, RankPolicy};
use crate::serial::{matrices_to_json, MatrixJson};
use crate::vecm::estimate_k_with_warnings;

#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    /// `A_1..A_p`.
    pub coeffs: Vec<DMatrix<f64>>,
    pub intercept: Option<DVector<f64>>,
    /// `r x (T + 1 - p)`: one residual per regression observation.
    pub residuals: DMatrix<f64>,
    pub shock_loading: DMatrix<f64>,
    pub p: usize,
    pub q: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VarJson {
    pub p: usize,
    pub q: usize,
    pub coefficients: Vec<MatrixJson>,
    pub intercept: Option<Vec<f64>>,
    pub shock_loading: MatrixJson,
    pub residuals: MatrixJson,
}

impl VarModel {
    pub fn to_json(&self) -> VarJson {
        VarJson {
            p: self.p,
            q: self.q,
            coefficients: matrices_to_json(&self.coeffs),
            intercept: self.intercept.as_ref().map(|v| v.iter().copied().collect()),
            shock_loading: MatrixJson::from(&self.shock_loading),
            residuals: MatrixJson::from(&self.residuals),
        }
    }
}

/// Stacked design: `F_t` against `F_{t-1}..F_{t-p}` for `t = p..=T`.
pub(crate) fn var_design(f: &DMatrix<f64>, p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let r = f.nrows();
    let n_obs = f.ncols() - p;
    let y = f.columns(p, n_obs).into_owned();
    let mut x = DMatrix::zeros(r * p, n_obs);
    for k in 1..=p {
        x.view_mut(((k - 1) * r, 0), (r, n_obs)).copy_from(&f.columns(p - k, n_obs));
    }
    (y, x)
}

/// Equation-by-equation OLS. Rank-deficient regressors fall back to the
/// minimum-norm solution, so constant factors give `A_k = 0` and an
/// intercept equal to the constant.
pub fn var_ls(f: &DMatrix<f64>, p: usize, intercept: bool, q: usize) -> Result<VarModel> {
    let r = f.nrows();
    if p == 0 {
        return Err(Error::InvalidInput("VAR lag order must be at least 1".into()));
    }
    if q == 0 || q > r {
        return Err(Error::InvalidInput(format!("shock count {q} must lie in 1..={r}")));
    }
    let t = f.ncols().saturating_sub(1);
    if t <= r * p + 1 {
        return Err(Error::InvalidInput(format!("T = {t} is too short for a VAR({p}) in {r} factors")));
    }
    let (y, x) = var_design(f, p);
    let fit = ols(&y, &x, intercept, RankPolicy::PseudoInverse)?;
    let mut warnings = Vec::new();
    if fit.rank < x.nrows() {
        let msg = format!("VAR regressors have rank {} < {}; minimum-norm solution used", fit.rank, x.nrows());
        warnings.push(msg);
    }
    let coeffs = (0..p).map(|k| fit.coef.columns(k * r, r).into_owned()).collect();
    let (shock_loading, k_warn) = estimate_k_with_warnings(&fit.residuals, q)?;
    warnings.extend(k_warn);
    Ok(VarModel { coeffs, intercept: fit.intercept, residuals: fit.residuals, shock_loading, p, q, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ar1(rng: &mut ChaCha8Rng, a: f64, t: usize) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(1, t + 1);
        for s in 1..=t {
            f[(0, s)] = a * f[(0, s - 1)] + rng.sample::<f64, _>(StandardNormal);
        }
        f
    }

    #[test]
    fn recovers_a_stationary_ar1() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = var_ls(&ar1(&mut rng, 0.5, 100_000), 1, true, 1).unwrap();
        let a = m.coeffs[0][(0, 0)];
        assert!((0.49..=0.51).contains(&a), "{a}");
    }

    #[test]
    fn random_walk_coefficient_is_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = var_ls(&ar1(&mut rng, 1.0, 10_000), 1, true, 1).unwrap();
        assert!((m.coeffs[0][(0, 0)] - 1.0).abs() < 0.02);
    }

    #[test]
    fn constant_factors_use_the_minimum_norm_solution() {
        let f = DMatrix::from_fn(2, 30, |i, _| [3.0, -1.0][i]);
        let m = var_ls(&f, 1, true, 1).unwrap();
        assert!(m.coeffs[0].iter().all(|v| v.abs() < 1e-12));
        let h = m.intercept.unwrap();
        assert!((h[0] - 3.0).abs() < 1e-12 && (h[1] + 1.0).abs() < 1e-12);
        assert!(!m.warnings.is_empty());
    }

    #[test]
    fn exact_dynamics_are_recovered() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.3, 0.7]);
        let mut f = DMatrix::zeros(2, 12);
        f.set_column(0, &DVector::from_vec(vec![1.0, 0.5]));
        f.set_column(1, &DVector::from_vec(vec![-0.4, 2.0]));
        // Two independent starting vectors keep the regressors full rank.
        for t in 2..12 {
            let next = &a * f.column(t - 1);
            f.set_column(t, &next);
        }
        let m = var_ls(&f.columns(1, 11).into_owned(), 1, false, 1).unwrap();
        assert!((&m.coeffs[0] - &a).abs().max() < 1e-10);
    }

    #[test]
    fn residuals_are_orthogonal_and_fits_reproduce_the_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = DMatrix::from_fn(3, 400, |_, _| rng.sample::<f64, _>(StandardNormal));
        let f = crate::panel::integrate(&f, &DVector::zeros(3)).unwrap();
        let m = var_ls(&f, 2, true, 2).unwrap();
        let (y, x) = var_design(&f, 2);
        let scale = m.residuals.norm() * x.norm();
        assert!((&m.residuals * x.transpose()).abs().max() < 1e-8 * scale);
        let mut fitted = &m.coeffs[0] * x.rows(0, 3) + &m.coeffs[1] * x.rows(3, 3);
        for mut col in fitted.column_iter_mut() {
            col += m.intercept.as_ref().unwrap();
        }
        assert!((fitted + &m.residuals - &y).abs().max() < 1e-8);
        let dy = &y - x.rows(0, 3);
        let dfit = (&y - &m.residuals) - x.rows(0, 3);
        assert!((dfit + &m.residuals - dy).abs().max() < 1e-8);
    }

    #[test]
    fn short_samples_are_rejected() {
        let f = DMatrix::zeros(3, 5);
        assert!(matches!(var_ls(&f, 2, true, 1), Err(Error::InvalidInput(_))));
    }
}
