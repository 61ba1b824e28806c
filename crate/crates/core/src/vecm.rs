//! Reduced-rank (Johansen) estimation of the singular VECM for the factors
//!
//! ```text
//! ΔF_t = h + α β' F_{t-1} + G_1 ΔF_{t-1} + ... + G_p ΔF_{t-p} + w_t,   w_t = K u_t
//! ```
//!
//! with the shock loading `K` recovered from the residual covariance and the
//! conversion to a VAR(p+1) in levels.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::top_eigen;
use crate::linalg::{cross_moment, ols, sym_eigen_desc, sym_inv_sqrt, symmetrize, RankPolicy};
use crate::panel::difference;
use crate::serial::{matrices_to_json, MatrixJson};

/// Condition number above which `S_11` is rejected.
pub const MAX_S11_CONDITION: f64 = 1e12;

/// Regression design for `t = p+1..=T`.
pub(crate) struct Design {
    /// `ΔF_t`, `r x N`.
    pub dy: DMatrix<f64>,
    /// `F_{t-1}`, `r x N`.
    pub level_lag: DMatrix<f64>,
    /// `ΔF_{t-1}, ..., ΔF_{t-p}` stacked, `r·p x N`.
    pub lagged_diffs: DMatrix<f64>,
}

pub(crate) fn design(f: &DMatrix<f64>, p: usize) -> Result<Design> {
    let r = f.nrows();
    let df = difference(f)?;
    let t = df.ncols();
    if t <= p {
        return Err(Error::InvalidInput(format!("{t} differences cannot support {p} lags")));
    }
    let n_obs = t - p;
    let dy = df.columns(p, n_obs).into_owned();
    let level_lag = f.columns(p, n_obs).into_owned();
    let mut lagged_diffs = DMatrix::zeros(r * p, n_obs);
    for j in 1..=p {
        lagged_diffs.view_mut(((j - 1) * r, 0), (r, n_obs)).copy_from(&df.columns(p - j, n_obs));
    }
    Ok(Design { dy, level_lag, lagged_diffs })
}

/// Residuals of `ΔF_t` (`e0`) and of `F_{t-1}` (`e1`) after regressing both
/// on `ΔF_{t-1}..ΔF_{t-p}` and, optionally, a constant. With `p = 0` and no
/// intercept both pass through unchanged.
pub fn concentrate(f: &DMatrix<f64>, p: usize, intercept: bool) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = design(f, p)?;
    let e0 = ols(&d.dy, &d.lagged_diffs, intercept, RankPolicy::Strict)?.residuals;
    let e1 = ols(&d.level_lag, &d.lagged_diffs, intercept, RankPolicy::Strict)?.residuals;
    Ok((e0, e1))
}

/// Fitted VECM.
#[derive(Debug, Clone, PartialEq)]
pub struct VecmModel {
    /// `r x c`, normalised so that `β' S_11 β = I_c`.
    pub beta: DMatrix<f64>,
    /// `r x c`.
    pub alpha: DMatrix<f64>,
    /// `G_1..G_p`.
    pub gamma: Vec<DMatrix<f64>>,
    pub intercept: Option<DVector<f64>>,
    /// `r x (T - p)`.
    pub residuals: DMatrix<f64>,
    /// `r x q` shock loading.
    pub shock_loading: DMatrix<f64>,
    pub p: usize,
    pub c: usize,
    pub q: usize,
    /// The `c` largest squared canonical correlations.
    pub eigvals: DVector<f64>,
    pub warnings: Vec<String>,
}

impl VecmModel {
    /// `Π = α β'`.
    pub fn pi(&self) -> DMatrix<f64> {
        &self.alpha * self.beta.transpose()
    }

    /// β rescaled so that its leading `c x c` block is the identity. For
    /// display only; estimation uses the `S_11` normalisation.
    pub fn beta_triangular(&self) -> Option<DMatrix<f64>> {
        let c = self.c;
        if c == 0 {
            return Some(self.beta.clone());
        }
        let head = self.beta.rows(0, c).into_owned().try_inverse()?;
        Some(&self.beta * head)
    }

    pub fn to_json(&self) -> VecmJson {
        VecmJson {
            p: self.p,
            c: self.c,
            q: self.q,
            eigvals: self.eigvals.iter().copied().collect(),
            beta: MatrixJson::from(&self.beta),
            alpha: MatrixJson::from(&self.alpha),
            gamma: matrices_to_json(&self.gamma),
            intercept: self.intercept.as_ref().map(|v| v.iter().copied().collect()),
            shock_loading: MatrixJson::from(&self.shock_loading),
            residuals: MatrixJson::from(&self.residuals),
            var_coefficients: matrices_to_json(&vecm_to_var(self)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VecmJson {
    pub p: usize,
    pub c: usize,
    pub q: usize,
    pub eigvals: Vec<f64>,
    pub beta: MatrixJson,
    pub alpha: MatrixJson,
    pub gamma: Vec<MatrixJson>,
    pub intercept: Option<Vec<f64>>,
    pub shock_loading: MatrixJson,
    pub residuals: MatrixJson,
    pub var_coefficients: Vec<MatrixJson>,
}

/// Two-step reduced-rank estimation.
///
/// 1. Concentrate out lagged differences (and the constant).
/// 2. Solve the canonical-correlation eigenproblem
///    `S_11^{-1/2} S_10 S_00^{-1} S_01 S_11^{-1/2} u = μ u`, keep the `c`
///    largest `μ` and set `β = S_11^{-1/2} U`.
/// 3. OLS of `ΔF_t` on `β'F_{t-1}`, lagged differences and the constant
///    gives `α`, `G_k`, `h` and the residuals `w_t`.
/// 4. `K` from the leading `q` eigenpairs of the residual covariance.
///
/// Any `0 <= c <= r` is accepted: `c = 0` is a VAR in differences and
/// `c = r` an unrestricted VAR in levels.
pub fn johansen(f: &DMatrix<f64>, p: usize, c: usize, intercept: bool, q: usize) -> Result<VecmModel> {
    let r = f.nrows();
    if c > r {
        return Err(Error::InvalidInput(format!("cointegration rank {c} exceeds the number of factors {r}")));
    }
    if q == 0 || q > r {
        return Err(Error::InvalidInput(format!("shock count {q} must lie in 1..={r}")));
    }
    let t = f.ncols().saturating_sub(1);
    if t < r * p + c + 5 {
        return Err(Error::InvalidInput(format!(
            "T = {t} is too short for r = {r}, p = {p}, c = {c} (need T >= r·p + c + 5)"
        )));
    }
    let d = design(f, p)?;
    let mut warnings = Vec::new();

    let (beta, eigvals) = if c == 0 {
        (DMatrix::zeros(r, 0), DVector::zeros(0))
    } else {
        let e0 = ols(&d.dy, &d.lagged_diffs, intercept, RankPolicy::Strict)?.residuals;
        let e1 = ols(&d.level_lag, &d.lagged_diffs, intercept, RankPolicy::Strict)?.residuals;
        let s00 = symmetrize(&cross_moment(&e0, &e0));
        let s11 = symmetrize(&cross_moment(&e1, &e1));
        let s01 = cross_moment(&e0, &e1);
        let s11_isqrt = sym_inv_sqrt(&s11, MAX_S11_CONDITION, "S_11")?;
        let s00_inv = nalgebra::Cholesky::new(s00.clone())
            .map(|ch| ch.inverse())
            .ok_or_else(|| Error::Estimation("S_00 is not positive definite".into()))?;
        let m = symmetrize(&(&s11_isqrt * s01.transpose() * &s00_inv * &s01 * &s11_isqrt));
        let (vals, vecs) = sym_eigen_desc(&m);
        let mut kept = DVector::zeros(c);
        for j in 0..c {
            let v = vals[j];
            if !(-1e-8..=1.0 + 1e-8).contains(&v) {
                let msg = format!("generalized eigenvalue {v:e} outside [0, 1]; clipped");
                warnings.push(msg);
            }
            kept[j] = v.clamp(0.0, 1.0);
        }
        let mut beta = &s11_isqrt * vecs.columns(0, c);
        crate::factors::apply_sign_convention(&mut beta);
        (beta, kept)
    };

    let ect = beta.transpose() * &d.level_lag;
    let mut regressors = DMatrix::zeros(c + r * p, d.dy.ncols());
    regressors.rows_mut(0, c).copy_from(&ect);
    regressors.rows_mut(c, r * p).copy_from(&d.lagged_diffs);
    let fit = ols(&d.dy, &regressors, intercept, RankPolicy::Strict)?;
    let alpha = fit.coef.columns(0, c).into_owned();
    let gamma = (0..p).map(|j| fit.coef.columns(c + j * r, r).into_owned()).collect();
    let (shock_loading, k_warn) = estimate_k_with_warnings(&fit.residuals, q)?;
    warnings.extend(k_warn);

    Ok(VecmModel {
        beta,
        alpha,
        gamma,
        intercept: fit.intercept,
        residuals: fit.residuals,
        shock_loading,
        p,
        c,
        q,
        eigvals,
        warnings,
    })
}

/// `K = W_q D_q^{1/2}` from the leading `q` eigenpairs of the residual
/// covariance, so `K K'` is its best rank-`q` approximation.
pub fn estimate_k(residuals: &DMatrix<f64>, q: usize) -> Result<DMatrix<f64>> {
    estimate_k_with_warnings(residuals, q).map(|(k, _)| k)
}

pub(crate) fn estimate_k_with_warnings(residuals: &DMatrix<f64>, q: usize) -> Result<(DMatrix<f64>, Vec<String>)> {
    let r = residuals.nrows();
    if q > r {
        return Err(Error::InvalidInput(format!("q = {q} exceeds the residual dimension {r}")));
    }
    if q == 0 {
        return Ok((DMatrix::zeros(r, 0), Vec::new()));
    }
    estimate_k_from_cov(&symmetrize(&cross_moment(residuals, residuals)), q)
}

fn estimate_k_from_cov(cov: &DMatrix<f64>, q: usize) -> Result<(DMatrix<f64>, Vec<String>)> {
    let (vals, vecs) = top_eigen(cov, q)?;
    let mut warnings = Vec::new();
    let lead = vals[0].max(0.0);
    if vals[q - 1] <= 1e-12 * lead {
        let msg = format!("q = {q} exceeds the numerical rank of the residual covariance; eigenvalues floored at 0");
        warnings.push(msg);
    }
    let scale = DMatrix::from_diagonal(&vals.map(|v| v.max(0.0).sqrt()));
    Ok((vecs * scale, warnings))
}

/// Shock loading truncated in the metric of the loadings: `Λ K K' Λ'` is the
/// best rank-`q` approximation of `Λ Σ_u Λ'`, with `gram = Λ'Λ/n`. Agrees
/// with [`estimate_k`] when `gram = I` and, unlike it, is equivariant under
/// any invertible rotation of the factors.
pub fn estimate_k_in_metric(residuals: &DMatrix<f64>, q: usize, gram: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = residuals.nrows();
    if q == 0 || q > r {
        return estimate_k(residuals, q);
    }
    if gram.shape() != (r, r) {
        return Err(Error::Dimension(format!("loading Gram matrix is {:?}, expected {r}x{r}", gram.shape())));
    }
    let (gv, gvec) = sym_eigen_desc(gram);
    if !(gv[r - 1] > 1e-12 * gv[0].max(f64::MIN_POSITIVE)) {
        return Err(Error::Rank("loading Gram matrix is not positive definite".into()));
    }
    let root = &gvec * DMatrix::from_diagonal(&gv.map(f64::sqrt)) * gvec.transpose();
    let root_inv = &gvec * DMatrix::from_diagonal(&gv.map(|v| 1.0 / v.sqrt())) * gvec.transpose();
    let k = estimate_k_from_cov(&symmetrize(&(&root * cross_moment(residuals, residuals) * &root)), q)?.0;
    Ok(root_inv * k)
}

/// VAR(p+1) coefficients implied by the VECM:
/// `A_1 = I + Π + G_1`, `A_k = G_k - G_{k-1}`, `A_{p+1} = -G_p`.
pub fn vecm_to_var(m: &VecmModel) -> Vec<DMatrix<f64>> {
    let r = m.beta.nrows();
    let pi = m.pi();
    let p = m.gamma.len();
    let mut out = Vec::with_capacity(p + 1);
    let mut a1 = DMatrix::identity(r, r) + pi;
    if p > 0 {
        a1 += &m.gamma[0];
    }
    out.push(a1);
    for k in 1..p {
        out.push(&m.gamma[k] - &m.gamma[k - 1]);
    }
    if p > 0 {
        out.push(-&m.gamma[p - 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagpoly::unit_root_rank_deficiency;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn simulate_var(rng: &mut ChaCha8Rng, a: &[DMatrix<f64>], t: usize, sd: f64) -> DMatrix<f64> {
        let r = a[0].nrows();
        let mut f = DMatrix::zeros(r, t + 1);
        for s in 1..=t {
            let mut next = randn(rng, r, 1).column(0) * sd;
            for (k, ak) in a.iter().enumerate() {
                if s > k {
                    next += ak * f.column(s - 1 - k);
                }
            }
            f.set_column(s, &next);
        }
        f
    }

    #[test]
    fn concentrate_passes_through_without_regressors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = randn(&mut rng, 3, 30);
        let (e0, e1) = concentrate(&f, 0, false).unwrap();
        assert_eq!(e0, difference(&f).unwrap());
        assert_eq!(e1, f.columns(0, 29).into_owned());
    }

    #[test]
    fn constant_factor_path_has_zero_e0() {
        let f = DMatrix::from_element(2, 40, 3.0);
        let (e0, _) = concentrate(&f, 0, true).unwrap();
        assert!(e0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn concentrated_residuals_are_orthogonal_to_regressors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = crate::panel::integrate(&randn(&mut rng, 3, 200), &DVector::zeros(3)).unwrap();
        let (e0, e1) = concentrate(&f, 2, true).unwrap();
        let d = design(&f, 2).unwrap();
        let x = &d.lagged_diffs;
        for e in [&e0, &e1] {
            assert!((e * x.transpose()).abs().max() < 1e-9 * (e.norm() * x.norm()).max(1.0));
            for i in 0..3 {
                assert!(e.row(i).sum().abs() < 1e-9 * e.norm().max(1.0));
            }
        }
        // Normal-equations oracle with an explicit constant column.
        let n_obs = x.ncols();
        let mut xa = DMatrix::from_element(x.nrows() + 1, n_obs, 1.0);
        xa.rows_mut(0, x.nrows()).copy_from(x);
        let coef = (d.dy.clone() * xa.transpose()) * (&xa * xa.transpose()).try_inverse().unwrap();
        let oracle = &d.dy - coef * &xa;
        assert!((oracle - e0).abs().max() < 1e-9);
    }

    #[test]
    fn collinear_lags_are_a_rank_error() {
        let t = 50;
        let base: Vec<f64> = (0..=t).map(|s| (s as f64 * 0.3).sin() * s as f64).collect();
        let f = DMatrix::from_fn(2, t + 1, |_, s| base[s]);
        assert!(matches!(concentrate(&f, 1, true), Err(Error::Rank(_))));
    }

    fn angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let c = (a.dot(b) / (a.norm() * b.norm())).abs().min(1.0);
        c.acos()
    }

    #[test]
    fn recovers_a_constructed_cointegrating_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = 5000;
        let walk = crate::panel::integrate(&randn(&mut rng, 1, t), &DVector::zeros(1)).unwrap();
        let noise = randn(&mut rng, 1, t + 1);
        let mut f = DMatrix::zeros(2, t + 1);
        f.row_mut(0).copy_from(&walk.row(0));
        f.row_mut(1).copy_from(&(walk.row(0) + noise.row(0)));
        let m = johansen(&f, 1, 1, true, 2).unwrap();
        let b = m.beta.column(0).into_owned();
        assert!(angle(&b, &DVector::from_vec(vec![1.0, -1.0])) < 0.05);
        let s = b.transpose() * {
            let (_, e1) = concentrate(&f, 1, true).unwrap();
            cross_moment(&e1, &e1)
        } * &b;
        assert!((s[(0, 0)] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn stationary_factors_give_large_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = randn(&mut rng, 3, 5001);
        let m = johansen(&f, 1, 2, true, 3).unwrap();
        assert!(m.eigvals.iter().all(|v| *v > 0.3 && *v <= 1.0), "{}", m.eigvals);
    }

    #[test]
    fn residuals_are_orthogonal_and_centred() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a1 = DMatrix::from_row_slice(3, 3, &[1.3, 0.1, 0.0, 0.0, 0.5, 0.1, 0.1, 0.0, 0.4]);
        let a2 = DMatrix::from_row_slice(3, 3, &[-0.3, -0.1, 0.0, 0.0, 0.0, 0.0, -0.1, 0.0, 0.0]);
        let f = simulate_var(&mut rng, &[a1, a2], 600, 1.0);
        let m = johansen(&f, 1, 2, true, 2).unwrap();
        assert_eq!(m.residuals.ncols(), 600 - 1);
        for i in 0..3 {
            assert!(m.residuals.row(i).sum().abs() / 599.0 < 1e-10);
        }
        let d = design(&f, 1).unwrap();
        let ect = m.beta.transpose() * &d.level_lag;
        let scale = m.residuals.norm() * (ect.norm() + d.lagged_diffs.norm());
        assert!((&m.residuals * ect.transpose()).abs().max() < 1e-8 * scale);
        assert!((&m.residuals * d.lagged_diffs.transpose()).abs().max() < 1e-8 * scale);
        // Two-step α agrees with S_01 β (β' S_11 β)^{-1}.
        let (e0, e1) = concentrate(&f, 1, true).unwrap();
        let s01 = cross_moment(&e0, &e1);
        let s11 = cross_moment(&e1, &e1);
        let alpha = &s01 * &m.beta * (m.beta.transpose() * s11 * &m.beta).try_inverse().unwrap();
        assert!((alpha - &m.alpha).abs().max() < 1e-8);
        // rank(αβ') = c and exactly r - c unit roots in the VAR form.
        let sv = m.pi().singular_values();
        assert_eq!(sv.iter().filter(|s| **s > 1e-10).count(), 2);
        assert_eq!(unit_root_rank_deficiency(&vecm_to_var(&m), 3, 1e-6), 1);
    }

    #[test]
    fn ill_conditioned_s11_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = crate::panel::integrate(&randn(&mut rng, 1, 300), &DVector::zeros(1)).unwrap();
        let f = DMatrix::from_fn(2, 301, |i, t| w[(0, t)] * (i + 1) as f64);
        match johansen(&f, 0, 1, false, 1) {
            Err(Error::Estimation(msg)) => assert!(msg.contains("smallest eigenvalue")),
            other => panic!("expected estimation error, got {other:?}"),
        }
    }

    #[test]
    fn k_examples() {
        // Identity covariance, q = r.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = crate::linalg::random_orthogonal(&mut rng, 3);
        let w = &q * 3.0_f64.sqrt(); // w w'/3 = I
        let k = estimate_k(&w, 3).unwrap();
        assert!((&k * k.transpose() - DMatrix::identity(3, 3)).abs().max() < 1e-10);
        assert!((k.transpose() * &k - DMatrix::identity(3, 3)).abs().max() < 1e-10);

        // Rank one.
        let v = DVector::from_vec(vec![0.6, -0.8, 0.0]);
        let w = DMatrix::from_fn(3, 4, |i, t| v[i] * [1.0, -1.0, 1.0, -1.0][t]);
        let k = estimate_k(&w, 1).unwrap();
        assert!((k.column(0) - &v).abs().max() < 1e-10 || (k.column(0) + &v).abs().max() < 1e-10);
    }

    #[test]
    fn k_is_the_eckart_young_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = randn(&mut rng, 4, 80);
        let k = estimate_k(&w, 2).unwrap();
        let cov = cross_moment(&w, &w);
        let (vals, vecs) = sym_eigen_desc(&cov);
        let mut trunc = DMatrix::zeros(4, 4);
        for j in 0..2 {
            trunc += vecs.column(j) * vecs.column(j).transpose() * vals[j];
        }
        assert!((&k * k.transpose() - &trunc).abs().max() < 1e-10);
        let err = (&cov - &k * k.transpose()).norm();
        let optimum = (vals[2].powi(2) + vals[3].powi(2)).sqrt();
        assert!((err - optimum).abs() < 1e-10);
    }

    fn model_with(gamma: Vec<DMatrix<f64>>, alpha: DMatrix<f64>, beta: DMatrix<f64>) -> VecmModel {
        let r = beta.nrows();
        let c = beta.ncols();
        VecmModel {
            beta,
            alpha,
            p: gamma.len(),
            gamma,
            intercept: None,
            residuals: DMatrix::zeros(r, 0),
            shock_loading: DMatrix::zeros(r, 0),
            c,
            q: 0,
            eigvals: DVector::zeros(c),
            warnings: vec![],
        }
    }

    #[test]
    fn var_conversion_examples() {
        let m = model_with(vec![DMatrix::zeros(2, 2)], DMatrix::zeros(2, 1), DMatrix::zeros(2, 1));
        let a = vecm_to_var(&m);
        assert_eq!(a[0], DMatrix::identity(2, 2));
        assert_eq!(a[1], DMatrix::zeros(2, 2));

        let alpha = DMatrix::from_column_slice(2, 1, &[-0.2, 0.1]);
        let beta = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let pi = &alpha * beta.transpose();
        let m = model_with(vec![DMatrix::identity(2, 2) * 0.5], alpha, beta);
        let a = vecm_to_var(&m);
        let id = DMatrix::<f64>::identity(2, 2);
        assert!((&a[0] - (&id * 0.5 + &pi + &id)).abs().max() < 1e-15);
        assert!((&a[1] + &id * 0.5).abs().max() < 1e-15);
        assert_eq!(unit_root_rank_deficiency(&a, 2, 1e-6), 1);
    }

    #[test]
    fn var_round_trip_through_the_vecm() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // VECM(1) with r = 2, c = 1.
        let alpha = DMatrix::from_column_slice(2, 1, &[-0.3, 0.1]);
        let beta = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let g1 = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.1, 0.2]);
        let truth = vecm_to_var(&model_with(vec![g1], alpha, beta));
        let f = simulate_var(&mut rng, &truth, 10_000, 1.0);
        let est = vecm_to_var(&johansen(&f, 1, 1, true, 2).unwrap());
        for (a, b) in est.iter().zip(&truth) {
            assert!((a - b).norm() < 0.1);
        }
    }

    #[test]
    fn metric_k_reduces_to_plain_k_and_follows_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let u = randn(&mut rng, 3, 200);
        let plain = estimate_k(&u, 2).unwrap();
        let same = estimate_k_in_metric(&u, 2, &DMatrix::identity(3, 3)).unwrap();
        assert!((&plain * plain.transpose() - &same * same.transpose()).abs().max() < 1e-12);

        // loadings L with gram G; rotated residuals H u pair with loadings L H^-1
        let l = randn(&mut rng, 30, 3);
        let h = randn(&mut rng, 3, 3) + DMatrix::identity(3, 3) * 3.0;
        let hinv = h.clone().try_inverse().unwrap();
        let l2 = &l * &hinv;
        let g1 = l.transpose() * &l / 30.0;
        let g2 = l2.transpose() * &l2 / 30.0;
        let k1 = estimate_k_in_metric(&u, 2, &g1).unwrap();
        let k2 = estimate_k_in_metric(&(&h * &u), 2, &g2).unwrap();
        let a = &l * &k1;
        let b = &l2 * &k2;
        let diff = (&a * a.transpose() - &b * b.transpose()).abs().max();
        assert!(diff < 1e-9, "{diff}");
    }
}
