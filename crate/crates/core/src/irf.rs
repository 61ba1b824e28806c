//! Impulse responses `Λ [A(L)]^{-1} K R` of the panel to the common shocks:
//! polynomial inversion, raw responses, structural rotations, normalisation
//! and quantile bands.

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, lower_cholesky};
use crate::serial::MatrixJson;

/// Horizon at which `B_k` stands in for the long-run matrix `B(1)`.
pub const LONG_RUN_HORIZON: usize = 500;

/// Singular-value ratio separating permanent from transitory directions.
pub const PERMANENT_RANK_TOL: f64 = 1e-4;

const MAX_IDENT_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dynamics {
    Vecm,
    Var,
}

impl fmt::Display for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dynamics::Vecm => "vecm",
            Dynamics::Var => "var",
        })
    }
}

impl std::str::FromStr for Dynamics {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vecm" => Ok(Dynamics::Vecm),
            "var" => Ok(Dynamics::Var),
            other => Err(Error::Config(format!("unknown dynamics `{other}` (expected vecm or var)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum Identification {
    Raw,
    /// Variables (row indices) whose impact responses are lower triangular.
    Recursive { order: Vec<usize> },
    /// The first `tau` shocks carry all long-run effects.
    Permanent { tau: usize, long_run_horizon: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub variable: usize,
    pub shock: usize,
    pub horizon: usize,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bands {
    pub coverage: f64,
    /// Per horizon, `n x q`.
    pub lower: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
    /// Replicates that entered the quantiles.
    pub replicates: usize,
}

/// Responses of `n` variables to `q` shocks over horizons `0..=H`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrfSet {
    /// `coeffs[k][(i, j)]` is the response of variable `i` to shock `j` at horizon `k`.
    pub coeffs: Vec<DMatrix<f64>>,
    /// `r x q` long-run factor responses `B_{H_lr} K` after the same rotation.
    pub factor_long_run: DMatrix<f64>,
    /// Horizon used for `factor_long_run`.
    pub long_run_horizon: usize,
    /// `n x r` loadings, mapping factor responses to variables.
    pub loadings: DMatrix<f64>,
    /// Accumulated `q x q` rotation applied to the raw shocks.
    pub rotation: DMatrix<f64>,
    pub identification: Identification,
    pub normalization: Option<Normalization>,
    pub bands: Option<Bands>,
    pub dynamics: Dynamics,
}

impl IrfSet {
    pub fn horizon(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn n(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn q(&self) -> usize {
        self.coeffs[0].ncols()
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.coeffs[k][(i, j)]
    }

    /// Long-run responses of the variables, `Λ B_{H_lr} K R`.
    pub fn long_run(&self) -> DMatrix<f64> {
        &self.loadings * &self.factor_long_run
    }

    fn rotate(&mut self, r: &DMatrix<f64>) {
        for c in &mut self.coeffs {
            *c = &*c * r;
        }
        self.factor_long_run = &self.factor_long_run * r;
        self.rotation = &self.rotation * r;
        self.bands = None;
    }

    fn scale_shock(&mut self, j: usize, s: f64) {
        for c in &mut self.coeffs {
            c.column_mut(j).scale_mut(s);
        }
        self.factor_long_run.column_mut(j).scale_mut(s);
        self.rotation.column_mut(j).scale_mut(s);
        if let Some(b) = &mut self.bands {
            for (lo, hi) in b.lower.iter_mut().zip(b.upper.iter_mut()) {
                lo.column_mut(j).scale_mut(s);
                hi.column_mut(j).scale_mut(s);
                if s < 0.0 {
                    for i in 0..lo.nrows() {
                        std::mem::swap(&mut lo[(i, j)], &mut hi[(i, j)]);
                    }
                }
            }
        }
    }

    pub fn to_json(&self, names: Option<&[String]>) -> IrfJson {
        IrfJson {
            dynamics: self.dynamics,
            identification: self.identification.clone(),
            normalization: self.normalization,
            horizon: self.horizon(),
            variables: names.map(|n| n.to_vec()),
            coeffs: self.coeffs.iter().map(MatrixJson::from).collect(),
            rotation: MatrixJson::from(&self.rotation),
            coverage: self.bands.as_ref().map(|b| b.coverage),
            lower: self.bands.as_ref().map(|b| b.lower.iter().map(MatrixJson::from).collect()),
            upper: self.bands.as_ref().map(|b| b.upper.iter().map(MatrixJson::from).collect()),
        }
    }

    /// Long format: `variable,shock,horizon,value,lower,upper`.
    pub fn write_csv<W: Write>(&self, out: W, names: Option<&[String]>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variable", "shock", "horizon", "value", "lower", "upper"])?;
        for i in 0..self.n() {
            let name = names.map(|n| n[i].clone()).unwrap_or_else(|| format!("x{}", i + 1));
            for j in 0..self.q() {
                for k in 0..=self.horizon() {
                    let (lo, hi) = match &self.bands {
                        Some(b) => (b.lower[k][(i, j)].to_string(), b.upper[k][(i, j)].to_string()),
                        None => (String::new(), String::new()),
                    };
                    w.write_record([
                        name.clone(),
                        (j + 1).to_string(),
                        k.to_string(),
                        self.coeffs[k][(i, j)].to_string(),
                        lo,
                        hi,
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IrfJson {
    pub dynamics: Dynamics,
    pub identification: Identification,
    pub normalization: Option<Normalization>,
    pub horizon: usize,
    pub variables: Option<Vec<String>>,
    /// One `n x q` matrix per horizon.
    pub coeffs: Vec<MatrixJson>,
    pub rotation: MatrixJson,
    pub coverage: Option<f64>,
    pub lower: Option<Vec<MatrixJson>>,
    pub upper: Option<Vec<MatrixJson>>,
}

/// Power-series coefficients `B_0..B_H` of `(I - A_1 L - ... - A_s L^s)^{-1}`.
/// With unit roots the series is formal: `B_k` converges but need not decay.
pub fn invert_polynomial(coeffs: &[DMatrix<f64>], dim: usize, horizon: usize) -> Vec<DMatrix<f64>> {
    let mut b: Vec<DMatrix<f64>> = Vec::with_capacity(horizon + 1);
    b.push(DMatrix::identity(dim, dim));
    for k in 1..=horizon {
        let mut bk = DMatrix::zeros(dim, dim);
        for (j, a) in coeffs.iter().enumerate().take(k) {
            bk += a * &b[k - 1 - j];
        }
        b.push(bk);
    }
    b
}

/// `φ_ijk = λ_i' B_k k_j` for `k = 0..=horizon`. `series` must reach at
/// least `horizon`; its last element supplies the long-run factor response.
pub fn raw_irf(
    loadings: &DMatrix<f64>,
    series: &[DMatrix<f64>],
    shock_loading: &DMatrix<f64>,
    horizon: usize,
    dynamics: Dynamics,
) -> Result<IrfSet> {
    let r = loadings.ncols();
    if shock_loading.nrows() != r || series.iter().any(|b| b.nrows() != r || b.ncols() != r) {
        return Err(Error::Dimension(format!(
            "loadings are {}x{r}, shock loading {}x{}, lag series must be {r}x{r}",
            loadings.nrows(),
            shock_loading.nrows(),
            shock_loading.ncols()
        )));
    }
    if series.len() < horizon + 1 {
        return Err(Error::Dimension(format!("{} lag matrices cannot cover horizon {horizon}", series.len())));
    }
    let q = shock_loading.ncols();
    let coeffs = series[..=horizon].iter().map(|b| loadings * b * shock_loading).collect();
    let last = series.len() - 1;
    Ok(IrfSet {
        coeffs,
        factor_long_run: &series[last] * shock_loading,
        long_run_horizon: last,
        loadings: loadings.clone(),
        rotation: DMatrix::identity(q, q),
        identification: Identification::Raw,
        normalization: None,
        bands: None,
        dynamics,
    })
}

/// Orthogonal `R = M^{-1} chol(M M')` making `M R` lower triangular with a
/// positive diagonal.
pub fn recursive_rotation(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = m.nrows();
    let cond = condition_number(m);
    if !cond.is_finite() || cond > MAX_IDENT_CONDITION {
        return Err(Error::Identification(format!(
            "impact matrix of the ordered variables has condition number {cond:e}"
        )));
    }
    let l = lower_cholesky(&(m * m.transpose()))?;
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Identification("impact matrix of the ordered variables is singular".into()))?;
    let r = inv * l;
    let dev = (r.transpose() * &r - DMatrix::identity(q, q)).abs().max();
    if dev > 1e-8 {
        return Err(Error::Identification(format!("recursive rotation is not orthogonal (deviation {dev:e})")));
    }
    Ok(r)
}

/// Rotate the shocks so the impact responses of `order` (one variable per
/// shock) are lower triangular.
pub fn identify_recursive(irf: &IrfSet, order: &[usize]) -> Result<IrfSet> {
    let q = irf.q();
    if order.len() != q {
        return Err(Error::Identification(format!("recursive ordering names {} variables for {q} shocks", order.len())));
    }
    if let Some(&bad) = order.iter().find(|&&i| i >= irf.n()) {
        return Err(Error::Identification(format!("variable index {bad} out of range")));
    }
    let m = DMatrix::from_fn(q, q, |a, j| irf.coeffs[0][(order[a], j)]);
    let r = recursive_rotation(&m)?;
    let mut out = irf.clone();
    out.rotate(&r);
    out.identification = Identification::Recursive { order: order.to_vec() };
    Ok(out)
}

/// Horizon-`h_lr` response slice, a proxy for the long-run effect.
pub fn long_run_response(irf: &IrfSet, h_lr: usize) -> Result<DMatrix<f64>> {
    irf.coeffs
        .get(h_lr)
        .cloned()
        .ok_or_else(|| Error::InvalidInput(format!("long-run horizon {h_lr} exceeds the IRF horizon {}", irf.horizon())))
}

/// Split the shocks into `tau` permanent and `q - tau` transitory ones.
///
/// The rotation comes from the SVD `B_{H_lr} K = U S V'`: the leading `tau`
/// right singular vectors carry the long-run effects and the rest are
/// annihilated. The permanent block is then rotated so its long-run factor
/// responses are lower trapezoidal, and each permanent shock is signed to
/// raise `sign_variable` in the long run.
///
/// A long-run matrix whose numerical rank differs from `tau` is an error for
/// VECM dynamics. For VAR dynamics the levels estimate has full rank in
/// finite samples, so the leading `tau` directions are used with a warning.
/// VAR-based long-run responses are not consistent and a warning to that
/// effect is always returned.
pub fn identify_permanent(irf: &IrfSet, tau: usize, sign_variable: Option<usize>) -> Result<(IrfSet, Vec<String>)> {
    let q = irf.q();
    let r = irf.factor_long_run.nrows();
    if tau == 0 || tau > q {
        return Err(Error::Identification(format!("number of permanent shocks {tau} must lie in 1..={q}")));
    }
    let mut warnings = Vec::new();
    if irf.dynamics == Dynamics::Var {
        warnings.push(
            "long-run responses from VAR-in-levels dynamics are not consistent; permanent-shock identification \
             may be unreliable, prefer --dynamics vecm"
                .to_string(),
        );
    }
    let xi = &irf.factor_long_run;
    let svd = xi.clone().svd(false, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let vt = svd.v_t.expect("v_t requested");
    let s1 = s.first().copied().unwrap_or(0.0);
    if s1 <= 0.0 {
        return Err(Error::Identification("long-run matrix is zero; no permanent shocks to identify".into()));
    }
    let rank = s.iter().filter(|v| **v / s1 >= PERMANENT_RANK_TOL).count();
    if rank != tau {
        let msg = format!(
            "long-run matrix has numerical rank {rank} but {tau} permanent shocks were requested \
             (singular values {s:?}); re-estimate the number of common trends"
        );
        if irf.dynamics == Dynamics::Vecm {
            return Err(Error::Identification(msg));
        }
        warnings.push(msg);
    }

    // Complete V to a q x q orthogonal basis; SVD may return fewer rows when r < q.
    let mut basis = DMatrix::zeros(q, q);
    for (c, &i) in order.iter().enumerate() {
        basis.set_column(c, &vt.row(i).transpose());
    }
    if order.len() < q {
        let mut filled = order.len();
        for e in 0..q {
            if filled == q {
                break;
            }
            let mut v = nalgebra::DVector::zeros(q);
            v[e] = 1.0;
            for c in 0..filled {
                let b = basis.column(c).into_owned();
                v -= &b * b.dot(&v);
            }
            if v.norm() > 1e-8 {
                basis.set_column(filled, &(v.normalize()));
                filled += 1;
            }
        }
    }

    // Lower-trapezoidal form of the permanent block: QR of the transposed head.
    let p = xi * basis.columns(0, tau);
    let head = p.rows(0, tau.min(r)).transpose();
    let mut rot_perm = if head.ncols() == tau {
        let qr = head.qr();
        let mut qm = qr.q();
        let rm = qr.r();
        for j in 0..tau {
            if rm[(j, j)] < 0.0 {
                qm.column_mut(j).neg_mut();
            }
        }
        qm
    } else {
        DMatrix::identity(tau, tau)
    };
    if rot_perm.nrows() != tau || rot_perm.ncols() != tau {
        rot_perm = DMatrix::identity(tau, tau);
    }
    let mut rot = basis.clone();
    let perm_cols = basis.columns(0, tau) * &rot_perm;
    rot.columns_mut(0, tau).copy_from(&perm_cols);

    let mut out = irf.clone();
    out.rotate(&rot);
    if let Some(v) = sign_variable {
        if v >= out.n() {
            return Err(Error::Identification(format!("sign variable index {v} out of range")));
        }
        let lr = out.loadings.row(v) * &out.factor_long_run;
        for j in 0..tau {
            if lr[j] < 0.0 {
                out.scale_shock(j, -1.0);
            }
        }
    }
    out.identification = Identification::Permanent { tau, long_run_horizon: irf.long_run_horizon };
    Ok((out, warnings))
}

/// Rescale shock `shock` so that variable `variable` responds by `target`
/// at `horizon`.
pub fn normalize_irf(irf: &IrfSet, variable: usize, shock: usize, horizon: usize, target: f64) -> Result<IrfSet> {
    if variable >= irf.n() || shock >= irf.q() || horizon > irf.horizon() {
        return Err(Error::InvalidInput(format!(
            "normalization ({variable}, {shock}, {horizon}) outside an IRF of {} variables, {} shocks, horizon {}",
            irf.n(),
            irf.q(),
            irf.horizon()
        )));
    }
    let pivot = irf.coeffs[horizon][(variable, shock)];
    if pivot.abs() <= 1e-12 {
        return Err(Error::Identification(format!(
            "response of variable {variable} to shock {shock} at horizon {horizon} is zero; cannot normalize"
        )));
    }
    let mut out = irf.clone();
    out.scale_shock(shock, target / pivot);
    out.coeffs[horizon][(variable, shock)] = target;
    out.normalization = Some(Normalization { variable, shock, horizon, target });
    Ok(out)
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise `(1 - coverage)/2` and `(1 + coverage)/2` quantiles across draws.
pub fn quantile_bands(draws: &[IrfSet], coverage: f64) -> Result<Bands> {
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(Error::InvalidInput(format!("coverage {coverage} must lie in (0, 1)")));
    }
    let first = draws.first().ok_or_else(|| Error::Bootstrap("no bootstrap replicates".into()))?;
    let (n, q, h) = (first.n(), first.q(), first.horizon());
    if draws.iter().any(|d| d.n() != n || d.q() != q || d.horizon() != h) {
        return Err(Error::Dimension("bootstrap replicates differ in shape".into()));
    }
    let (pl, pu) = ((1.0 - coverage) / 2.0, (1.0 + coverage) / 2.0);
    let mut lower = vec![DMatrix::zeros(n, q); h + 1];
    let mut upper = vec![DMatrix::zeros(n, q); h + 1];
    let mut buf = Vec::with_capacity(draws.len());
    for k in 0..=h {
        for j in 0..q {
            for i in 0..n {
                buf.clear();
                buf.extend(draws.iter().map(|d| d.coeffs[k][(i, j)]));
                buf.sort_by(f64::total_cmp);
                lower[k][(i, j)] = quantile_sorted(&buf, pl);
                upper[k][(i, j)] = quantile_sorted(&buf, pu);
            }
        }
    }
    Ok(Bands { coverage, lower, upper, replicates: draws.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthogonal;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn inversion_examples() {
        let b = invert_polynomial(&[DMatrix::zeros(2, 2)], 2, 5);
        assert_eq!(b[0], DMatrix::identity(2, 2));
        assert!(b[1..].iter().all(|m| m.iter().all(|v| *v == 0.0)));

        let b = invert_polynomial(&[scalar(0.5)], 1, 20);
        for (k, m) in b.iter().enumerate() {
            assert!((m[(0, 0)] - 0.5_f64.powi(k as i32)).abs() < 1e-12);
        }

        let b = invert_polynomial(&[scalar(1.0)], 1, 50);
        assert!(b.iter().all(|m| m[(0, 0)] == 1.0));
    }

    #[test]
    fn inversion_satisfies_the_defining_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = vec![randn(&mut rng, 3, 3) * 0.3, randn(&mut rng, 3, 3) * 0.2];
        let b = invert_polynomial(&a, 3, 12);
        // A(L) B(L) = I: B_k - A_1 B_{k-1} - A_2 B_{k-2} = 0 for k >= 1.
        for k in 1..=12 {
            let mut lhs = b[k].clone();
            for (j, aj) in a.iter().enumerate() {
                if k > j {
                    lhs -= aj * &b[k - 1 - j];
                }
            }
            assert!(lhs.abs().max() < 1e-12);
        }
    }

    fn sample_irf(rng: &mut ChaCha8Rng, n: usize, r: usize, q: usize, h: usize) -> (DMatrix<f64>, Vec<DMatrix<f64>>, DMatrix<f64>) {
        let lam = randn(rng, n, r);
        let a = vec![randn(rng, r, r) * 0.2];
        let b = invert_polynomial(&a, r, h);
        let k = randn(rng, r, q);
        (lam, b, k)
    }

    #[test]
    fn raw_impact_slice_is_lambda_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (lam, b, k) = sample_irf(&mut rng, 6, 3, 2, 8);
        let irf = raw_irf(&lam, &b, &k, 8, Dynamics::Vecm).unwrap();
        assert!((&irf.coeffs[0] - &lam * &k).abs().max() < 1e-12);

        let mut b = vec![DMatrix::identity(3, 3)];
        b.extend((0..4).map(|_| DMatrix::zeros(3, 3)));
        let irf = raw_irf(&lam, &b, &DMatrix::identity(3, 3), 4, Dynamics::Vecm).unwrap();
        assert_eq!(irf.coeffs[0], lam);
        assert!(irf.coeffs[1..].iter().all(|m| m.iter().all(|v| *v == 0.0)));
        assert!(raw_irf(&lam, &b, &DMatrix::identity(2, 2), 4, Dynamics::Vecm).is_err());
    }

    #[test]
    fn recursive_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.5, 1.0]);
        let r = recursive_rotation(&m).unwrap();
        assert!((r - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-12);

        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let r = recursive_rotation(&m).unwrap();
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((&r - &swap).abs().max() < 1e-12);
        assert!((&m * &r)[(0, 1)].abs() < 1e-12);

        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-13]);
        assert!(matches!(recursive_rotation(&m), Err(Error::Identification(_))));
    }

    #[test]
    fn recursive_zeros_and_rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (lam, b, k) = sample_irf(&mut rng, 8, 4, 3, 10);
        let order = [5, 1, 6];
        let irf = identify_recursive(&raw_irf(&lam, &b, &k, 10, Dynamics::Vecm).unwrap(), &order).unwrap();
        for a in 0..3 {
            for j in (a + 1)..3 {
                assert!(irf.coeffs[0][(order[a], j)].abs() <= 1e-8);
            }
        }
        let o = random_orthogonal(&mut rng, 3);
        let rotated = identify_recursive(&raw_irf(&lam, &b, &(&k * o), 10, Dynamics::Vecm).unwrap(), &order).unwrap();
        for (x, y) in irf.coeffs.iter().zip(&rotated.coeffs) {
            assert!((x - y).abs().max() < 1e-8);
        }
    }

    #[test]
    fn long_run_of_a_random_walk_is_the_impact() {
        let b = invert_polynomial(&[scalar(1.0)], 1, 30);
        let irf = raw_irf(&scalar(2.0), &b, &scalar(0.7), 30, Dynamics::Vecm).unwrap();
        assert_eq!(long_run_response(&irf, 30).unwrap(), irf.coeffs[0]);
        assert!(long_run_response(&irf, 31).is_err());

        let b = invert_polynomial(&[DMatrix::identity(2, 2) * 0.5], 2, 100);
        let irf = raw_irf(&DMatrix::identity(2, 2), &b, &DMatrix::identity(2, 2), 100, Dynamics::Var).unwrap();
        assert!(long_run_response(&irf, 100).unwrap().abs().max() < 1e-6);
    }

    #[test]
    fn permanent_identification_on_a_rank_one_long_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (r, q, n) = (4, 3, 7);
        let lam = randn(&mut rng, n, r);
        let u = randn(&mut rng, r, 1);
        let v = randn(&mut rng, 1, q);
        let mut b = invert_polynomial(&[randn(&mut rng, r, r) * 0.1], r, 6);
        let k = randn(&mut rng, r, q);
        // Replace the final lag matrix so that B_last K = u v.
        let kp = k.clone().pseudo_inverse(1e-12).unwrap();
        let last = b.len() - 1;
        b[last] = &u * &v * kp;
        let raw = raw_irf(&lam, &b, &k, 5, Dynamics::Vecm).unwrap();
        assert!((&raw.factor_long_run - &u * &v).abs().max() < 1e-10);
        let (id, warnings) = identify_permanent(&raw, 1, Some(0)).unwrap();
        assert!(warnings.is_empty());
        let lr = &id.factor_long_run;
        assert!(lr.columns(1, 2).abs().max() <= 1e-10 * lr.column(0).norm());
        assert!((&id.rotation.transpose() * &id.rotation - DMatrix::<f64>::identity(q, q)).abs().max() < 1e-10);
        assert!((lam.row(0) * lr.column(0))[(0, 0)] > 0.0);
        assert!(matches!(identify_permanent(&raw, 2, None), Err(Error::Identification(_))));
    }

    #[test]
    fn permanent_with_one_shock_is_a_sign_flip() {
        let b = invert_polynomial(&[scalar(1.0)], 1, 5);
        let raw = raw_irf(&scalar(1.0), &b, &scalar(-0.5), 5, Dynamics::Vecm).unwrap();
        let (id, _) = identify_permanent(&raw, 1, Some(0)).unwrap();
        assert!((id.rotation[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((id.coeffs[0][(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn var_dynamics_always_warn() {
        let b = invert_polynomial(&[scalar(1.0)], 1, 5);
        let raw = raw_irf(&scalar(1.0), &b, &scalar(1.0), 5, Dynamics::Var).unwrap();
        let (_, warnings) = identify_permanent(&raw, 1, None).unwrap();
        assert!(warnings.iter().any(|w| w.contains("not consistent")));
    }

    #[test]
    fn normalization_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (lam, b, k) = sample_irf(&mut rng, 5, 3, 2, 6);
        let raw = raw_irf(&lam, &b, &k, 6, Dynamics::Vecm).unwrap();
        let cur = raw.get(2, 0, 1);
        let same = normalize_irf(&raw, 2, 0, 1, cur).unwrap();
        for (a, b) in same.coeffs.iter().zip(&raw.coeffs) {
            assert!((a - b).abs().max() < 1e-12);
        }
        let doubled = normalize_irf(&raw, 2, 0, 1, 2.0 * cur).unwrap();
        assert_eq!(doubled.get(2, 0, 1), 2.0 * cur);
        for kk in 0..=6 {
            assert!((doubled.coeffs[kk].column(0) - raw.coeffs[kk].column(0) * 2.0).abs().max() < 1e-12);
            assert_eq!(doubled.coeffs[kk].column(1), raw.coeffs[kk].column(1));
        }
        let back = normalize_irf(&normalize_irf(&raw, 1, 1, 0, 0.25).unwrap(), 2, 1, 3, raw.get(2, 1, 3)).unwrap();
        for (a, b) in back.coeffs.iter().zip(&raw.coeffs) {
            assert!((a - b).abs().max() < 1e-12);
        }
        let mut zero = raw.clone();
        zero.coeffs[0][(0, 0)] = 0.0;
        assert!(matches!(normalize_irf(&zero, 0, 0, 0, 1.0), Err(Error::Identification(_))));
    }

    #[test]
    fn bands_collapse_and_nest() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (lam, b, k) = sample_irf(&mut rng, 4, 2, 2, 3);
        let raw = raw_irf(&lam, &b, &k, 3, Dynamics::Vecm).unwrap();
        let same = vec![raw.clone(); 60];
        let bands = quantile_bands(&same, 0.68).unwrap();
        for kk in 0..=3 {
            assert_eq!(bands.lower[kk], raw.coeffs[kk]);
            assert_eq!(bands.upper[kk], raw.coeffs[kk]);
        }
        let draws: Vec<IrfSet> = (0..100)
            .map(|_| {
                let mut d = raw.clone();
                for c in &mut d.coeffs {
                    *c += randn(&mut rng, 4, 2);
                }
                d
            })
            .collect();
        let narrow = quantile_bands(&draws, 0.68).unwrap();
        let wide = quantile_bands(&draws, 0.90).unwrap();
        for kk in 0..=3 {
            assert!(wide.lower[kk].iter().zip(narrow.lower[kk].iter()).all(|(w, n)| w <= n));
            assert!(wide.upper[kk].iter().zip(narrow.upper[kk].iter()).all(|(w, n)| w >= n));
        }
        assert!(quantile_bands(&draws, 1.0).is_err());
    }

    #[test]
    fn csv_is_long_format() {
        let b = invert_polynomial(&[scalar(0.5)], 1, 2);
        let irf = raw_irf(&DMatrix::from_column_slice(2, 1, &[1.0, 2.0]), &b, &scalar(1.0), 2, Dynamics::Vecm).unwrap();
        let mut buf = Vec::new();
        irf.write_csv(&mut buf, Some(&["GDP".to_string(), "CPI".to_string()])).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "variable,shock,horizon,value,lower,upper");
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert_eq!(lines[2], "GDP,1,1,0.5,,");
        let json = serde_json::to_string(&irf.to_json(None)).unwrap();
        let back: IrfJson = serde_json::from_str(&json).unwrap();
        assert_eq!(back.coeffs[1].to_matrix().unwrap(), irf.coeffs[1]);
    }

    proptest! {
        #[test]
        fn normalization_hits_the_target_exactly(seed in 0u64..500, target in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (lam, b, k) = sample_irf(&mut rng, 4, 2, 2, 4);
            let raw = raw_irf(&lam, &b, &k, 4, Dynamics::Vecm).unwrap();
            prop_assume!(raw.get(1, 0, 2).abs() > 1e-6);
            let out = normalize_irf(&raw, 1, 0, 2, target).unwrap();
            prop_assert_eq!(out.get(1, 0, 2), target);
        }

        #[test]
        fn recursive_restrictions_hold(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (lam, b, k) = sample_irf(&mut rng, 5, 3, 3, 2);
            let raw = raw_irf(&lam, &b, &k, 2, Dynamics::Vecm).unwrap();
            if let Ok(id) = identify_recursive(&raw, &[0, 1, 2]) {
                prop_assert!(id.coeffs[0][(0, 1)].abs() <= 1e-8);
                prop_assert!(id.coeffs[0][(0, 2)].abs() <= 1e-8);
                prop_assert!(id.coeffs[0][(1, 2)].abs() <= 1e-8);
            }
        }
    }
}
