//! End-to-end estimation: detrend, count selection, factors, factor
//! dynamics, identified impulse responses and bootstrap bands.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::{estimate_factors, FactorModel};
use crate::irf::{
    identify_permanent, identify_recursive, invert_polynomial, normalize_irf, quantile_bands, raw_irf, Bands,
    Dynamics, IrfSet, Normalization, LONG_RUN_HORIZON,
};
use crate::panel::{detrend, difference, integrate, DetrendMethod, TrendFit};
use crate::rng::stream;
use crate::selection::{select_counts_with, CountOverrides, SelectionResult, SelectionSettings};
use crate::var::{var_ls, VarModel};
use crate::vecm::{estimate_k_in_metric, johansen, vecm_to_var, VecmModel};

/// A count given explicitly or left to the criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Count {
    #[default]
    Auto,
    #[serde(untagged)]
    Fixed(usize),
}

impl Count {
    pub fn fixed(self) -> Option<usize> {
        match self {
            Count::Auto => None,
            Count::Fixed(k) => Some(k),
        }
    }
}

impl FromStr for Count {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Count::Auto);
        }
        s.parse().map(Count::Fixed).map_err(|_| Error::Config(format!("count `{s}` is neither `auto` nor an integer")))
    }
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Count::Auto => f.write_str("auto"),
            Count::Fixed(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum IdentifySpec {
    #[default]
    Raw,
    /// Row indices, one per shock.
    Recursive { order: Vec<usize> },
    /// Permanent shocks signed to raise `sign_variable` in the long run.
    Permanent { sign_variable: Option<usize> },
}

/// Everything the pipeline needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub detrend: DetrendMethod,
    pub r: Count,
    pub q: Count,
    pub tau: Count,
    pub dynamics: Dynamics,
    /// Lagged differences for the VECM, levels lags for the VAR. Defaults
    /// to 1 and 2, which describe the same VAR(2) in levels.
    pub lags: Option<usize>,
    pub intercept: bool,
    pub identify: IdentifySpec,
    pub normalize: Option<Normalization>,
    pub horizon: usize,
    pub selection: SelectionSettings,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        PipelineSpec {
            detrend: DetrendMethod::Ls,
            r: Count::Auto,
            q: Count::Auto,
            tau: Count::Auto,
            dynamics: Dynamics::Vecm,
            lags: None,
            intercept: true,
            identify: IdentifySpec::Raw,
            normalize: None,
            horizon: 20,
            selection: SelectionSettings::default(),
        }
    }
}

impl PipelineSpec {
    pub fn lags(&self) -> usize {
        self.lags.unwrap_or(match self.dynamics {
            Dynamics::Vecm => 1,
            Dynamics::Var => 2,
        })
    }

    fn overrides(&self) -> CountOverrides {
        CountOverrides { r: self.r.fixed(), q: self.q.fixed(), tau: self.tau.fixed() }
    }

    fn all_fixed(&self) -> Option<Counts> {
        match (self.r, self.q, self.tau) {
            (Count::Fixed(r), Count::Fixed(q), Count::Fixed(tau)) => Some(Counts { r, q, tau }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub r: usize,
    pub q: usize,
    pub tau: usize,
}

impl Counts {
    /// Cointegration rank `c = r - τ`.
    pub fn c(&self) -> usize {
        self.r - self.tau
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DynamicsModel {
    Vecm(VecmModel),
    Var(VarModel),
}

impl DynamicsModel {
    /// Coefficients of the VAR in levels.
    pub fn var_coeffs(&self) -> Vec<DMatrix<f64>> {
        match self {
            DynamicsModel::Vecm(m) => vecm_to_var(m),
            DynamicsModel::Var(m) => m.coeffs.clone(),
        }
    }

    pub fn intercept(&self) -> Option<&DVector<f64>> {
        match self {
            DynamicsModel::Vecm(m) => m.intercept.as_ref(),
            DynamicsModel::Var(m) => m.intercept.as_ref(),
        }
    }

    pub fn residuals(&self) -> &DMatrix<f64> {
        match self {
            DynamicsModel::Vecm(m) => &m.residuals,
            DynamicsModel::Var(m) => &m.residuals,
        }
    }

    pub fn shock_loading(&self) -> &DMatrix<f64> {
        match self {
            DynamicsModel::Vecm(m) => &m.shock_loading,
            DynamicsModel::Var(m) => &m.shock_loading,
        }
    }

    pub fn set_shock_loading(&mut self, k: DMatrix<f64>) {
        match self {
            DynamicsModel::Vecm(m) => m.shock_loading = k,
            DynamicsModel::Var(m) => m.shock_loading = k,
        }
    }

    pub fn warnings(&self) -> &[String] {
        match self {
            DynamicsModel::Vecm(m) => &m.warnings,
            DynamicsModel::Var(m) => &m.warnings,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            DynamicsModel::Vecm(m) => serde_json::json!({ "dynamics": "vecm", "model": m.to_json() }),
            DynamicsModel::Var(m) => serde_json::json!({ "dynamics": "var", "model": m.to_json() }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub trend: Option<TrendFit>,
    /// Detrended `n x (T+1)` panel the factors were extracted from.
    pub detrended: DMatrix<f64>,
    pub selection: Option<SelectionResult>,
    pub counts: Counts,
    pub factors: FactorModel,
    pub model: DynamicsModel,
    pub raw: IrfSet,
    pub irf: IrfSet,
    pub warnings: Vec<String>,
}

/// Resolve counts, running the criteria only when something is `auto`.
pub fn resolve_counts(diffs: &DMatrix<f64>, spec: &PipelineSpec) -> Result<(Counts, Option<SelectionResult>)> {
    let fixed = spec.overrides();
    fixed.validate()?;
    if let Some(c) = spec.all_fixed() {
        return Ok((c, None));
    }
    let sel = select_counts_with(diffs, &spec.selection, fixed)?;
    Ok((Counts { r: sel.r_hat, q: sel.q_hat, tau: sel.tau_hat }, Some(sel)))
}

/// Dynamics, raw and identified IRFs for given factors and counts.
pub fn estimate_irf(
    factors: &FactorModel,
    counts: Counts,
    spec: &PipelineSpec,
) -> Result<(DynamicsModel, IrfSet, IrfSet, Vec<String>)> {
    let f = &factors.factors;
    let p = spec.lags();
    let mut model = match spec.dynamics {
        Dynamics::Vecm => DynamicsModel::Vecm(johansen(f, p, counts.c(), spec.intercept, counts.q)?),
        Dynamics::Var => DynamicsModel::Var(var_ls(f, p, spec.intercept, counts.q)?),
    };
    // Factors handed in with loadings off the Λ'Λ/n = I normalisation get K
    // truncated in the loading metric, so raw responses do not depend on
    // how the factors were rotated.
    let gram = factors.loadings.transpose() * &factors.loadings / factors.loadings.nrows() as f64;
    if (&gram - DMatrix::identity(counts.r, counts.r)).abs().max() > 1e-10 {
        model.set_shock_loading(estimate_k_in_metric(model.residuals(), counts.q, &gram)?);
    }
    let mut warnings = model.warnings().to_vec();
    let a = model.var_coeffs();
    let series = invert_polynomial(&a, counts.r, spec.horizon.max(LONG_RUN_HORIZON));
    let raw = raw_irf(&factors.loadings, &series, model.shock_loading(), spec.horizon, spec.dynamics)?;
    let mut irf = match &spec.identify {
        IdentifySpec::Raw => raw.clone(),
        IdentifySpec::Recursive { order } => identify_recursive(&raw, order)?,
        IdentifySpec::Permanent { sign_variable } => {
            if counts.tau == 0 {
                return Err(Error::Identification(
                    "permanent-shock identification needs at least one common trend (tau = 0)".into(),
                ));
            }
            let (irf, w) = identify_permanent(&raw, counts.tau, *sign_variable)?;
            warnings.extend(w);
            irf
        }
    };
    if let Some(nz) = spec.normalize {
        irf = normalize_irf(&irf, nz.variable, nz.shock, nz.horizon, nz.target)?;
    }
    Ok((model, raw, irf, warnings))
}

/// Full pipeline on an `n x (T+1)` panel in levels.
pub fn run(x: &DMatrix<f64>, spec: &PipelineSpec) -> Result<PipelineOutput> {
    let (trend, detrended) = detrend(x, spec.detrend)?;
    let diffs = difference(&detrended)?;
    let (counts, selection) = resolve_counts(&diffs, spec)?;
    if counts.r == 0 || counts.q == 0 {
        return Err(Error::Selection(format!(
            "no common factors or shocks detected (r = {}, q = {}); nothing to estimate",
            counts.r, counts.q
        )));
    }
    let factors = estimate_factors(&detrended, counts.r)?;
    let (model, raw, irf, mut warnings) = estimate_irf(&factors, counts, spec)?;
    if let Some(sel) = &selection {
        warnings.extend(sel.warnings.iter().cloned());
    }
    Ok(PipelineOutput { trend, detrended, selection, counts, factors, model, raw, irf, warnings })
}

/// Bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub replicates: usize,
    pub coverage: f64,
    /// Idiosyncratic block length; `None` means `⌈T^{1/3}⌉`.
    pub block_length: Option<usize>,
    pub seed: u64,
}

/// Residual bootstrap around a fitted pipeline.
///
/// Each replicate draws factor innovations i.i.d. from the centred fitted
/// residuals, rebuilds the factors from the estimated VAR form with zero
/// initial conditions, adds moving blocks of the idiosyncratic differences
/// (the same time blocks for every series) cumulated from zero, and re-runs
/// extraction, dynamics, identification and normalisation with the counts
/// held at their point estimates. Failed replicates are skipped; more than
/// 10% failures is an error.
pub fn bootstrap_bands(point: &PipelineOutput, spec: &PipelineSpec, boot: &BootstrapSpec) -> Result<Bands> {
    if boot.replicates < 50 {
        return Err(Error::Config(format!("at least 50 bootstrap replicates are required, got {}", boot.replicates)));
    }
    if !(boot.coverage > 0.0 && boot.coverage < 1.0) {
        return Err(Error::Config(format!("coverage {} must lie in (0, 1)", boot.coverage)));
    }
    let lam = &point.factors.loadings;
    let (n, r) = lam.shape();
    let t = point.detrended.ncols() - 1;
    let a = point.model.var_coeffs();
    let h = point.model.intercept().cloned().unwrap_or_else(|| DVector::zeros(r));
    let mut w = point.model.residuals().clone();
    let n_w = w.ncols();
    for i in 0..r {
        let mean = w.row(i).sum() / n_w as f64;
        w.row_mut(i).add_scalar_mut(-mean);
    }
    let dxi = difference(&point.factors.idiosyncratic(&point.detrended))?;
    let block = boot.block_length.unwrap_or_else(|| (t as f64).cbrt().ceil() as usize).clamp(1, t);

    let mut rep_spec = spec.clone();
    rep_spec.detrend = DetrendMethod::None;
    let counts = point.counts;

    let draws: Vec<Option<IrfSet>> = (0..boot.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(boot.seed, "bootstrap", b as u64);
            let mut f = DMatrix::zeros(r, t + 1);
            for s in 1..=t {
                let mut next = &h + w.column(rng.random_range(0..n_w));
                for (k, ak) in a.iter().enumerate() {
                    if s > k {
                        next += ak * f.column(s - 1 - k);
                    }
                }
                f.set_column(s, &next);
            }
            let mut d = DMatrix::zeros(n, t);
            let mut filled = 0;
            while filled < t {
                let start = rng.random_range(0..=t - block);
                let len = block.min(t - filled);
                d.columns_mut(filled, len).copy_from(&dxi.columns(start, len));
                filled += len;
            }
            let xi = integrate(&d, &DVector::zeros(n)).ok()?;
            let x_star = lam * f + xi;
            let factors = estimate_factors(&x_star, counts.r).ok()?;
            estimate_irf(&factors, counts, &rep_spec).ok().map(|(_, _, irf, _)| irf)
        })
        .collect();
    let failed = draws.iter().filter(|d| d.is_none()).count();
    if failed * 10 > boot.replicates {
        return Err(Error::Bootstrap(format!("{failed} of {} bootstrap replicates failed", boot.replicates)));
    }
    if failed > 0 {
        log::warn!("{failed} of {} bootstrap replicates failed and were skipped", boot.replicates);
    }
    let ok: Vec<IrfSet> = draws.into_iter().flatten().collect();
    quantile_bands(&ok, boot.coverage)
}
