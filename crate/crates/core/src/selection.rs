//! Information criteria for the number of static factors `r`, common shocks
//! `q` and common trends `τ`, and the penalty-tuning scan.
//!
//! The penalty shapes `s(n,T)` and `p(n,T)`, the frequency grid and the
//! default bandwidth are conventions chosen to satisfy the usual consistency
//! conditions; they are not the only admissible choices.

use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::covariance_uncentered;
use crate::linalg::sym_eigen_desc;
use crate::spectral::{default_bandwidth, dynamic_eigenvalues, lag_window_spectrum, Kernel, SpectralDensity};

/// Criterion values for candidates `k = 0..=k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionPath {
    /// Log of the average unexplained eigenvalue mass.
    pub fit: Vec<f64>,
    /// `k * penalty` for each candidate.
    pub penalty: Vec<f64>,
    /// `fit + penalty`.
    pub value: Vec<f64>,
    pub selected: usize,
}

impl CriterionPath {
    fn from_fit(fit: Vec<f64>, per_unit_penalty: f64, k_min: usize) -> Self {
        let penalty: Vec<f64> = (0..fit.len()).map(|k| k as f64 * per_unit_penalty).collect();
        let value: Vec<f64> = fit.iter().zip(&penalty).map(|(f, p)| f + p).collect();
        let selected = argmin_from(&value, k_min);
        CriterionPath { fit, penalty, value, selected }
    }
}

/// First index of the minimum at or after `start`.
fn argmin_from(v: &[f64], start: usize) -> usize {
    let mut best = start;
    for k in start..v.len() {
        if v[k] < v[best] {
            best = k;
        }
    }
    best
}

/// `log(max(x, floor))`, keeping the log finite for exactly-low-rank inputs.
fn safe_log(x: f64, floor: f64) -> f64 {
    x.max(floor).max(f64::MIN_POSITIVE).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FactorMethod {
    /// `log V(k) + k (n+T)/(nT) log min(n,T)`.
    #[default]
    InformationCriterion,
    /// `argmax_k μ_k / μ_{k+1}`.
    EigenvalueRatio,
}

impl FromStr for FactorMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ic" | "information_criterion" => Ok(FactorMethod::InformationCriterion),
            "er" | "eigenvalue_ratio" => Ok(FactorMethod::EigenvalueRatio),
            other => Err(Error::Config(format!("unknown factor-count method `{other}` (ic|er)"))),
        }
    }
}

/// Both factor-count estimates; `selected` follows the requested method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCountEstimate {
    pub selected: usize,
    pub method: FactorMethod,
    pub information_criterion: CriterionPath,
    /// Ratios `μ_k / μ_{k+1}` for `k = 1..=r_max`.
    pub eigenvalue_ratios: Vec<f64>,
    pub eigenvalue_ratio_choice: usize,
}

/// Each differenced series demeaned and scaled to unit variance; constant
/// series are left at zero.
pub fn standardize(diffs: &DMatrix<f64>) -> DMatrix<f64> {
    let t = diffs.ncols() as f64;
    let mut out = diffs.clone();
    for mut row in out.row_iter_mut() {
        let mean = row.sum() / t;
        row.add_scalar_mut(-mean);
        let sd = (row.norm_squared() / t).sqrt();
        if sd > 0.0 {
            row /= sd;
        }
    }
    out
}

/// Number of static factors from the eigenvalues of the standardized
/// differenced covariance.
pub fn estimate_r(diffs: &DMatrix<f64>, r_max: usize, method: FactorMethod) -> Result<FactorCountEstimate> {
    let (n, t) = diffs.shape();
    if r_max == 0 || r_max >= n.min(t) {
        return Err(Error::InvalidInput(format!("r_max = {r_max} must lie in 1..min(n, T) = {}", n.min(t))));
    }
    let z = standardize(diffs);
    let (mu, _) = sym_eigen_desc(&covariance_uncentered(&z));
    let mu: Vec<f64> = mu.iter().map(|v| v.max(0.0)).collect();
    let lead = mu[0];
    if !(lead > 0.0) || (lead - mu[n - 1]) <= 1e-12 * lead {
        return Err(Error::Selection(
            "differenced covariance has (numerically) equal eigenvalues; check the data for constant or duplicated series"
                .into(),
        ));
    }
    let floor = lead * 1e-14;
    let total: f64 = mu.iter().sum();
    let mut tail = total;
    let mut fit = Vec::with_capacity(r_max + 1);
    for k in 0..=r_max {
        if k > 0 {
            tail -= mu[k - 1];
        }
        fit.push(safe_log(tail / n as f64, floor));
    }
    let (nf, tf) = (n as f64, t as f64);
    let pen = (nf + tf) / (nf * tf) * nf.min(tf).ln();
    let ic = CriterionPath::from_fit(fit, pen, 0);

    let ratios: Vec<f64> = (1..=r_max).map(|k| mu[k - 1].max(floor) / mu[k].max(floor)).collect();
    let er_choice = 1 + argmax(&ratios);
    let selected = match method {
        FactorMethod::InformationCriterion => ic.selected,
        FactorMethod::EigenvalueRatio => er_choice,
    };
    Ok(FactorCountEstimate {
        selected,
        method,
        information_criterion: ic,
        eigenvalue_ratios: ratios,
        eigenvalue_ratio_choice: er_choice,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = k;
        }
    }
    best
}

/// `s(n,T) = log(m)/m` with `m = min(n, B², sqrt(T/B))`.
pub fn shock_penalty(n: usize, t_obs: usize, bandwidth: usize) -> f64 {
    let b = bandwidth as f64;
    let m = (n as f64).min(b * b).min((t_obs as f64 / b).sqrt());
    m.ln() / m
}

/// `p(n,T) = (sqrt(B log B / T) + 1/n) log(min(sqrt(T / (B log B)), n))`.
pub fn trend_penalty(n: usize, t_obs: usize, bandwidth: usize) -> f64 {
    let b = bandwidth as f64;
    let blog = b * b.ln();
    let nf = n as f64;
    let rate = (blog / t_obs as f64).max(0.0).sqrt();
    let inner = if blog > 0.0 { (t_obs as f64 / blog).sqrt().min(nf) } else { nf };
    (rate + 1.0 / nf) * inner.ln()
}

fn eigenvalues_of(sd: &SpectralDensity) -> DMatrix<f64> {
    match &sd.eigvals {
        Some(e) => e.clone(),
        None => dynamic_eigenvalues(&mut sd.clone()),
    }
}

/// Number of common shocks from the dynamic eigenvalues over all frequencies.
pub fn estimate_q(sd: &SpectralDensity, q_max: usize, penalty_c: f64) -> Result<CriterionPath> {
    let ev = eigenvalues_of(sd);
    q_path_from_eigenvalues(&ev, sd.t_obs, sd.bandwidth, q_max, penalty_c)
}

fn q_path_from_eigenvalues(
    ev: &DMatrix<f64>,
    t_obs: usize,
    bandwidth: usize,
    q_max: usize,
    penalty_c: f64,
) -> Result<CriterionPath> {
    let n = ev.nrows();
    if q_max >= n {
        return Err(Error::InvalidInput(format!("q_max = {q_max} must be below n = {n}")));
    }
    let h_count = ev.ncols() as f64;
    let row_mass: Vec<f64> = ev.row_iter().map(|r| r.iter().map(|v| v.max(0.0)).sum()).collect();
    let floor = row_mass[0] * 1e-14 / (n as f64 * h_count);
    let mut tail: f64 = row_mass.iter().sum();
    let mut fit = Vec::with_capacity(q_max + 1);
    for k in 0..=q_max {
        if k > 0 {
            tail -= row_mass[k - 1];
        }
        fit.push(safe_log(tail / (n as f64 * h_count), floor));
    }
    let pen = penalty_c * shock_penalty(n, t_obs, bandwidth);
    Ok(CriterionPath::from_fit(fit, pen, 0))
}

/// Number of common trends from the zero-frequency dynamic eigenvalues.
pub fn estimate_tau(sd: &SpectralDensity, tau_max: usize, penalty_c: f64) -> Result<CriterionPath> {
    let ev = eigenvalues_of(sd);
    tau_path_from_eigenvalues(&ev, sd.zero_index(), sd.t_obs, sd.bandwidth, tau_max, penalty_c)
}

fn tau_path_from_eigenvalues(
    ev: &DMatrix<f64>,
    zero: usize,
    t_obs: usize,
    bandwidth: usize,
    tau_max: usize,
    penalty_c: f64,
) -> Result<CriterionPath> {
    let n = ev.nrows();
    if tau_max >= n {
        return Err(Error::InvalidInput(format!("tau_max = {tau_max} must be below n = {n}")));
    }
    let mu: Vec<f64> = ev.column(zero).iter().map(|v| v.max(0.0)).collect();
    let floor = mu[0] * 1e-14 / n as f64;
    let mut tail: f64 = mu.iter().sum();
    let mut fit = Vec::with_capacity(tau_max + 1);
    for k in 0..=tau_max {
        if k > 0 {
            tail -= mu[k - 1];
        }
        fit.push(safe_log(tail / n as f64, floor));
    }
    let pen = penalty_c * trend_penalty(n, t_obs, bandwidth);
    Ok(CriterionPath::from_fit(fit, pen, 0))
}

/// Which spectral criterion a tuning scan targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Shocks,
    Trends,
}

/// One grid point of the penalty-stability scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub c: f64,
    /// Variance of the selected count across subsamples.
    pub variance: f64,
    /// Selected count on the full sample.
    pub full_sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub penalty_constant: f64,
    pub stability_path: Vec<StabilityPoint>,
    /// Set when no zero-variance interval exists and `c = 1` was used.
    pub fallback: bool,
}

/// Settings shared by the spectral criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSettings {
    /// `None` selects [`default_bandwidth`].
    pub bandwidth: Option<usize>,
    pub kernel: Kernel,
}

impl Default for SpectralSettings {
    fn default() -> Self {
        SpectralSettings { bandwidth: None, kernel: Kernel::Bartlett }
    }
}

impl SpectralSettings {
    pub fn bandwidth_for(&self, t_obs: usize) -> usize {
        self.bandwidth.unwrap_or_else(|| default_bandwidth(t_obs))
    }

    /// Spectral density with eigenvalues of a differenced panel.
    pub fn spectrum(&self, diffs: &DMatrix<f64>) -> Result<SpectralDensity> {
        let mut sd = lag_window_spectrum(diffs, self.bandwidth_for(diffs.ncols()), self.kernel)?;
        dynamic_eigenvalues(&mut sd);
        Ok(sd)
    }
}

/// Default tuning grid: `c = 0.01, 0.02, ..., 3.00`.
pub fn default_c_grid() -> Vec<f64> {
    (1..=300).map(|i| i as f64 * 0.01).collect()
}

/// `k` of `n` indices spread evenly over `0..n`.
fn strided_rows(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| i * n / k).collect()
}

pub fn default_subsample_fractions() -> Vec<f64> {
    vec![0.75, 0.8, 0.85, 0.9, 0.95, 1.0]
}

/// Penalty-constant scan over nested subsamples.
///
/// For each `c` the criterion is evaluated on `⌈f n⌉` evenly strided series
/// and the leading `⌈f T⌉` observations for every fraction `f`. Zero-variance
/// runs of the grid are stability intervals. A leading interval that selects
/// `k_max` is the degenerate small-penalty regime and is skipped when another
/// interval exists; the midpoint of the first remaining interval is returned.
pub fn tune_penalty(
    criterion: Criterion,
    diffs: &DMatrix<f64>,
    k_max: usize,
    c_grid: &[f64],
    fractions: &[f64],
    spectral: &SpectralSettings,
) -> Result<TuneResult> {
    if c_grid.is_empty() || c_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("penalty grid must be nonempty and strictly ascending".into()));
    }
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::InvalidInput("subsample fractions must lie in (0, 1]".into()));
    }
    let (n, t) = diffs.shape();
    let mut fracs = fractions.to_vec();
    if !fracs.contains(&1.0) {
        fracs.push(1.0);
    }
    // Eigenvalues per subsample, computed once and reused for every c.
    let mut subsamples = Vec::with_capacity(fracs.len());
    for &f in &fracs {
        let nj = ((f * n as f64).ceil() as usize).clamp(k_max + 1, n);
        let tj = ((f * t as f64).ceil() as usize).clamp(2, t);
        let rows = strided_rows(n, nj);
        let sub = DMatrix::from_fn(nj, tj, |i, j| diffs[(rows[i], j)]);
        let sd = spectral.spectrum(&sub)?;
        subsamples.push((f, sd));
    }
    let mut path = Vec::with_capacity(c_grid.len());
    for &c in c_grid {
        let mut counts = Vec::with_capacity(subsamples.len());
        let mut full = 0;
        for (f, sd) in &subsamples {
            let ev = sd.eigvals.as_ref().expect("eigenvalues computed");
            let k = match criterion {
                Criterion::Shocks => q_path_from_eigenvalues(ev, sd.t_obs, sd.bandwidth, k_max, c)?.selected,
                Criterion::Trends => {
                    tau_path_from_eigenvalues(ev, sd.zero_index(), sd.t_obs, sd.bandwidth, k_max, c)?.selected
                }
            };
            if *f == 1.0 {
                full = k;
            }
            counts.push(k as f64);
        }
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let variance = counts.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / counts.len() as f64;
        path.push(StabilityPoint { c, variance, full_sample_count: full });
    }

    let mut intervals: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, p) in path.iter().enumerate() {
        match (p.variance == 0.0, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                intervals.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        intervals.push((s, path.len() - 1));
    }
    if intervals.len() > 1 && intervals[0].0 == 0 && path[0].full_sample_count == k_max {
        intervals.remove(0);
    }
    match intervals.first() {
        Some(&(a, b)) => Ok(TuneResult {
            penalty_constant: 0.5 * (c_grid[a] + c_grid[b]),
            stability_path: path,
            fallback: false,
        }),
        None => Ok(TuneResult { penalty_constant: 1.0, stability_path: path, fallback: true }),
    }
}

/// Estimated counts and the evidence behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub r_hat: usize,
    pub q_hat: usize,
    pub tau_hat: usize,
    pub d_hat: usize,
    pub c_hat: usize,
    pub r_path: FactorCountEstimate,
    pub q_path: CriterionPath,
    pub tau_path: CriterionPath,
    pub q_penalty_constant: f64,
    pub tau_penalty_constant: f64,
    pub q_stability_path: Option<Vec<StabilityPoint>>,
    pub tau_stability_path: Option<Vec<StabilityPoint>>,
    pub bandwidth: usize,
    pub kernel: Kernel,
    pub warnings: Vec<String>,
}

/// Options for [`select_counts`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSettings {
    pub r_max: usize,
    pub q_max: usize,
    pub factor_method: FactorMethod,
    pub spectral: SpectralSettings,
    /// Fixed penalty constants, used unless `tune` is set.
    pub q_penalty: f64,
    pub tau_penalty: f64,
    pub tune: bool,
    pub c_grid: Vec<f64>,
    pub fractions: Vec<f64>,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        SelectionSettings {
            r_max: 10,
            q_max: 8,
            factor_method: FactorMethod::InformationCriterion,
            spectral: SpectralSettings::default(),
            q_penalty: 1.0,
            tau_penalty: 1.0,
            tune: false,
            c_grid: default_c_grid(),
            fractions: default_subsample_fractions(),
        }
    }
}

/// Counts fixed by the user; the criteria are still evaluated for reporting
/// but the fixed value is carried forward.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountOverrides {
    pub r: Option<usize>,
    pub q: Option<usize>,
    pub tau: Option<usize>,
}

impl CountOverrides {
    pub fn validate(&self) -> Result<()> {
        let bad = |a: Option<usize>, b: Option<usize>| matches!((a, b), (Some(x), Some(y)) if x > y);
        if bad(self.tau, self.q) || bad(self.q, self.r) || bad(self.tau, self.r) {
            return Err(Error::Config(format!(
                "explicit counts must satisfy tau <= q <= r (got r = {:?}, q = {:?}, tau = {:?})",
                self.r, self.q, self.tau
            )));
        }
        Ok(())
    }
}

/// Runs the `r`, `q` and `τ` criteria in sequence on a differenced panel.
///
/// Candidates are nested: `q_max` is capped at `r̂` and `τ_max` at `q̂`, so
/// `τ̂ <= q̂ <= r̂` always holds.
pub fn select_counts(diffs: &DMatrix<f64>, settings: &SelectionSettings) -> Result<SelectionResult> {
    select_counts_with(diffs, settings, CountOverrides::default())
}

/// [`select_counts`] with some counts fixed in advance.
pub fn select_counts_with(
    diffs: &DMatrix<f64>,
    settings: &SelectionSettings,
    fixed: CountOverrides,
) -> Result<SelectionResult> {
    fixed.validate()?;
    let (n, t) = diffs.shape();
    let r_max = settings.r_max.max(fixed.r.unwrap_or(0)).min(n.min(t).saturating_sub(1));
    let r_path = estimate_r(diffs, r_max, settings.factor_method)?;
    let r_hat = fixed.r.unwrap_or(r_path.selected);
    let sd = settings.spectral.spectrum(diffs)?;
    sd.check_invariants()?;
    let mut warnings = Vec::new();

    let q_max = settings.q_max.min(r_hat).min(n - 1);
    let (q_c, q_stab) = if settings.tune && q_max > 0 {
        let tr = tune_penalty(Criterion::Shocks, diffs, q_max, &settings.c_grid, &settings.fractions, &settings.spectral)?;
        if tr.fallback {
            warnings.push("q criterion: no stability interval, penalty constant set to 1".to_string());
        }
        (tr.penalty_constant, Some(tr.stability_path))
    } else {
        (settings.q_penalty, None)
    };
    let q_path = estimate_q(&sd, q_max, q_c)?;
    let q_hat = fixed.q.unwrap_or(q_path.selected);
    if q_hat > r_hat {
        return Err(Error::Config(format!("q = {q_hat} exceeds r = {r_hat}")));
    }

    let tau_max = q_hat;
    let (tau_c, tau_stab) = if settings.tune && tau_max > 0 {
        let tr = tune_penalty(Criterion::Trends, diffs, tau_max, &settings.c_grid, &settings.fractions, &settings.spectral)?;
        if tr.fallback {
            warnings.push("tau criterion: no stability interval, penalty constant set to 1".to_string());
        }
        (tr.penalty_constant, Some(tr.stability_path))
    } else {
        (settings.tau_penalty, None)
    };
    let tau_path = estimate_tau(&sd, tau_max, tau_c)?;
    let tau_hat = fixed.tau.unwrap_or(tau_path.selected);
    if tau_hat > q_hat {
        return Err(Error::Config(format!("tau = {tau_hat} exceeds q = {q_hat}")));
    }

    Ok(SelectionResult {
        r_hat,
        q_hat,
        tau_hat,
        d_hat: q_hat - tau_hat,
        c_hat: r_hat - tau_hat,
        r_path,
        q_path,
        tau_path,
        q_penalty_constant: q_c,
        tau_penalty_constant: tau_c,
        q_stability_path: q_stab,
        tau_stability_path: tau_stab,
        bandwidth: sd.bandwidth,
        kernel: sd.kernel,
        warnings,
    })
}
