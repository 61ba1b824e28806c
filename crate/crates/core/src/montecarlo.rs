//! Simulation design for the estimators: a singular, cointegrated factor
//! VAR(2) loaded on a panel with possibly integrated idiosyncratic parts,
//! the true impulse responses, and the experiment grid that reports MSEs by
//! horizon and the hit rates of the count criteria.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::estimate_factors;
use crate::irf::{recursive_rotation, Dynamics, IrfSet, Normalization};
use crate::lagpoly::companion_eigenvalues;
use crate::linalg::random_orthogonal;
use crate::panel::{detrend, difference, DetrendMethod};
use crate::pipeline::{estimate_irf, Counts, IdentifySpec, PipelineSpec};
use crate::rng::stream;
use crate::selection::{
    default_c_grid, default_subsample_fractions, estimate_q, estimate_tau, tune_penalty, Criterion, SpectralSettings,
};

/// Fixed parameters of the simulated model, drawn once per experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpParams {
    /// `n x r`, standard normal entries.
    pub loadings: DMatrix<f64>,
    /// `r x r`, spectral radius 0.6.
    pub u1: DMatrix<f64>,
    /// `r x q`.
    pub k: DMatrix<f64>,
    /// `q x q` orthogonal rotation making the impact block of the first `q`
    /// variables lower triangular.
    pub rotation: DMatrix<f64>,
    /// VAR(2) coefficients of `(I - U_1 L) diag((1 - L) I_{r-c}, I_c)`.
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub r: usize,
    pub q: usize,
    pub c: usize,
}

impl DgpParams {
    pub fn n(&self) -> usize {
        self.loadings.nrows()
    }

    /// `K R`.
    pub fn impact(&self) -> DMatrix<f64> {
        &self.k * &self.rotation
    }

    pub fn var_coeffs(&self) -> Vec<DMatrix<f64>> {
        vec![self.a1.clone(), self.a2.clone()]
    }

    /// The same model restricted to the first `n` series.
    pub fn truncated(&self, n: usize) -> DgpParams {
        let mut p = self.clone();
        p.loadings = self.loadings.rows(0, n).into_owned();
        p
    }
}

/// Smallest admissible ratio of an identified impact response on the
/// diagonal to the largest one.
pub const MIN_IMPACT_DIAGONAL: f64 = 0.2;

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Draw the fixed parameters. Rows of `Λ` are drawn last so that a larger
/// `n` extends a smaller one with the same first rows.
pub fn gen_params(n: usize, r: usize, q: usize, c: usize, seed: u64) -> Result<DgpParams> {
    if c >= r || q == 0 || q > r || q > n {
        return Err(Error::InvalidInput(format!("need c < r, 1 <= q <= min(r, n); got r = {r}, q = {q}, c = {c}, n = {n}")));
    }
    let mut rng = stream(seed, "dgp", 0);
    let diag = Uniform::new(0.5, 0.8).expect("valid range");
    let off = Uniform::new(0.0, 0.3).expect("valid range");
    let mut u1 = DMatrix::from_fn(r, r, |i, j| if i == j { rng.sample(diag) } else { rng.sample(off) });
    u1 *= 0.6 / spectral_radius(&u1);

    let kt = Uniform::new(0.8, 1.2).expect("valid range");
    let normal_rows = |rng: &mut rand_chacha::ChaCha8Rng, rows: usize| {
        let draws: Vec<f64> = (0..rows * r).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        DMatrix::from_row_slice(rows, r, &draws)
    };
    // K and the first q rows of Λ are redrawn together until every
    // identified impact response on the diagonal is at least
    // MIN_IMPACT_DIAGONAL times the largest one; otherwise the sign of a
    // shock is fixed by a response that is numerically zero.
    let (k, head, rotation) = loop {
        let kcheck = random_orthogonal(&mut rng, r);
        let kdiag: Vec<f64> = (0..q).map(|_| rng.sample(kt)).collect();
        let k = DMatrix::from_fn(r, q, |i, j| kcheck[(i, j)] * kdiag[j].sqrt());
        let head = normal_rows(&mut rng, q);
        let m = &head * &k;
        let Ok(rotation) = recursive_rotation(&m) else { continue };
        let impact = &m * &rotation;
        let diag: Vec<f64> = (0..q).map(|j| impact[(j, j)].abs()).collect();
        let top = diag.iter().cloned().fold(0.0, f64::max);
        if diag.iter().all(|d| *d >= MIN_IMPACT_DIAGONAL * top) {
            break (k, head, rotation);
        }
    };
    let tail = normal_rows(&mut rng, n - q);
    let mut loadings = DMatrix::zeros(n, r);
    loadings.rows_mut(0, q).copy_from(&head);
    loadings.rows_mut(q, n - q).copy_from(&tail);

    let mut e = DMatrix::zeros(r, r);
    for i in 0..(r - c) {
        e[(i, i)] = 1.0;
    }
    let a1 = &u1 + &e;
    let a2 = -(&u1 * &e);
    Ok(DgpParams { loadings, u1, k, rotation, a1, a2, r, q, c })
}

/// One simulated panel.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    /// `n x (T+1)`, column 0 is zero.
    pub x: DMatrix<f64>,
    pub common: DMatrix<f64>,
    pub idiosyncratic: DMatrix<f64>,
    /// `r x (T+1)`.
    pub factors: DMatrix<f64>,
    /// Unit-root flags: the first `m` series.
    pub rho: Vec<f64>,
    pub d_coef: Vec<f64>,
    pub idio_scale: Vec<f64>,
}

fn sample_var(row: impl Iterator<Item = f64> + Clone) -> f64 {
    let v: Vec<f64> = row.collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64
}

/// Simulate one replication from zero initial conditions.
///
/// The idiosyncratic part of series `i` is `ξ_it = ρ_i ξ_{i,t-1} + e_it` with
/// `e_it = d_i e_{i,t-1} + ε_it`, `d_i ~ U[0, 0.5]`, and cross-sectionally
/// correlated shocks `ε_i = 0.5 ε_{i-1} + sqrt(0.75) η_i`. Each `ξ_i` is then
/// scaled so that `var(Δξ_i) = 0.5 var(Δχ_i)`.
pub fn simulate_panel(params: &DgpParams, n: usize, t: usize, m: usize, seed: u64, replication: u64) -> Result<SimOutput> {
    if n > params.n() || m > n || t < 2 {
        return Err(Error::InvalidInput(format!(
            "need m <= n <= {} and T >= 2; got n = {n}, m = {m}, T = {t}",
            params.n()
        )));
    }
    let r = params.r;
    let mut rng = stream(seed, "replication", replication);
    let impact = params.impact();
    let mut f = DMatrix::zeros(r, t + 1);
    for s in 1..=t {
        let u = DVector::from_fn(params.q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut next = &impact * u + &params.a1 * f.column(s - 1);
        if s >= 2 {
            next += &params.a2 * f.column(s - 2);
        }
        f.set_column(s, &next);
    }
    let lam = params.loadings.rows(0, n);
    let common = lam * &f;

    let dist = Uniform::new(0.0, 0.5).expect("valid range");
    let d_coef: Vec<f64> = (0..n).map(|_| rng.sample(dist)).collect();
    let rho: Vec<f64> = (0..n).map(|i| if i < m { 1.0 } else { 0.0 }).collect();
    let a = 0.75_f64.sqrt();
    let mut xi = DMatrix::zeros(n, t + 1);
    let mut e_prev = vec![0.0; n];
    for s in 1..=t {
        let mut eps_prev = 0.0;
        for i in 0..n {
            let eta: f64 = rng.sample(StandardNormal);
            let eps = if i == 0 { eta } else { 0.5 * eps_prev + a * eta };
            eps_prev = eps;
            let e = d_coef[i] * e_prev[i] + eps;
            e_prev[i] = e;
            xi[(i, s)] = rho[i] * xi[(i, s - 1)] + e;
        }
    }
    let dchi = difference(&common)?;
    let dxi = difference(&xi)?;
    let mut idio_scale = Vec::with_capacity(n);
    for i in 0..n {
        let vc = sample_var(dchi.row(i).iter().copied());
        let vx = sample_var(dxi.row(i).iter().copied());
        let s = if vx > 0.0 { (0.5 * vc / vx).sqrt() } else { 0.0 };
        xi.row_mut(i).scale_mut(s);
        idio_scale.push(s);
    }
    let x = &common + &xi;
    Ok(SimOutput { x, common, idiosyncratic: xi, factors: f, rho, d_coef, idio_scale })
}

/// True responses `φ_ijk = λ_i' Ψ_k (K R)_j`, with `Ψ_k` propagated directly
/// through the VAR(2): `Ψ_0 = I`, `Ψ_k = A_1 Ψ_{k-1} + A_2 Ψ_{k-2}`.
pub fn true_irf(params: &DgpParams, horizon: usize) -> Vec<DMatrix<f64>> {
    let impact = params.impact();
    let mut resp: Vec<DMatrix<f64>> = Vec::with_capacity(horizon + 1);
    resp.push(impact.clone());
    for k in 1..=horizon {
        let mut next = &params.a1 * &resp[k - 1];
        if k >= 2 {
            next += &params.a2 * &resp[k - 2];
        }
        resp.push(next);
    }
    resp.iter().map(|p| &params.loadings * p).collect()
}

/// Number of companion eigenvalues of the simulated VAR(2) within `tol` of 1.
pub fn unit_root_count(params: &DgpParams, tol: f64) -> usize {
    companion_eigenvalues(&params.var_coeffs())
        .iter()
        .filter(|z| (**z - num_complex::Complex64::new(1.0, 0.0)).norm() < tol)
        .count()
}

/// Sum of squared errors at each requested horizon for one replicate.
pub fn squared_errors(est: &IrfSet, truth: &[DMatrix<f64>], horizons: &[usize]) -> Result<Vec<f64>> {
    horizons
        .iter()
        .map(|&k| {
            let (e, t) = (est.coeffs.get(k), truth.get(k));
            match (e, t) {
                (Some(e), Some(t)) if e.shape() == t.shape() => Ok((e - t).norm_squared()),
                _ => Err(Error::Dimension(format!("horizon {k}: estimate and truth do not match"))),
            }
        })
        .collect()
}

/// `MSE(k) = (1/(R n q)) Σ_h Σ_i Σ_j (φ̂^{(h)}_ijk - φ_ijk)²` over the `R`
/// replicates supplied.
pub fn mse_table(est: &[IrfSet], truth: &[DMatrix<f64>], horizons: &[usize]) -> Result<Vec<f64>> {
    let first = est.first().ok_or_else(|| Error::InvalidInput("no replicates".into()))?;
    let (n, q) = (first.n(), first.q());
    let mut total = vec![0.0; horizons.len()];
    for e in est {
        if e.n() != n || e.q() != q {
            return Err(Error::Dimension("replicates differ in shape".into()));
        }
        for (acc, v) in total.iter_mut().zip(squared_errors(e, truth, horizons)?) {
            *acc += v;
        }
    }
    let denom = (est.len() * n * q) as f64;
    Ok(total.into_iter().map(|v| v / denom).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentPipeline {
    Vecm,
    Var,
    Selection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub t: usize,
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    pub r: usize,
    pub q: usize,
    pub c: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims { r: 4, q: 3, c: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionExperiment {
    /// Largest candidate number of shocks; `None` uses the true `r`.
    pub q_max: Option<usize>,
    /// Largest candidate number of trends; `None` uses `q̂`.
    pub tau_max: Option<usize>,
    /// Tune the penalty constants per replicate by the stability scan.
    pub tune: bool,
    pub q_penalty: f64,
    pub tau_penalty: f64,
    pub c_grid: Vec<f64>,
    pub fractions: Vec<f64>,
    pub spectral: SpectralSettings,
}

impl Default for SelectionExperiment {
    fn default() -> Self {
        SelectionExperiment {
            q_max: None,
            tau_max: None,
            tune: true,
            q_penalty: 1.0,
            tau_penalty: 1.0,
            c_grid: default_c_grid(),
            fractions: default_subsample_fractions(),
            spectral: SpectralSettings::default(),
        }
    }
}

/// Experiment description, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub replications: usize,
    pub cells: Vec<Cell>,
    pub pipelines: Vec<ExperimentPipeline>,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default)]
    pub model: ModelDims,
    /// Lagged differences in the VECM.
    #[serde(default = "one")]
    pub vecm_lags: usize,
    /// Levels lags in the VAR.
    #[serde(default = "two")]
    pub var_lags: usize,
    /// Detrending applied to each simulated panel before estimation.
    #[serde(default = "no_detrend")]
    pub detrend: DetrendMethod,
    #[serde(default)]
    pub selection: SelectionExperiment,
    /// Seed used when none is given on the command line.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_horizons() -> Vec<usize> {
    vec![0, 1, 4, 8, 12, 16, 20]
}
fn no_detrend() -> DetrendMethod {
    DetrendMethod::None
}
fn one() -> usize {
    1
}
fn two() -> usize {
    2
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("experiment grid has no cells".into()));
        }
        if self.pipelines.is_empty() {
            return Err(Error::Config("experiment lists no pipelines".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be positive".into()));
        }
        let ModelDims { r, q, c } = self.model;
        if c >= r || q == 0 || q > r {
            return Err(Error::Config(format!("invalid model dimensions r = {r}, q = {q}, c = {c}")));
        }
        for cell in &self.cells {
            if cell.m > cell.n || cell.n < q || cell.t < 10 {
                return Err(Error::Config(format!("invalid cell {cell:?}")));
            }
        }
        Ok(())
    }
}

/// MSE row of one cell and one dynamics estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub cell: Cell,
    pub dynamics: Dynamics,
    pub horizons: Vec<usize>,
    /// Empty when the cell was aborted.
    pub mse: Vec<f64>,
    pub replications: usize,
    pub failures: usize,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub cell: Cell,
    pub tau_correct_pct: f64,
    pub q_correct_pct: f64,
    pub replications: usize,
    pub failures: usize,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: Option<String>,
    pub seed: u64,
    pub model: ModelDims,
    pub mse: Vec<MseRow>,
    pub selection: Vec<SelectionRow>,
}

impl ExperimentReport {
    /// Rows `T,n,m,k=0,...` for one estimator.
    pub fn write_mse_csv<W: std::io::Write>(&self, dynamics: Dynamics, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let rows: Vec<&MseRow> = self.mse.iter().filter(|r| r.dynamics == dynamics).collect();
        let Some(first) = rows.first() else {
            return Ok(());
        };
        let mut header = vec!["T".to_string(), "n".to_string(), "m".to_string()];
        header.extend(first.horizons.iter().map(|k| format!("k={k}")));
        header.push("failures".into());
        w.write_record(&header)?;
        for row in rows {
            let mut rec = vec![row.cell.t.to_string(), row.cell.n.to_string(), row.cell.m.to_string()];
            if row.aborted.is_some() {
                rec.extend(row.horizons.iter().map(|_| "NA".to_string()));
            } else {
                rec.extend(row.mse.iter().map(|v| format!("{v:.3}")));
            }
            rec.push(row.failures.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rows `T,n,m,tau_correct,q_correct` in percent.
    pub fn write_selection_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["T", "n", "m", "tau_correct", "q_correct", "failures"])?;
        for row in &self.selection {
            let (a, b) = if row.aborted.is_some() {
                ("NA".to_string(), "NA".to_string())
            } else {
                (format!("{:.1}", row.tau_correct_pct), format!("{:.1}", row.q_correct_pct))
            };
            w.write_record([row.cell.t.to_string(), row.cell.n.to_string(), row.cell.m.to_string(), a, b, row.failures.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Estimated IRF for one simulated panel, true counts, recursive
/// identification on the first `q` variables.
pub fn estimate_replicate(
    x: &DMatrix<f64>,
    detrend_method: DetrendMethod,
    dims: ModelDims,
    dynamics: Dynamics,
    lags: usize,
    horizon: usize,
) -> Result<IrfSet> {
    let counts = Counts { r: dims.r, q: dims.q, tau: dims.r - dims.c };
    let spec = PipelineSpec {
        dynamics,
        lags: Some(lags),
        intercept: true,
        identify: IdentifySpec::Recursive { order: (0..dims.q).collect() },
        normalize: None::<Normalization>,
        horizon,
        ..PipelineSpec::default()
    };
    let (_, x) = detrend(x, detrend_method)?;
    let factors = estimate_factors(&x, dims.r)?;
    estimate_irf(&factors, counts, &spec).map(|(_, _, irf, _)| irf)
}

/// `(q̂, τ̂)` on one simulated panel.
pub fn select_replicate(x: &DMatrix<f64>, dims: ModelDims, sel: &SelectionExperiment) -> Result<(usize, usize)> {
    let diffs = difference(x)?;
    let sd = sel.spectral.spectrum(&diffs)?;
    let q_max = sel.q_max.unwrap_or(dims.r);
    let q_c = if sel.tune {
        tune_penalty(Criterion::Shocks, &diffs, q_max, &sel.c_grid, &sel.fractions, &sel.spectral)?.penalty_constant
    } else {
        sel.q_penalty
    };
    let q_hat = estimate_q(&sd, q_max, q_c)?.selected;
    let tau_max = sel.tau_max.unwrap_or(q_hat).max(1);
    let tau_c = if sel.tune {
        tune_penalty(Criterion::Trends, &diffs, tau_max, &sel.c_grid, &sel.fractions, &sel.spectral)?.penalty_constant
    } else {
        sel.tau_penalty
    };
    let tau_hat = estimate_tau(&sd, tau_max, tau_c)?.selected;
    Ok((q_hat, tau_hat))
}

const MAX_FAILURE_SHARE: f64 = 0.05;

fn too_many(failures: usize, reps: usize) -> bool {
    failures as f64 > MAX_FAILURE_SHARE * reps as f64
}

/// Run every cell and pipeline. Replicates run in parallel with their own
/// random streams and are reduced in index order, so the report depends only
/// on `(config, seed)`.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentReport> {
    cfg.validate()?;
    let dims = cfg.model;
    let n_max = cfg.cells.iter().map(|c| c.n).max().expect("validated nonempty");
    let params_all = gen_params(n_max, dims.r, dims.q, dims.c, seed)?;
    let h_max = cfg.horizons.iter().copied().max().unwrap_or(0);
    let mut report = ExperimentReport { name: cfg.name.clone(), seed, model: dims, mse: Vec::new(), selection: Vec::new() };

    for (ci, cell) in cfg.cells.iter().enumerate() {
        let params = params_all.truncated(cell.n);
        let truth = true_irf(&params, h_max);
        let cell_seed = crate::rng::derive_seed(seed, "cell", ci as u64);
        log::info!("cell T = {}, n = {}, m = {}: {} replications", cell.t, cell.n, cell.m, cfg.replications);

        // Per replicate: per-pipeline outcome.
        type Outcome = (Vec<Option<Vec<f64>>>, Option<(usize, usize)>, Option<String>);
        let outcomes: Vec<Outcome> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let sim = match simulate_panel(&params, cell.n, cell.t, cell.m, cell_seed, rep as u64) {
                    Ok(s) => s,
                    Err(e) => return (vec![None; cfg.pipelines.len()], None, Some(e.to_string())),
                };
                let mut errs = Vec::with_capacity(cfg.pipelines.len());
                let mut sel = None;
                let mut last_err = None;
                for p in &cfg.pipelines {
                    match p {
                        ExperimentPipeline::Vecm | ExperimentPipeline::Var => {
                            let (dynamics, lags) = if *p == ExperimentPipeline::Vecm {
                                (Dynamics::Vecm, cfg.vecm_lags)
                            } else {
                                (Dynamics::Var, cfg.var_lags)
                            };
                            let res = estimate_replicate(&sim.x, cfg.detrend, dims, dynamics, lags, h_max)
                                .and_then(|irf| squared_errors(&irf, &truth, &cfg.horizons));
                            match res {
                                Ok(v) => errs.push(Some(v)),
                                Err(e) => {
                                    last_err = Some(e.to_string());
                                    errs.push(None)
                                }
                            }
                        }
                        ExperimentPipeline::Selection => {
                            errs.push(None);
                            match select_replicate(&sim.x, dims, &cfg.selection) {
                                Ok(v) => sel = Some(v),
                                Err(e) => last_err = Some(e.to_string()),
                            }
                        }
                    }
                }
                (errs, sel, last_err)
            })
            .collect();

        for (pi, p) in cfg.pipelines.iter().enumerate() {
            match p {
                ExperimentPipeline::Vecm | ExperimentPipeline::Var => {
                    let dynamics = if *p == ExperimentPipeline::Vecm { Dynamics::Vecm } else { Dynamics::Var };
                    let mut total = vec![0.0; cfg.horizons.len()];
                    let mut ok = 0;
                    let mut failures = 0;
                    for o in &outcomes {
                        match &o.0[pi] {
                            Some(v) => {
                                ok += 1;
                                for (a, b) in total.iter_mut().zip(v) {
                                    *a += b;
                                }
                            }
                            None => failures += 1,
                        }
                    }
                    let aborted = too_many(failures, cfg.replications).then(|| {
                        let why = outcomes.iter().find_map(|o| o.2.clone()).unwrap_or_default();
                        let msg = format!("{failures} of {} replicates failed (last error: {why})", cfg.replications);
                        log::error!("cell {cell:?}, {dynamics}: {msg}");
                        msg
                    });
                    let denom = (ok * cell.n * dims.q) as f64;
                    let mse = if aborted.is_none() && ok > 0 { total.iter().map(|v| v / denom).collect() } else { Vec::new() };
                    report.mse.push(MseRow {
                        cell: *cell,
                        dynamics,
                        horizons: cfg.horizons.clone(),
                        mse,
                        replications: ok,
                        failures,
                        aborted,
                    });
                }
                ExperimentPipeline::Selection => {
                    let hits: Vec<(usize, usize)> = outcomes.iter().filter_map(|o| o.1).collect();
                    let failures = cfg.replications - hits.len();
                    let tau_true = dims.r - dims.c;
                    let pct = |f: &dyn Fn(&(usize, usize)) -> bool| {
                        100.0 * hits.iter().filter(|h| f(h)).count() as f64 / hits.len().max(1) as f64
                    };
                    let aborted = too_many(failures, cfg.replications)
                        .then(|| format!("{failures} of {} replicates failed", cfg.replications));
                    report.selection.push(SelectionRow {
                        cell: *cell,
                        tau_correct_pct: pct(&|h| h.1 == tau_true),
                        q_correct_pct: pct(&|h| h.0 == dims.q),
                        replications: hits.len(),
                        failures,
                        aborted,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irf::{identify_recursive, invert_polynomial, raw_irf};
    use crate::lagpoly::unit_root_rank_deficiency;

    fn params() -> DgpParams {
        gen_params(60, 4, 3, 3, 11).unwrap()
    }

    #[test]
    fn parameter_invariants() {
        let p = params();
        assert!((spectral_radius(&p.u1) - 0.6).abs() < 1e-8);
        assert!((p.rotation.transpose() * &p.rotation - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-10);
        let ktk = p.k.transpose() * &p.k;
        let ev = ktk.symmetric_eigenvalues();
        assert!(ev.iter().all(|v| (0.64..=1.44).contains(v)), "{ev}");
        assert_eq!(unit_root_count(&p, 1e-8), 1);
        assert_eq!(unit_root_rank_deficiency(&p.var_coeffs(), 4, 1e-6), 1);
        assert_eq!(params(), p);
    }

    #[test]
    fn larger_panels_extend_smaller_ones() {
        let a = gen_params(30, 4, 3, 3, 5).unwrap();
        let b = gen_params(80, 4, 3, 3, 5).unwrap();
        assert_eq!(b.truncated(30), a);
    }

    #[test]
    fn impact_restrictions_hold() {
        let p = params();
        let truth = true_irf(&p, 5);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!(truth[0][(i, j)].abs() < 1e-10);
        }
        assert!((&truth[0] - &p.loadings * p.impact()).abs().max() < 1e-12);
    }

    #[test]
    fn true_irf_matches_the_polynomial_inverse() {
        let p = params();
        let truth = true_irf(&p, 30);
        let b = invert_polynomial(&p.var_coeffs(), 4, 30);
        let raw = raw_irf(&p.loadings, &b, &p.k, 30, Dynamics::Vecm).unwrap();
        let id = identify_recursive(&raw, &[0, 1, 2]).unwrap();
        for (x, y) in id.coeffs.iter().zip(&truth) {
            assert!((x - y).abs().max() < 1e-10);
        }
    }

    #[test]
    fn responses_converge_to_a_rank_one_long_run() {
        let p = params();
        let truth = true_irf(&p, 260);
        assert!((&truth[260] - &truth[259]).abs().max() < 1e-6);
        let sv = truth[260].clone().svd(false, false).singular_values;
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        assert!(s[1] < 1e-6 * s[0]);
        assert!(s[0] > 0.0);
    }

    #[test]
    fn simulation_is_deterministic_and_starts_at_zero() {
        let p = params();
        let a = simulate_panel(&p, 40, 80, 10, 3, 0).unwrap();
        let b = simulate_panel(&p, 40, 80, 10, 3, 0).unwrap();
        assert_eq!(a, b);
        assert!(a.x.column(0).iter().all(|v| *v == 0.0));
        let dchi = difference(&a.common).unwrap();
        let dxi = difference(&a.idiosyncratic).unwrap();
        for i in 0..40 {
            let r = sample_var(dxi.row(i).iter().copied()) / sample_var(dchi.row(i).iter().copied());
            assert!((r - 0.5).abs() < 1e-10);
        }
        assert_eq!(a.rho.iter().filter(|v| **v == 1.0).count(), 10);
        assert!(simulate_panel(&p, 40, 80, 41, 3, 0).is_err());
    }

    #[test]
    fn stationary_idiosyncratic_levels_do_not_grow_linearly() {
        let p = params();
        let mut v = Vec::new();
        for t in [200, 800, 3200] {
            let s = simulate_panel(&p, 20, t, 0, 4, 0).unwrap();
            let mean_var: f64 =
                (0..20).map(|i| sample_var(s.idiosyncratic.row(i).iter().copied())).sum::<f64>() / 20.0;
            v.push(mean_var);
        }
        // Idiosyncratic scale is tied to Δχ, so compare the ratio of growth
        // with the 16-fold increase in T.
        assert!(v[2] / v[0] < 4.0, "{v:?}");
    }

    #[test]
    fn difference_eigenvalues_grow_with_n() {
        let p = gen_params(200, 4, 3, 3, 12).unwrap();
        let mut logs = Vec::new();
        for n in [50, 100, 200] {
            let s = simulate_panel(&p, n, 400, 0, 5, 0).unwrap();
            let d = difference(&s.x).unwrap();
            let cov = crate::factors::covariance_uncentered(&d);
            let ev = crate::linalg::sym_eigen_desc(&cov).0;
            logs.push(((n as f64).ln(), ev[0].ln()));
        }
        let slope = (logs[2].1 - logs[0].1) / (logs[2].0 - logs[0].0);
        assert!((0.7..=1.3).contains(&slope), "{slope}");
    }

    #[test]
    fn mse_examples() {
        let p = params();
        let truth = true_irf(&p, 3);
        let b = invert_polynomial(&p.var_coeffs(), 4, 3);
        let raw = raw_irf(&p.loadings, &b, &p.impact(), 3, Dynamics::Vecm).unwrap();
        let mut exact = raw.clone();
        exact.coeffs = truth.clone();
        assert_eq!(mse_table(&[exact], &truth, &[0, 1, 3]).unwrap(), vec![0.0; 3]);
        assert!(mse_table(&[raw.clone()], &truth, &[0, 1, 3]).unwrap().iter().all(|v| *v < 1e-25));
        let mut off = raw.clone();
        for c in &mut off.coeffs {
            c.add_scalar_mut(1.0);
        }
        let mse = mse_table(&[off], &truth, &[0, 3]).unwrap();
        assert!(mse.iter().all(|v| (v - 1.0).abs() < 1e-10));
        assert!(mse_table(&[raw], &truth, &[4]).is_err());
    }

    #[test]
    fn config_parsing_and_validation() {
        let text = r#"
            replications = 4
            pipelines = ["vecm", "selection"]
            [[cells]]
            t = 60
            n = 30
            m = 10
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.horizons, vec![0, 1, 4, 8, 12, 16, 20]);
        assert_eq!(cfg.model, ModelDims::default());
        let empty = "replications = 4\npipelines = [\"vecm\"]\ncells = []\n";
        assert!(matches!(ExperimentConfig::from_toml(empty), Err(Error::Config(_))));
    }

    #[test]
    fn small_experiment_is_reproducible() {
        let text = r#"
            replications = 6
            pipelines = ["vecm", "var", "selection"]
            horizons = [0, 4]
            [selection]
            tune = false
            [[cells]]
            t = 60
            n = 30
            m = 10
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let a = run_experiment(&cfg, 1).unwrap();
        let b = run_experiment(&cfg, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mse.len(), 2);
        assert_eq!(a.selection.len(), 1);
        let mut buf = Vec::new();
        a.write_mse_csv(Dynamics::Vecm, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("T,n,m,k=0,k=4,failures"));
    }
}
