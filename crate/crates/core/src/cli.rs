//! Command-line front end. Every command reads files, writes files into
//! `--out`, and depends only on its inputs, its options and `--seed`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{load_panel, write_criterion_paths, write_eigenvalues, write_panel, write_stability_paths};
use crate::irf::{Dynamics, IrfSet, Normalization};
use crate::montecarlo::{gen_params, run_experiment, simulate_panel, true_irf, ExperimentConfig, ExperimentPipeline};
use crate::panel::{apply_transforms, detrend, difference, DetrendMethod, Frequency, Panel};
use crate::pipeline::{self, bootstrap_bands, BootstrapSpec, Count, IdentifySpec, PipelineSpec};
use crate::selection::{select_counts_with, CountOverrides, SelectionSettings};
use crate::serial::MatrixJson;
use crate::spectral::Kernel;

const TABLE1_SMALL: &str = include_str!("../configs/table1_small.toml");
const TABLE3_SMALL: &str = include_str!("../configs/table3_small.toml");

/// Bundled experiment configurations by name.
pub fn bundled_config(name: &str) -> Option<&'static str> {
    match name {
        "table1_small" => Some(TABLE1_SMALL),
        "table3_small" => Some(TABLE3_SMALL),
        _ => None,
    }
}

#[derive(Debug, Parser)]
#[command(name = "nsdfm", version, about = "Nonstationary dynamic factor models: counts, factors, VECM/VAR dynamics and impulse responses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply transform codes and quarterly aggregation; write the panel used downstream.
    Ingest(RunArgs),
    /// Estimate the numbers of factors, shocks and trends.
    Select(RunArgs),
    /// Estimate factors and their VECM or VAR dynamics.
    Estimate(RunArgs),
    /// Identified impulse responses, optionally with bootstrap bands.
    Irf(RunArgs),
    /// Simulate a panel from the Monte Carlo design.
    Simulate(SimArgs),
    /// Run a Monte Carlo experiment and write its tables.
    Experiment(ExperimentArgs),
}

/// Options shared by the data commands. A `--config` TOML file may set any
/// of them under the same names; flags win.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunArgs {
    /// TOML file with any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Wide CSV: header of series names, optional leading date column.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Sidecar CSV `series,code[,freq]` with codes 1 (level), 2 (log), 3 (Δlog).
    #[arg(long)]
    pub transforms: Option<PathBuf>,
    /// monthly, quarterly or daily; non-quarterly data are averaged to quarters.
    #[arg(long)]
    pub frequency: Option<String>,
    /// ls, demean or none.
    #[arg(long)]
    pub detrend: Option<String>,
    /// Static factors: `auto` or a number.
    #[arg(long)]
    pub r: Option<String>,
    /// Common shocks: `auto` or a number.
    #[arg(long)]
    pub q: Option<String>,
    /// Common trends: `auto` or a number.
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub r_max: Option<usize>,
    #[arg(long)]
    pub q_max: Option<usize>,
    /// Tune the q and tau penalties over subsamples instead of using c = 1.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub tune: Option<bool>,
    /// Lag-window kernel: bartlett or parzen.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Lag-window bandwidth; default floor(0.75 sqrt(T)).
    #[arg(long)]
    pub bandwidth: Option<usize>,
    /// vecm or var.
    #[arg(long)]
    pub dynamics: Option<String>,
    /// Lagged differences (vecm) or levels lags (var).
    #[arg(long)]
    pub lags: Option<usize>,
    /// Leave out the intercept in the factor dynamics.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_intercept: Option<bool>,
    /// raw, recursive or permanent.
    #[arg(long)]
    pub identify: Option<String>,
    /// Comma-separated variable names for the recursive ordering.
    #[arg(long)]
    pub order: Option<String>,
    /// Variable whose long-run response fixes the sign of permanent shocks.
    #[arg(long)]
    pub sign_variable: Option<String>,
    /// `variable:horizon:value[:shock]`, shock counted from 1.
    #[arg(long)]
    pub normalize: Option<String>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Bootstrap replicates; bands are skipped when absent.
    #[arg(long)]
    pub boot: Option<usize>,
    #[arg(long)]
    pub coverage: Option<f64>,
    #[arg(long)]
    pub block_length: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => { $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )* };
}

impl RunArgs {
    /// Fills options missing on the command line from `--config`.
    pub fn with_config(mut self) -> Result<RunArgs> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: RunArgs = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        overlay!(self, file; data, transforms, frequency, detrend, r, q, tau, r_max, q_max, tune, kernel, bandwidth,
            dynamics, lags, no_intercept, identify, order, sign_variable, normalize, horizon, boot, coverage,
            block_length, seed, out);
        Ok(self)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("nsdfm-out"))
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

fn parse_opt<T: FromStr<Err = Error>>(v: &Option<String>, flag: &str) -> Result<Option<T>> {
    v.as_deref()
        .map(|s| {
            s.parse::<T>().map_err(|e| match e {
                Error::Config(_) => e,
                other => Error::Config(format!("--{flag}: {other}")),
            })
        })
        .transpose()
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Last time index; the panel has T + 1 columns.
    #[arg(long, default_value_t = 100)]
    pub t: usize,
    /// Series with an integrated idiosyncratic component.
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    #[arg(long, default_value_t = 4)]
    pub r: usize,
    #[arg(long, default_value_t = 3)]
    pub q: usize,
    /// Cointegration rank of the factors.
    #[arg(long, default_value_t = 3)]
    pub c: usize,
    /// Horizon of the true impulse responses written alongside.
    #[arg(long, default_value_t = 20)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replication index within the seed.
    #[arg(long, default_value_t = 0)]
    pub replication: u64,
    #[arg(long, default_value = "nsdfm-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// TOML file, or a bundled name: table1_small, table3_small.
    #[arg(long)]
    pub config: String,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the replication count in the config.
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long, default_value = "nsdfm-out")]
    pub out: PathBuf,
}

/// Runs one command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a.with_config()?),
        Command::Select(a) => cmd_select(&a.with_config()?),
        Command::Estimate(a) => cmd_estimate(&a.with_config()?),
        Command::Irf(a) => cmd_irf(&a.with_config()?),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Experiment(a) => cmd_experiment(&a),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))
}

/// Reads `--data` and applies transforms and quarterly aggregation.
pub fn load(args: &RunArgs) -> Result<Panel> {
    let data = args.data.as_deref().ok_or_else(|| Error::Config("--data is required".into()))?;
    let freq = parse_opt::<Frequency>(&args.frequency, "frequency")?.unwrap_or(Frequency::Quarterly);
    let raw = load_panel(data, args.transforms.as_deref(), freq)?;
    apply_transforms(&raw)
}

fn resolve_name(names: &[String], name: &str) -> Result<usize> {
    names.iter().position(|s| s == name.trim()).ok_or_else(|| {
        Error::Config(format!("unknown variable `{}`; the panel has {} series", name.trim(), names.len()))
    })
}

fn parse_normalization(s: &str, names: &[String]) -> Result<Normalization> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(3..=4).contains(&parts.len()) {
        return Err(Error::Config(format!("--normalize `{s}`: expected variable:horizon:value[:shock]")));
    }
    let bad = |what: &str| Error::Config(format!("--normalize `{s}`: cannot read the {what}"));
    let variable = resolve_name(names, parts[0])?;
    let horizon = parts[1].trim().parse().map_err(|_| bad("horizon"))?;
    let target = parts[2].trim().parse().map_err(|_| bad("value"))?;
    let shock: usize = match parts.get(3) {
        Some(p) => p.trim().parse().map_err(|_| bad("shock"))?,
        None => 1,
    };
    if shock == 0 {
        return Err(Error::Config(format!("--normalize `{s}`: shocks are counted from 1")));
    }
    Ok(Normalization { variable, shock: shock - 1, horizon, target })
}

/// Translates the options into a pipeline specification for a panel with
/// these series names.
pub fn pipeline_spec(args: &RunArgs, names: &[String]) -> Result<PipelineSpec> {
    let mut selection = SelectionSettings::default();
    if let Some(v) = args.r_max {
        selection.r_max = v;
    }
    if let Some(v) = args.q_max {
        selection.q_max = v;
    }
    selection.tune = args.tune.unwrap_or(false);
    if let Some(k) = parse_opt::<Kernel>(&args.kernel, "kernel")? {
        selection.spectral.kernel = k;
    }
    selection.spectral.bandwidth = args.bandwidth;

    let order = match &args.order {
        Some(o) => o.split(',').map(|n| resolve_name(names, n)).collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let scheme = args.identify.clone().unwrap_or_else(|| if order.is_empty() { "raw" } else { "recursive" }.into());
    let identify = match scheme.to_ascii_lowercase().as_str() {
        "raw" => IdentifySpec::Raw,
        "recursive" => {
            if order.is_empty() {
                return Err(Error::Config("--identify recursive needs --order".into()));
            }
            IdentifySpec::Recursive { order }
        }
        "permanent" => {
            let sign_variable = args.sign_variable.as_deref().map(|n| resolve_name(names, n)).transpose()?;
            IdentifySpec::Permanent { sign_variable }
        }
        other => return Err(Error::Config(format!("unknown identification `{other}` (raw|recursive|permanent)"))),
    };
    let normalize = args.normalize.as_deref().map(|s| parse_normalization(s, names)).transpose()?;
    if normalize.is_some() && matches!(identify, IdentifySpec::Raw) {
        log::warn!("normalizing unidentified shocks; the result depends on the arbitrary rotation of K");
    }
    let defaults = PipelineSpec::default();
    Ok(PipelineSpec {
        detrend: parse_opt::<DetrendMethod>(&args.detrend, "detrend")?.unwrap_or(defaults.detrend),
        r: parse_opt::<Count>(&args.r, "r")?.unwrap_or_default(),
        q: parse_opt::<Count>(&args.q, "q")?.unwrap_or_default(),
        tau: parse_opt::<Count>(&args.tau, "tau")?.unwrap_or_default(),
        dynamics: parse_opt::<Dynamics>(&args.dynamics, "dynamics")?.unwrap_or(defaults.dynamics),
        lags: args.lags,
        intercept: !args.no_intercept.unwrap_or(false),
        identify,
        normalize,
        horizon: args.horizon.unwrap_or(defaults.horizon),
        selection,
    })
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    n: usize,
    t: usize,
    frequency: String,
    first_date: Option<&'a str>,
    last_date: Option<&'a str>,
    series: Vec<SeriesSummary<'a>>,
}

#[derive(Serialize)]
struct SeriesSummary<'a> {
    name: &'a str,
    code: u8,
}

fn cmd_ingest(args: &RunArgs) -> Result<()> {
    let p = load(args)?;
    let out = args.out_dir();
    prepare_out(&out)?;
    let mut w = create(&out, "panel.csv")?;
    write_panel(&p, &mut w)?;
    w.flush()?;
    let summary = IngestSummary {
        n: p.n(),
        t: p.t(),
        frequency: p.frequency.to_string(),
        first_date: p.dates.as_ref().and_then(|d| d.first()).map(String::as_str),
        last_date: p.dates.as_ref().and_then(|d| d.last()).map(String::as_str),
        series: p
            .series_names
            .iter()
            .zip(&p.transform_codes)
            .map(|(name, c)| SeriesSummary { name, code: c.code() })
            .collect(),
    };
    write_json(&out, "ingest.json", &summary)?;
    println!("ingested {} series, T = {} ({})", p.n(), p.t(), out.display());
    Ok(())
}

fn cmd_select(args: &RunArgs) -> Result<()> {
    let p = load(args)?;
    let spec = pipeline_spec(args, &p.series_names)?;
    let (_, detrended) = detrend(&p.values, spec.detrend)?;
    let diffs = difference(&detrended)?;
    let fixed = CountOverrides { r: spec.r.fixed(), q: spec.q.fixed(), tau: spec.tau.fixed() };
    let sel = select_counts_with(&diffs, &spec.selection, fixed)?;
    let sd = spec.selection.spectral.spectrum(&diffs)?;
    for w in &sel.warnings {
        log::warn!("{w}");
    }
    let out = args.out_dir();
    prepare_out(&out)?;
    write_json(&out, "selection.json", &sel)?;
    write_criterion_paths(&sel, create(&out, "criteria.csv")?)?;
    write_stability_paths(&sel, create(&out, "stability.csv")?)?;
    write_eigenvalues(&sd, create(&out, "spectral_eigenvalues.csv")?)?;
    println!("r = {}, q = {}, tau = {}, d = {}, c = {}", sel.r_hat, sel.q_hat, sel.tau_hat, sel.d_hat, sel.c_hat);
    Ok(())
}

#[derive(Serialize)]
struct RunSummary {
    counts: pipeline::Counts,
    cointegration_rank: usize,
    dynamics: Dynamics,
    lags: usize,
    detrend: DetrendMethod,
    trend_slopes: Option<Vec<f64>>,
    warnings: Vec<String>,
}

fn run_summary(out: &pipeline::PipelineOutput, spec: &PipelineSpec) -> RunSummary {
    RunSummary {
        counts: out.counts,
        cointegration_rank: out.counts.c(),
        dynamics: spec.dynamics,
        lags: spec.lags(),
        detrend: spec.detrend,
        trend_slopes: out.trend.as_ref().map(|t| t.slope.iter().copied().collect()),
        warnings: out.warnings.clone(),
    }
}

fn estimate_common(args: &RunArgs) -> Result<(Panel, PipelineSpec, pipeline::PipelineOutput, PathBuf)> {
    let p = load(args)?;
    let spec = pipeline_spec(args, &p.series_names)?;
    let res = pipeline::run(&p.values, &spec)?;
    for w in &res.warnings {
        log::warn!("{w}");
    }
    let out = args.out_dir();
    prepare_out(&out)?;
    if let Some(sel) = &res.selection {
        write_json(&out, "selection.json", sel)?;
        write_criterion_paths(sel, create(&out, "criteria.csv")?)?;
    }
    Ok((p, spec, res, out))
}

fn cmd_estimate(args: &RunArgs) -> Result<()> {
    let (p, spec, res, out) = estimate_common(args)?;
    write_json(&out, "run.json", &run_summary(&res, &spec))?;
    write_json(&out, "factors.json", &res.factors.to_json())?;
    write_json(&out, "model.json", &res.model.to_json())?;
    let names: Vec<String> = (1..=res.counts.r).map(|i| format!("f{i}")).collect();
    let fp = Panel::new(
        res.factors.factors.clone(),
        names,
        vec![crate::panel::TransformCode::Level; res.counts.r],
        p.frequency,
        p.dates.clone(),
    )?;
    write_panel(&fp, create(&out, "factors.csv")?)?;
    println!(
        "r = {}, q = {}, tau = {}; {} with {} lags ({})",
        res.counts.r,
        res.counts.q,
        res.counts.tau,
        spec.dynamics,
        spec.lags(),
        out.display()
    );
    Ok(())
}

fn cmd_irf(args: &RunArgs) -> Result<()> {
    let (p, spec, mut res, out) = estimate_common(args)?;
    if let Some(b) = args.boot {
        let boot = BootstrapSpec {
            replicates: b,
            coverage: args.coverage.unwrap_or(0.68),
            block_length: args.block_length,
            seed: args.seed(),
        };
        res.irf.bands = Some(bootstrap_bands(&res, &spec, &boot)?);
    } else if args.coverage.is_some() || args.block_length.is_some() {
        log::warn!("--coverage and --block-length have no effect without --boot");
    }
    write_json(&out, "run.json", &run_summary(&res, &spec))?;
    write_irf(&res.irf, &p.series_names, &out)?;
    println!(
        "impulse responses for {} variables, {} shocks, horizon {} ({})",
        res.irf.n(),
        res.irf.q(),
        res.irf.horizon(),
        out.display()
    );
    Ok(())
}

fn write_irf(irf: &IrfSet, names: &[String], out: &Path) -> Result<()> {
    let mut w = create(out, "irf.csv")?;
    irf.write_csv(&mut w, Some(names))?;
    w.flush()?;
    write_json(out, "irf.json", &irf.to_json(Some(names)))
}

#[derive(Serialize)]
struct DgpJson {
    r: usize,
    q: usize,
    c: usize,
    seed: u64,
    replication: u64,
    loadings: MatrixJson,
    shock_loading: MatrixJson,
    rotation: MatrixJson,
    var_coefficients: Vec<MatrixJson>,
    integrated_idiosyncratic: usize,
}

fn cmd_simulate(a: &SimArgs) -> Result<()> {
    if a.m > a.n {
        return Err(Error::Config(format!("--m {} exceeds --n {}", a.m, a.n)));
    }
    let params = gen_params(a.n, a.r, a.q, a.c, a.seed)?;
    let sim = simulate_panel(&params, a.n, a.t, a.m, a.seed, a.replication)?;
    prepare_out(&a.out)?;
    let names: Vec<String> = (1..=a.n).map(|i| format!("x{i}")).collect();
    let panel = Panel::from_matrix(sim.x.clone())?;
    write_panel(&panel, create(&a.out, "panel.csv")?)?;
    let truth = true_irf(&params, a.horizon);
    let mut w = csv::Writer::from_writer(create(&a.out, "true_irf.csv")?);
    w.write_record(["variable", "shock", "horizon", "value"])?;
    for (i, name) in names.iter().enumerate() {
        for j in 0..a.q {
            for (k, m) in truth.iter().enumerate() {
                w.write_record([name.clone(), (j + 1).to_string(), k.to_string(), m[(i, j)].to_string()])?;
            }
        }
    }
    w.flush()?;
    let dgp = DgpJson {
        r: a.r,
        q: a.q,
        c: a.c,
        seed: a.seed,
        replication: a.replication,
        loadings: MatrixJson::from(&params.loadings),
        shock_loading: MatrixJson::from(&params.k),
        rotation: MatrixJson::from(&params.rotation),
        var_coefficients: params.var_coeffs().iter().map(MatrixJson::from).collect(),
        integrated_idiosyncratic: a.m,
    };
    write_json(&a.out, "dgp.json", &dgp)?;
    println!("simulated n = {}, T = {}, m = {} ({})", a.n, a.t, a.m, a.out.display());
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let mut cfg = match bundled_config(&a.config) {
        Some(text) => ExperimentConfig::from_toml(text)?,
        None => ExperimentConfig::from_path(Path::new(&a.config))?,
    };
    if let Some(r) = a.replications {
        cfg.replications = r;
        cfg.validate()?;
    }
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let report = run_experiment(&cfg, seed)?;
    prepare_out(&a.out)?;
    write_json(&a.out, "report.json", &report)?;
    let mut stdout = std::io::stdout().lock();
    for p in &cfg.pipelines {
        let (file, dynamics) = match p {
            ExperimentPipeline::Vecm => ("mse_vecm.csv", Dynamics::Vecm),
            ExperimentPipeline::Var => ("mse_var.csv", Dynamics::Var),
            ExperimentPipeline::Selection => {
                report.write_selection_csv(create(&a.out, "selection.csv")?)?;
                writeln!(stdout, "selection (% correct)")?;
                report.write_selection_csv(&mut stdout)?;
                continue;
            }
        };
        report.write_mse_csv(dynamics, create(&a.out, file)?)?;
        writeln!(stdout, "{dynamics} MSE")?;
        report.write_mse_csv(dynamics, &mut stdout)?;
    }
    Ok(())
}
