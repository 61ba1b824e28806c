//! Run a simulation experiment from a TOML file and print the tables.
//!
//! ```text
//! cargo run --release --example monte_carlo -- configs/table1_small.toml
//! ```

use nsdfm::irf::Dynamics;
use nsdfm::montecarlo::{run_experiment, ExperimentConfig};

fn main() -> nsdfm::Result<()> {
    env_logger::init();
    let path = std::env::args().nth(1).unwrap_or_else(|| "configs/table1_small.toml".into());
    let cfg = ExperimentConfig::from_path(path.as_ref())?;
    let seed = cfg.seed.unwrap_or(1);
    let start = std::time::Instant::now();
    let report = run_experiment(&cfg, seed)?;
    let stdout = std::io::stdout();
    for dynamics in [Dynamics::Vecm, Dynamics::Var] {
        if report.mse.iter().any(|r| r.dynamics == dynamics) {
            println!("{dynamics}");
            report.write_mse_csv(dynamics, stdout.lock())?;
        }
    }
    if !report.selection.is_empty() {
        println!("selection");
        report.write_selection_csv(stdout.lock())?;
    }
    eprintln!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
