//! Least-squares VAR in levels on the same estimated factors. Nothing
//! forces a unit root to be exact, so the largest companion root lands
//! near one rather than on it.
//!
//! ```text
//! cargo run --release --example var_levels
//! ```

use nsdfm::factors::estimate_factors;
use nsdfm::lagpoly::companion_eigenvalues;
use nsdfm::montecarlo::{gen_params, simulate_panel};
use nsdfm::panel::{detrend, DetrendMethod};
use nsdfm::var::var_ls;

fn main() -> nsdfm::Result<()> {
    let (n, t, m) = (100, 400, 50);
    let params = gen_params(n, 4, 3, 3, 9)?;
    let sim = simulate_panel(&params, n, t, m, 9, 0)?;
    let (_, x) = detrend(&sim.x, DetrendMethod::Ls)?;
    let fm = estimate_factors(&x, 4)?;

    let model = var_ls(&fm.factors, 2, true, 3)?;
    let mut moduli: Vec<f64> = companion_eigenvalues(&model.coeffs).iter().map(|z| z.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    println!("companion moduli: {:.4?}", &moduli[..5]);
    let kk = &model.shock_loading * model.shock_loading.transpose();
    println!("eigenvalues of K̂K̂': {:.3?}", kk.symmetric_eigenvalues().as_slice());
    for w in &model.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
