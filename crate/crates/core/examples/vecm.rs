//! Reduced-rank VECM on estimated factors: cointegration space, shock
//! loading and the implied VAR in levels, which keeps exactly `r - c` unit
//! roots. Estimated factors are a rotation of the true ones, so the
//! comparison uses rotation-invariant quantities.
//!
//! ```text
//! cargo run --release --example vecm
//! ```

use nsdfm::factors::estimate_factors;
use nsdfm::lagpoly::{companion_eigenvalues, count_unit_roots, value_at_one};
use nsdfm::montecarlo::{gen_params, simulate_panel};
use nsdfm::panel::{detrend, DetrendMethod};
use nsdfm::vecm::{johansen, vecm_to_var};

fn moduli(a: &[nalgebra::DMatrix<f64>]) -> Vec<f64> {
    let mut m: Vec<f64> = companion_eigenvalues(a).iter().map(|z| z.norm()).collect();
    m.sort_by(|a, b| b.total_cmp(a));
    m
}

fn main() -> nsdfm::Result<()> {
    let (n, t, m) = (100, 400, 50);
    let params = gen_params(n, 4, 3, 3, 9)?;
    let sim = simulate_panel(&params, n, t, m, 9, 0)?;
    let (_, x) = detrend(&sim.x, DetrendMethod::Ls)?;
    let fm = estimate_factors(&x, 4)?;

    let model = johansen(&fm.factors, 1, 3, true, 3)?;
    println!("squared canonical correlations: {:.3?}", model.eigvals.as_slice());
    let kk = &model.shock_loading * model.shock_loading.transpose();
    println!("eigenvalues of K̂K̂': {:.3?}", kk.symmetric_eigenvalues().as_slice());

    let a = vecm_to_var(&model);
    let sv = value_at_one(&a, 4).singular_values();
    println!("singular values of I - A1 - A2: {:?}", sv.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>());
    println!("unit roots of the implied VAR: {}", count_unit_roots(&a, 1e-6));
    println!("companion moduli, estimated: {:.3?}", &moduli(&a)[..5]);
    println!("companion moduli, true:      {:.3?}", &moduli(&params.var_coeffs())[..5]);
    Ok(())
}
