//! Principal-component factors of a simulated I(1) panel and how well they
//! span the true factor space.
//!
//! ```text
//! cargo run --release --example factors
//! ```

use nalgebra::DMatrix;
use nsdfm::factors::estimate_factors;
use nsdfm::montecarlo::{gen_params, simulate_panel};
use nsdfm::panel::{detrend, difference, DetrendMethod};

/// Share of the variation in the rows of `y` explained by the rows of `x`.
fn span_r2(y: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    let xx = x * x.transpose();
    let proj = y * x.transpose() * xx.try_inverse().expect("full-rank factors") * x;
    proj.norm_squared() / y.norm_squared()
}

fn main() -> nsdfm::Result<()> {
    let (n, t, m) = (150, 150, 75);
    let params = gen_params(n, 4, 3, 3, 5)?;
    let sim = simulate_panel(&params, n, t, m, 5, 0)?;

    let (_, x) = detrend(&sim.x, DetrendMethod::Ls)?;
    let fm = estimate_factors(&x, 4)?;
    let gram = fm.loadings.transpose() * &fm.loadings / n as f64;
    println!("max |Λ'Λ/n - I| = {:.1e}", (gram - DMatrix::identity(4, 4)).abs().max());
    println!("leading eigenvalues of the differenced covariance: {:.3?}", fm.eigvals.as_slice());

    let truth = difference(&sim.factors)?;
    println!("R² of true Δf on estimated Δf: {:.3}", span_r2(&truth, &fm.diff_factors));

    let common = fm.common_component();
    let err = &common - &sim.common;
    let mean_err: Vec<f64> = err.row_iter().map(|r| r.mean()).collect();
    // Levels are identified up to a series-specific constant, so compare
    // after centring each series.
    let centred = DMatrix::from_fn(n, t + 1, |i, j| err[(i, j)] - mean_err[i]);
    println!("relative error of the common component: {:.3}", centred.norm() / sim.common.norm());
    Ok(())
}
