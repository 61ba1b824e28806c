//! Draw the simulation design, simulate one panel and check its structure:
//! one unit root in the factor VAR, zero impact restrictions, and the
//! idiosyncratic share of the differenced variance.
//!
//! ```text
//! cargo run --release --example simulate -- 200 200 100
//! ```

use nsdfm::lagpoly::count_unit_roots;
use nsdfm::montecarlo::{gen_params, simulate_panel, true_irf};
use nsdfm::panel::difference;

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

fn main() -> nsdfm::Result<()> {
    let (t, n, m) = (arg(1, 100), arg(2, 100), arg(3, 50));
    let params = gen_params(n, 4, 3, 3, 11)?;
    println!("unit roots in the factor VAR: {}", count_unit_roots(&params.var_coeffs(), 1e-8));

    let impact = &true_irf(&params, 0)[0];
    println!("impact of shocks 2 and 3 on x1, shock 3 on x2:");
    println!("  {:.1e} {:.1e} {:.1e}", impact[(0, 1)], impact[(0, 2)], impact[(1, 2)]);

    let sim = simulate_panel(&params, n, t, m, 11, 0)?;
    let dc = difference(&sim.common)?;
    let di = difference(&sim.idiosyncratic)?;
    let ratio: f64 = (0..n)
        .map(|i| {
            let a: Vec<f64> = di.row(i).iter().copied().collect();
            let b: Vec<f64> = dc.row(i).iter().copied().collect();
            variance(&a) / variance(&b)
        })
        .sum::<f64>()
        / n as f64;
    println!("mean var(Δξ)/var(Δχ) across series: {ratio:.3}");
    println!("integrated idiosyncratic components: {}", sim.rho.iter().filter(|r| **r == 1.0).count());
    Ok(())
}
