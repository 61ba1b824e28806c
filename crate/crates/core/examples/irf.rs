//! Full pipeline on a simulated panel: recursive identification on the first
//! three series compared with the true responses, then the
//! permanent/transitory split of the same shocks.
//!
//! ```text
//! cargo run --release --example irf
//! ```

use nsdfm::irf::Dynamics;
use nsdfm::montecarlo::{gen_params, simulate_panel, mse_table, true_irf};
use nsdfm::pipeline::{run, Count, IdentifySpec, PipelineSpec};

fn main() -> nsdfm::Result<()> {
    let (n, t, m) = (100, 100, 50);
    let params = gen_params(n, 4, 3, 3, 21)?;
    let sim = simulate_panel(&params, n, t, m, 21, 0)?;
    let truth = true_irf(&params, 20);
    let horizons = [0, 1, 4, 8, 12, 16, 20];

    let base = PipelineSpec {
        r: Count::Fixed(4),
        q: Count::Fixed(3),
        tau: Count::Fixed(1),
        identify: IdentifySpec::Recursive { order: vec![0, 1, 2] },
        ..PipelineSpec::default()
    };
    println!("MSE against the true responses at horizons {horizons:?}");
    for dynamics in [Dynamics::Vecm, Dynamics::Var] {
        let out = run(&sim.x, &PipelineSpec { dynamics, ..base.clone() })?;
        let se = mse_table(std::slice::from_ref(&out.irf), &truth, &horizons)?;
        println!("{dynamics:>5}: {}", se.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" "));
        if dynamics == Dynamics::Vecm {
            let h0 = &out.irf.coeffs[0];
            println!("       impact zeros: {:.1e} {:.1e} {:.1e}", h0[(0, 1)], h0[(0, 2)], h0[(1, 2)]);
        }
    }

    let out = run(&sim.x, &PipelineSpec { identify: IdentifySpec::Permanent { sign_variable: Some(0) }, ..base })?;
    let lr = out.irf.long_run();
    let col_norm = |j: usize| lr.column(j).norm();
    println!(
        "long-run column norms: permanent {:.3}, transitory {:.1e} {:.1e}",
        col_norm(0),
        col_norm(1),
        col_norm(2)
    );
    Ok(())
}
