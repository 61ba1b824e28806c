//! Dynamic eigenvalues of the differenced panel and the three count
//! criteria, with and without penalty tuning.
//!
//! ```text
//! cargo run --release --example spectral_select
//! ```

use nsdfm::montecarlo::{gen_params, simulate_panel};
use nsdfm::panel::difference;
use nsdfm::selection::{select_counts, SelectionSettings};

fn main() -> nsdfm::Result<()> {
    let (n, t, m) = (100, 200, 50);
    let params = gen_params(n, 4, 3, 3, 2)?;
    let diffs = difference(&simulate_panel(&params, n, t, m, 2, 0)?.x)?;

    let settings = SelectionSettings::default();
    let sd = settings.spectral.spectrum(&diffs)?;
    let ev = sd.eigvals.as_ref().expect("computed by spectrum()");
    println!("bandwidth {}, {} frequencies", sd.bandwidth, sd.grid.len());
    let z = sd.zero_index();
    let avg = |j: usize| ev.row(j).mean();
    println!(" j   at θ=0   averaged");
    for j in 0..6 {
        println!("{:2}  {:7.3}  {:9.3}", j + 1, ev[(j, z)], avg(j));
    }

    let fixed = select_counts(&diffs, &settings)?;
    println!("c = 1:  r = {}, q = {}, tau = {}", fixed.r_hat, fixed.q_hat, fixed.tau_hat);
    let tuned = select_counts(&diffs, &SelectionSettings { tune: true, ..settings })?;
    println!(
        "tuned:  r = {}, q = {}, tau = {} (c_q = {:.2}, c_tau = {:.2})",
        tuned.r_hat, tuned.q_hat, tuned.tau_hat, tuned.q_penalty_constant, tuned.tau_penalty_constant
    );
    println!("cointegration rank c = r - tau = {}", tuned.c_hat);
    Ok(())
}
