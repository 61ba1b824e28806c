//! Read a monthly panel with mixed transform codes, average it to quarters
//! and apply the codes.
//!
//! ```text
//! cargo run --example ingest
//! ```

use std::fmt::Write as _;

use nsdfm::io::{assemble_panel, read_table, read_transforms, write_panel};
use nsdfm::panel::{apply_transforms, Frequency};

fn main() -> nsdfm::Result<()> {
    // Two years of monthly data. The first month of `hours` is missing and
    // gets trimmed; `cpi` enters in log differences, so one more quarter goes.
    let mut data = String::from("date,ip,cpi,hours,spread\n");
    for t in 0..24 {
        let (y, m) = (2001 + t / 12, t % 12 + 1);
        let hours = if t == 0 { String::new() } else { format!("{:.2}", 40.0 + 0.1 * (t as f64).sin()) };
        writeln!(
            data,
            "{y}-{m:02},{:.3},{:.3},{hours},{:.2}",
            100.0 * (0.004 * t as f64).exp(),
            170.0 * (0.002 * t as f64).exp(),
            1.5 + 0.05 * t as f64,
        )
        .unwrap();
    }
    let sidecar = "series,code,freq\nip,2,m\ncpi,3,m\nhours,1,m\nspread,1,m\n";

    let table = read_table(data.as_bytes())?;
    let specs = read_transforms(sidecar.as_bytes())?;
    let raw = assemble_panel(&table, Some(&specs), Frequency::Quarterly)?;
    println!("raw: {} series x {} months ({})", raw.n(), raw.t() + 1, raw.frequency);

    let panel = apply_transforms(&raw)?;
    println!("transformed: {} series x {} quarters", panel.n(), panel.t() + 1);
    write_panel(&panel, std::io::stdout().lock())
}
