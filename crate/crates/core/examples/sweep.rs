//! Fear-coefficient sweep for the rule-based shepherds, written as CSV.
//!
//! cargo run --release --example sweep -- [runs_per_level] [out.csv]

use shepherd_core::eval::{run_sweep, save_csv, SweepAxis, SweepSpec, write_csv};
use shepherd_core::{Error, Result};

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let runs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let spec = SweepSpec {
        axis: SweepAxis::Fear,
        runs_per_level: runs,
        ..Default::default()
    };
    let rows = run_sweep(&spec, &mut || Err(Error::Config("no learned policy in this sweep".into())))?;
    write_csv(&rows, &mut std::io::stdout())?;
    if let Some(path) = args.get(2) {
        save_csv(&rows, path)?;
    }
    Ok(())
}
