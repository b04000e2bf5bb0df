//! Closed-loop stability and regulation quality across a log grid of eps.

use sgtr::commands::{sweep_rows, RunOptions};
use sgtr::config::{EpsGrid, ProjectConfig};
use sgtr::format::fmt_sig;

fn main() -> sgtr::Result<()> {
    let cfg = ProjectConfig::preset("four-tank-time-scaled")?;
    let opts = RunOptions { from_model: true, ..Default::default() };
    let grid = EpsGrid::parse("1e-5:1e-2:10")?;
    println!("{:>14} {:>14} {:>14}", "eps", "alpha", "settling");
    for row in sweep_rows(&cfg, &opts, &grid.values())? {
        let settle = row.metrics.map_or("unstable".into(), |m| fmt_sig(m.settling_time));
        println!("{:>14} {:>14} {:>14}", fmt_sig(row.eps), fmt_sig(row.alpha), settle);
    }
    Ok(())
}
