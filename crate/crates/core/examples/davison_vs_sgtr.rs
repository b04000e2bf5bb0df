//! Single-gain design against the sequential one-mode-at-a-time baseline,
//! on both quadruple-tank presets.

use sgtr::commands::{compare, RunOptions};
use sgtr::config::ProjectConfig;
use sgtr::format::fmt_sig;

fn main() -> sgtr::Result<()> {
    for name in ["four-tank", "four-tank-time-scaled"] {
        let cfg = ProjectConfig::preset(name)?;
        let (cmp, _, _) = compare(&cfg, &RunOptions::default())?;
        println!("{name}");
        println!("  sgtr dominant re     {}", fmt_sig(cmp.sgtr_spectrum[0].re));
        match (&cmp.davison_spectrum, cmp.davison_failure) {
            (Some(s), _) => println!("  davison dominant re  {}", fmt_sig(s[0].re)),
            (None, Some((stage, a))) => println!("  davison lost stability at stage {stage} (abscissa {})", fmt_sig(a)),
            _ => {}
        }
        for (eps0, limit) in &cmp.eps1_limits {
            let limit = limit.map_or("unbounded".into(), fmt_sig);
            println!("  eps0 {} -> sup eps1 {limit}", fmt_sig(*eps0));
        }
        if let Some((eps, alpha)) = &cmp.best_effort {
            println!("  best grid tuning {:?} -> {}", eps, fmt_sig(*alpha));
        }
    }
    Ok(())
}
