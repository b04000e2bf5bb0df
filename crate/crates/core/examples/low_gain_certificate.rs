//! Numerical low-gain certificate: the dominant eigenvalue should scale
//! linearly in eps below the tuned value, with a Lyapunov witness per point.

use sgtr::config::ProjectConfig;
use sgtr::format::fmt_sig;
use sgtr::lowgain::{attach_lyapunov, estimate_eps_star};
use sgtr::{assemble_closed_loop, certify_low_gain, design_sgtr, FrequencyData};

fn main() -> sgtr::Result<()> {
    let cfg = ProjectConfig::preset("four-tank-time-scaled")?;
    let plant = cfg.plant()?;
    let exo = cfg.exosystem()?;
    let fd = FrequencyData::analytic(&plant, &exo)?;
    let design = design_sgtr(&fd, &exo, &cfg.pole_constants()?)?;
    let loop_at = |e: f64| Ok(assemble_closed_loop(&plant, design.servo(), &design.gain_at(e)?)?.a);

    let mut cert = certify_low_gain(loop_at, cfg.design.eps, 16)?;
    attach_lyapunov(&mut cert, |e| design.reduced_matrix(e))?;
    print!("{}", cert.to_csv());
    for w in &cert.lyapunov {
        println!(
            "eps {}: P eigenvalues in [{}, {}], residual {}",
            fmt_sig(w.eps),
            fmt_sig(w.lambda_min),
            fmt_sig(w.lambda_max),
            fmt_sig(w.residual)
        );
    }
    if let Some(star) = estimate_eps_star(loop_at, cfg.design.eps)? {
        println!("first loss of stability near eps = {}", fmt_sig(star));
    }
    Ok(())
}
