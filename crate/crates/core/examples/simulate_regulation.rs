//! Time response to a constant plus two-tone disturbance on the
//! time-scaled quadruple tank.

use nalgebra::DVector;
use sgtr::commands::trajectory_metrics;
use sgtr::config::ProjectConfig;
use sgtr::format::fmt_sig;
use sgtr::{assemble_closed_loop, design_sgtr, simulate, FrequencyData};

fn main() -> sgtr::Result<()> {
    let cfg = ProjectConfig::preset("four-tank-time-scaled")?;
    let plant = cfg.plant()?;
    let exo = cfg.exosystem()?;
    let fd = FrequencyData::analytic(&plant, &exo)?;
    let design = design_sgtr(&fd, &exo, &cfg.pole_constants()?)?;
    let cl = assemble_closed_loop(&plant, design.servo(), &design.gain_at(cfg.design.eps)?)?;

    let x0 = DVector::zeros(cl.order());
    let traj = simulate(&cl, &cfg.signal(&plant)?, &x0, cfg.simulation.horizon, cfg.simulation.dt)?;
    let m = trajectory_metrics(&traj);
    println!("peak {} terminal {}", fmt_sig(m.peak), fmt_sig(m.terminal));
    println!("settling time {} s, rms {}", fmt_sig(m.settling_time), fmt_sig(m.rms));
    let norms = traj.error_norms();
    for k in (0..traj.len()).step_by(traj.len() / 10) {
        println!("t = {:>8}  |e| = {}", traj.times[k], fmt_sig(norms[k]));
    }
    Ok(())
}
