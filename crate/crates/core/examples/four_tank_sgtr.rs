//! Data-driven tuning regulator for the (time-scaled) quadruple tank: probe
//! the plant, solve for the gain, check stability at the tuned eps.

use sgtr::commands::matrix_csv;
use sgtr::config::ProjectConfig;
use sgtr::format::fmt_sig;
use sgtr::ident::{identify_frequency_data, ProbeConfig};
use sgtr::{assemble_closed_loop, design_sgtr};

fn main() -> sgtr::Result<()> {
    let cfg = ProjectConfig::preset("four-tank-time-scaled")?;
    let plant = cfg.plant()?;
    let exo = cfg.exosystem()?;

    let probe = ProbeConfig::for_plant(&plant, exo.frequencies())?;
    let fd = identify_frequency_data(&plant, &exo, &probe)?;
    let design = design_sgtr(&fd, &exo, &cfg.pole_constants()?)?;

    let eps = cfg.design.eps;
    let gain = design.gain_at(eps)?;
    let cl = assemble_closed_loop(&plant, design.servo(), &gain)?;
    let (r, m, rq) = design.operator().dims();
    println!("M is {}x{}, condition {}", r * rq, m * rq, fmt_sig(design.operator().condition_number()));
    print!("gain at eps = {}\n{}", fmt_sig(eps), matrix_csv(&gain));
    println!("closed-loop spectral abscissa {}", fmt_sig(cl.abscissa()?));
    Ok(())
}
