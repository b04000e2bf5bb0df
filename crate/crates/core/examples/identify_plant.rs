//! Frequency-response estimation by sinusoidal probing, compared with the
//! transfer matrix evaluated from the model.

use num_complex::Complex64;
use sgtr::config::ProjectConfig;
use sgtr::format::fmt_sig;
use sgtr::ident::{estimate_dc_gain, estimate_freq_response, ProbeConfig};
use sgtr::lti::eval_transfer;

fn main() -> sgtr::Result<()> {
    let plant = ProjectConfig::preset("four-tank")?.plant()?;
    let freqs = [0.01, 0.1];
    let probe = ProbeConfig::for_plant(&plant, &freqs)?;
    println!(
        "settle {} s, record {} s, dt {} s",
        fmt_sig(probe.settle_time),
        fmt_sig(probe.record_time),
        fmt_sig(probe.dt)
    );

    let dc = estimate_dc_gain(&plant, &probe)?;
    let exact = eval_transfer(&plant, Complex64::new(0.0, 0.0))?.map(|z| z.re);
    println!("dc gain error {}", fmt_sig((&dc - &exact).norm() / exact.norm()));
    for w in freqs {
        let p = estimate_freq_response(&plant, w, &probe)?;
        let exact = eval_transfer(&plant, Complex64::new(0.0, w))?;
        println!("omega {}: error {}", w, fmt_sig((&p - &exact).norm() / exact.norm()));
    }
    Ok(())
}
