//! Black-box acquisition of frequency data by simulated probing.
//!
//! Each probe drives one input channel with a step or a sinusoid generated
//! by an oscillator appended to the plant state, so the whole experiment is
//! an autonomous linear system and its sampled response is exact up to
//! rounding for any time step.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::lti::StateSpaceModel;
use crate::servo::Exosystem;
use crate::sslg::{FrequencyData, FrequencySample, Provenance};

/// Minimum number of whole periods in a harmonic record.
pub const MIN_PERIODS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeConfig {
    pub settle_time: f64,
    pub record_time: f64,
    pub dt: f64,
    pub amplitude: f64,
}

impl ProbeConfig {
    /// Defaults for probing `plant` at `frequencies`: transients are allowed
    /// to decay by `e^-20` before recording, and the record covers eight
    /// periods of the slowest frequency.
    pub fn for_plant(plant: &StateSpaceModel, frequencies: &[f64]) -> Result<Self> {
        let alpha = plant.require_stable()?;
        let settle_time = 20.0 / alpha.abs();
        let mut dt = settle_time / 1000.0;
        let mut record_time = settle_time / 10.0;
        if let (Some(lo), Some(hi)) = (
            frequencies.iter().copied().reduce(f64::min),
            frequencies.iter().copied().reduce(f64::max),
        ) {
            dt = dt.min(TAU / hi / 64.0);
            record_time = (8.0 * TAU / lo).max(100.0 * dt);
        }
        let cfg = ProbeConfig {
            settle_time,
            record_time,
            dt,
            amplitude: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("settle_time", self.settle_time),
            ("record_time", self.record_time),
            ("dt", self.dt),
            ("amplitude", self.amplitude),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("probe {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Simulates the plant with input `u_j = amplitude * s(t)` where `s` is the
/// first state of the signal generator `(gen_a, gen_x0)`, returning the
/// error samples at `t = k dt`, `k = 0..=steps`.
fn probe(
    plant: &StateSpaceModel,
    channel: usize,
    gen_a: &DMatrix<f64>,
    gen_x0: &DVector<f64>,
    cfg: &ProbeConfig,
    steps: usize,
) -> Result<Vec<DVector<f64>>> {
    let n = plant.n();
    let g = gen_a.nrows();
    let mut a = DMatrix::zeros(n + g, n + g);
    a.view_mut((0, 0), (n, n)).copy_from(plant.a());
    a.view_mut((0, n), (n, 1))
        .copy_from(&(plant.b().column(channel) * cfg.amplitude));
    a.view_mut((n, n), (g, g)).copy_from(gen_a);
    let mut c = DMatrix::zeros(plant.r(), n + g);
    c.view_mut((0, 0), (plant.r(), n)).copy_from(plant.c());
    c.view_mut((0, n), (plant.r(), 1))
        .copy_from(&(plant.d().column(channel) * cfg.amplitude));
    let step = (a * cfg.dt).exp();

    let mut z = DVector::zeros(n + g);
    z.rows_mut(n, g).copy_from(gen_x0);
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::PlantNotStable {
                abscissa: f64::NAN,
            });
        }
        if k > 0 {
            z = &step * &z;
        }
        out.push(&c * &z);
    }
    Ok(out)
}

fn steps_for(horizon: f64, dt: f64) -> usize {
    (horizon / dt + 1e-9).floor() as usize
}

/// Step-response estimate of the DC gain, one input channel at a time.
pub fn estimate_dc_gain(plant: &StateSpaceModel, cfg: &ProbeConfig) -> Result<DMatrix<f64>> {
    plant.require_stable()?;
    cfg.validate()?;
    let steps = steps_for(cfg.settle_time + cfg.record_time, cfg.dt);
    if steps < 10 {
        return Err(Error::Config("probe record has fewer than 10 samples".into()));
    }
    let first = steps - steps / 10;
    let gen_a = DMatrix::zeros(1, 1);
    let gen_x0 = DVector::from_element(1, 1.0);
    let mut p0 = DMatrix::zeros(plant.r(), plant.m());
    for j in 0..plant.m() {
        let e = probe(plant, j, &gen_a, &gen_x0, cfg, steps)?;
        let tail = &e[first..];
        let mean = tail.iter().fold(DVector::zeros(plant.r()), |acc, v| acc + v) / tail.len() as f64;
        p0.set_column(j, &(mean / cfg.amplitude));
    }
    Ok(p0)
}

/// Sine-probe estimate of `P(j omega)` by least-squares demodulation over
/// the largest whole-period window after `settle_time`.
pub fn estimate_freq_response(plant: &StateSpaceModel, omega: f64, cfg: &ProbeConfig) -> Result<CMatrix> {
    plant.require_stable()?;
    cfg.validate()?;
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Validation(format!("probe frequency must be positive, got {omega}")));
    }
    let period = TAU / omega;
    let periods = (cfg.record_time / period + 1e-9).floor() as usize;
    if periods < MIN_PERIODS {
        return Err(Error::Config(format!(
            "record of {} s holds {} periods at w = {omega}; need at least {MIN_PERIODS}",
            cfg.record_time, periods
        )));
    }
    let first = (cfg.settle_time / cfg.dt).ceil() as usize;
    let t0 = first as f64 * cfg.dt;
    let last = steps_for(t0 + periods as f64 * period, cfg.dt);
    if last - first < 8 {
        return Err(Error::Config("probe record has too few samples per window".into()));
    }

    // oscillator state (sin, cos) starting at (0, 1)
    let gen_a = DMatrix::from_row_slice(2, 2, &[0.0, omega, -omega, 0.0]);
    let gen_x0 = DVector::from_vec(vec![0.0, 1.0]);

    // normal equations of y = a sin + b cos
    let (mut ss, mut sc, mut cc) = (0.0, 0.0, 0.0);
    for k in first..last {
        let (s, c) = (omega * k as f64 * cfg.dt).sin_cos();
        ss += s * s;
        sc += s * c;
        cc += c * c;
    }
    let det = ss * cc - sc * sc;

    let mut p = CMatrix::zeros(plant.r(), plant.m());
    for j in 0..plant.m() {
        let e = probe(plant, j, &gen_a, &gen_x0, cfg, last)?;
        for i in 0..plant.r() {
            let (mut sy, mut cy) = (0.0, 0.0);
            for (k, ek) in e.iter().enumerate().take(last).skip(first) {
                let (s, c) = (omega * k as f64 * cfg.dt).sin_cos();
                sy += s * ek[i];
                cy += c * ek[i];
            }
            let a = (cc * sy - sc * cy) / det;
            let b = (ss * cy - sc * sy) / det;
            p[(i, j)] = Complex64::new(a, b) / cfg.amplitude;
        }
    }
    Ok(p)
}

/// DC gain and one sample per exosystem frequency, all from probes.
pub fn identify_frequency_data(plant: &StateSpaceModel, exo: &Exosystem, cfg: &ProbeConfig) -> Result<FrequencyData> {
    let p0 = estimate_dc_gain(plant, cfg)?;
    let samples = exo
        .frequencies()
        .iter()
        .map(|&omega| {
            Ok(FrequencySample {
                omega,
                response: estimate_freq_response(plant, omega, cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FrequencyData::new(p0, samples, Provenance::Identified)
}
