//! Pipelines behind the command-line subcommands. Each command writes CSV
//! files and a `summary.txt` into the output directory and returns the
//! summary text.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::config::{DataSource, EpsGrid, ProjectConfig};
use crate::davison::{davison_grid_search, davison_sequential_design, first_harmonic_limit};
use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::ident::{identify_frequency_data, ProbeConfig};
use crate::linalg;
use crate::lowgain::{attach_lyapunov, certify_low_gain, design_sgtr, estimate_eps_star, SgtrDesign};
use crate::lti::{assemble_closed_loop, simulate, ClosedLoopModel, StateSpaceModel, Trajectory};
use crate::sslg::{check_nonresonance, FrequencyData};

/// Flags shared by all subcommands.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub eps: Option<f64>,
    pub eps_grid: Option<EpsGrid>,
    pub from_model: bool,
}

/// Key/value report grouped into `[sections]`.
#[derive(Clone, Debug, Default)]
pub struct Summary {
    text: String,
}

impl Summary {
    pub fn section(&mut self, name: &str) -> &mut Self {
        if !self.text.is_empty() {
            self.text.push('\n');
        }
        let _ = writeln!(self.text, "[{name}]");
        self
    }

    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.text, "{key} = {value}");
        self
    }

    pub fn num(&mut self, key: &str, value: f64) -> &mut Self {
        self.put(key, fmt_sig(value))
    }

    pub fn nums(&mut self, key: &str, values: &[f64]) -> &mut Self {
        let list: Vec<String> = values.iter().map(|&v| fmt_sig(v)).collect();
        self.put(key, format!("[{}]", list.join(", ")))
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

fn out_dir(cfg: &ProjectConfig, opts: &RunOptions) -> Result<PathBuf> {
    let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn finish(dir: &Path, summary: Summary) -> Result<String> {
    write(dir, "summary.txt", summary.as_str())?;
    Ok(summary.text)
}

/// Real matrix as CSV, one row per line.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| fmt_sig(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn spectrum_sorted(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let mut eig = linalg::eigenvalues(a)?;
    eig.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    Ok(eig)
}

fn frequency_data(cfg: &ProjectConfig, opts: &RunOptions, plant: &StateSpaceModel) -> Result<FrequencyData> {
    let exo = cfg.exosystem()?;
    if opts.from_model || cfg.design.source == DataSource::Analytic {
        FrequencyData::analytic(plant, &exo)
    } else {
        let probe = ProbeConfig::for_plant(plant, exo.frequencies())?;
        identify_frequency_data(plant, &exo, &probe)
    }
}

fn sgtr(cfg: &ProjectConfig, fd: &FrequencyData) -> Result<SgtrDesign> {
    design_sgtr(fd, &cfg.exosystem()?, &cfg.pole_constants()?)
}

fn sgtr_loop(plant: &StateSpaceModel, design: &SgtrDesign, eps: f64) -> Result<ClosedLoopModel> {
    assemble_closed_loop(plant, design.servo(), &design.gain_at(eps)?)
}

fn simulate_loop(cfg: &ProjectConfig, plant: &StateSpaceModel, cl: &ClosedLoopModel) -> Result<Trajectory> {
    simulate(
        cl,
        &cfg.signal(plant)?,
        &DVector::zeros(cl.order()),
        cfg.simulation.horizon,
        cfg.simulation.dt,
    )
}

/// Performance figures of one error trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryMetrics {
    pub peak: f64,
    pub terminal: f64,
    /// First time after which `|e|` stays within 1% of the peak.
    pub settling_time: f64,
    pub rms: f64,
    /// Largest excursion of any channel against the sign of its own peak,
    /// relative to that peak.
    pub overshoot: f64,
}

pub fn trajectory_metrics(traj: &Trajectory) -> TrajectoryMetrics {
    let norms = traj.error_norms();
    let peak = norms.iter().copied().fold(0.0, f64::max);
    let band = 0.01 * peak;
    let settling_time = match norms.iter().rposition(|&v| v > band) {
        Some(i) if i + 1 < traj.times.len() => traj.times[i + 1],
        Some(_) => f64::INFINITY,
        None => 0.0,
    };
    let rms = (norms.iter().map(|v| v * v).sum::<f64>() / norms.len().max(1) as f64).sqrt();
    let r = traj.errors.first().map_or(0, |e| e.len());
    let mut overshoot: f64 = 0.0;
    for i in 0..r {
        let (idx, _) = traj
            .errors
            .iter()
            .enumerate()
            .fold((0, 0.0), |best, (k, e)| if e[i].abs() > best.1 { (k, e[i].abs()) } else { best });
        let peak_i = traj.errors[idx][i];
        if peak_i != 0.0 {
            let opposite = traj.errors[idx..]
                .iter()
                .map(|e| -e[i] * peak_i.signum())
                .fold(0.0, f64::max);
            overshoot = overshoot.max(opposite / peak_i.abs());
        }
    }
    TrajectoryMetrics {
        peak,
        terminal: traj.terminal_error(),
        settling_time,
        rms,
        overshoot,
    }
}

fn put_metrics(s: &mut Summary, m: &TrajectoryMetrics) {
    s.num("peak_error", m.peak)
        .num("terminal_error", m.terminal)
        .num("terminal_over_peak", m.terminal / m.peak)
        .num("settling_time", m.settling_time)
        .num("rms_error", m.rms)
        .num("overshoot", m.overshoot);
}

fn put_design(s: &mut Summary, design: &SgtrDesign, fd: &FrequencyData) {
    let op = design.operator();
    s.put("provenance", fd.provenance().as_str())
        .nums("frequencies", &fd.frequencies())
        .nums("k", design.pole_constants())
        .num("m_sigma_min", op.sigma_min())
        .num("m_condition", op.condition_number())
        .put("m_ill_conditioned", op.is_ill_conditioned());
}

/// Design, certification and threshold estimate at the configured `eps`.
pub fn cmd_design(cfg: &ProjectConfig, opts: &RunOptions) -> Result<String> {
    let dir = out_dir(cfg, opts)?;
    let plant = cfg.plant()?;
    let eps = opts.eps.unwrap_or(cfg.design.eps);
    let fd = frequency_data(cfg, opts, &plant)?;
    write(&dir, "frequency_data.toml", &fd.to_toml())?;
    let design = sgtr(cfg, &fd)?;
    let gain = design.gain_at(eps)?;
    write(&dir, "gain.csv", &matrix_csv(&gain))?;

    let loop_at = |e: f64| Ok(sgtr_loop(&plant, &design, e)?.a);
    let mut cert = certify_low_gain(loop_at, eps, cfg.design.certificate_points)?;
    attach_lyapunov(&mut cert, |e| design.reduced_matrix(e))?;
    write(&dir, "certificate.csv", &cert.to_csv())?;
    let eps_star = estimate_eps_star(loop_at, eps)?;
    let alpha = spectral_abscissa_at(&plant, &design, eps)?;

    let mut s = Summary::default();
    s.section("design").put("command", "design").put("config", &cfg.name).num("eps", eps);
    put_design(&mut s, &design, &fd);
    s.num("gain_norm", gain.norm()).num("alpha", alpha);
    s.section("certificate")
        .put("verdict", if cert.passed() { "pass" } else { "fail" })
        .num("margin", cert.margin)
        .num("eps_max", eps)
        .put("points", cert.eps.len());
    if let (Some(lo), Some(hi)) = (
        cert.lyapunov.iter().map(|w| w.lambda_max).reduce(f64::min),
        cert.lyapunov.iter().map(|w| w.lambda_max).reduce(f64::max),
    ) {
        s.num("lyapunov_lambda_max_ratio", hi / lo);
    }
    s.section("threshold");
    match eps_star {
        Some(v) => s.num("eps_star", v),
        None => s.put("eps_star", "none found"),
    };
    let text = finish(&dir, s)?;
    if !(alpha < 0.0) {
        return Err(Error::UnstableAtEps { eps, abscissa: alpha });
    }
    Ok(text)
}

fn spectral_abscissa_at(plant: &StateSpaceModel, design: &SgtrDesign, eps: f64) -> Result<f64> {
    sgtr_loop(plant, design, eps)?.abscissa()
}

/// One row of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub alpha: f64,
    pub metrics: Option<TrajectoryMetrics>,
}

/// Scans the grid; unstable rows are flagged and carry no metrics.
pub fn sweep_rows(cfg: &ProjectConfig, opts: &RunOptions, grid: &[f64]) -> Result<Vec<SweepRow>> {
    let plant = cfg.plant()?;
    let fd = frequency_data(cfg, opts, &plant)?;
    let design = sgtr(cfg, &fd)?;
    grid.iter()
        .map(|&eps| {
            let cl = sgtr_loop(&plant, &design, eps)?;
            let alpha = cl.abscissa()?;
            let metrics = if alpha < 0.0 {
                Some(trajectory_metrics(&simulate_loop(cfg, &plant, &cl)?))
            } else {
                None
            };
            Ok(SweepRow { eps, alpha, metrics })
        })
        .collect()
}

pub fn cmd_sweep(cfg: &ProjectConfig, opts: &RunOptions) -> Result<String> {
    let grid = opts
        .eps_grid
        .or(cfg.design.eps_grid)
        .ok_or_else(|| Error::Config("sweep needs --eps-grid or design.eps_grid".into()))?;
    grid.validate()?;
    let dir = out_dir(cfg, opts)?;
    let rows = sweep_rows(cfg, opts, &grid.values())?;

    let mut csv = String::from("eps,alpha,stable,settling_time,rms_error,overshoot,terminal_error\n");
    for row in &rows {
        let m = row.metrics;
        let f = |v: Option<f64>| v.map_or("nan".to_string(), fmt_sig);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            fmt_sig(row.eps),
            fmt_sig(row.alpha),
            row.metrics.is_some(),
            f(m.map(|m| m.settling_time)),
            f(m.map(|m| m.rms)),
            f(m.map(|m| m.overshoot)),
            f(m.map(|m| m.terminal)),
        );
    }
    write(&dir, "sweep.csv", &csv)?;

    let stable: Vec<bool> = rows.iter().map(|r| r.metrics.is_some()).collect();
    let flips = stable.windows(2).filter(|w| w[0] != w[1]).count();
    let monotone = flips == 0 || (flips == 1 && stable[0]);
    let mut s = Summary::default();
    s.section("sweep")
        .put("command", "sweep")
        .put("config", &cfg.name)
        .put("points", rows.len())
        .put("stable_points", stable.iter().filter(|&&b| b).count())
        .put("monotone", monotone);
    if let Some(i) = stable.iter().position(|&b| !b) {
        s.num("first_unstable_eps", rows[i].eps);
    }
    finish(&dir, s)
}

pub fn cmd_simulate(cfg: &ProjectConfig, opts: &RunOptions) -> Result<String> {
    let dir = out_dir(cfg, opts)?;
    let plant = cfg.plant()?;
    let eps = opts.eps.unwrap_or(cfg.design.eps);
    let fd = frequency_data(cfg, opts, &plant)?;
    let design = sgtr(cfg, &fd)?;
    let cl = sgtr_loop(&plant, &design, eps)?;
    let alpha = cl.abscissa()?;
    if !(alpha < 0.0) {
        return Err(Error::UnstableAtEps { eps, abscissa: alpha });
    }
    let traj = simulate_loop(cfg, &plant, &cl)?;
    write(&dir, "trajectory.csv", &traj.to_csv())?;
    let mut s = Summary::default();
    s.section("simulate")
        .put("command", "simulate")
        .put("config", &cfg.name)
        .num("eps", eps)
        .num("alpha", alpha)
        .num("horizon", cfg.simulation.horizon)
        .num("dt", cfg.simulation.dt)
        .put("samples", traj.len());
    put_metrics(&mut s, &trajectory_metrics(&traj));
    finish(&dir, s)
}

pub fn cmd_ident(cfg: &ProjectConfig, opts: &RunOptions) -> Result<String> {
    let dir = out_dir(cfg, opts)?;
    let plant = cfg.plant()?;
    let exo = cfg.exosystem()?;
    let analytic = FrequencyData::analytic(&plant, &exo)?;
    let mut s = Summary::default();
    s.section("ident").put("command", "ident").put("config", &cfg.name);
    let fd = if opts.from_model {
        analytic.clone()
    } else {
        let probe = ProbeConfig::for_plant(&plant, exo.frequencies())?;
        s.num("settle_time", probe.settle_time)
            .num("record_time", probe.record_time)
            .num("dt", probe.dt)
            .num("amplitude", probe.amplitude);
        identify_frequency_data(&plant, &exo, &probe)?
    };
    write(&dir, "frequency_data.toml", &fd.to_toml())?;
    s.put("provenance", fd.provenance().as_str());
    let mut dev = vec![rel_dev(&linalg::to_complex(fd.dc_gain()), &linalg::to_complex(analytic.dc_gain()))];
    for (a, b) in fd.samples().iter().zip(analytic.samples()) {
        dev.push(rel_dev(&a.response, &b.response));
    }
    s.nums("relative_deviation_from_model", &dev);
    let report = check_nonresonance(&fd);
    s.put("nonresonance", if report.pass { "pass" } else { "fail" });
    finish(&dir, s)
}

fn rel_dev(a: &linalg::CMatrix, b: &linalg::CMatrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn spectrum_csv(rows: &[(&str, &[Complex64])]) -> String {
    let mut out = String::from("controller,re,im\n");
    for (name, eig) in rows {
        for l in eig.iter() {
            let _ = writeln!(out, "{name},{},{}", fmt_sig(l.re), fmt_sig(l.im));
        }
    }
    out
}

/// Result of the SGTR / Davison comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub sgtr_spectrum: Vec<Complex64>,
    pub sgtr_metrics: Option<TrajectoryMetrics>,
    pub davison_spectrum: Option<Vec<Complex64>>,
    pub davison_metrics: Option<TrajectoryMetrics>,
    /// Stage and abscissa at which the sequential design lost stability.
    pub davison_failure: Option<(usize, f64)>,
    /// `(eps_0, sup eps_1)` pairs for the configured and variant `eps_0`.
    pub eps1_limits: Vec<(f64, Option<f64>)>,
    pub best_effort: Option<(Vec<f64>, f64)>,
}

/// Builds both controllers, their spectra, and (for stable loops) the
/// simulated error trajectories. Instability is reported, not raised.
pub fn compare(cfg: &ProjectConfig, opts: &RunOptions) -> Result<(Comparison, Option<Trajectory>, Option<Trajectory>)> {
    let plant = cfg.plant()?;
    let exo = cfg.exosystem()?;
    let dv = cfg
        .davison
        .as_ref()
        .ok_or_else(|| Error::Config("compare needs a [davison] section".into()))?;
    let eps = opts.eps.unwrap_or(cfg.design.eps);
    let fd = frequency_data(cfg, opts, &plant)?;
    let design = sgtr(cfg, &fd)?;
    let cl = sgtr_loop(&plant, &design, eps)?;
    let sgtr_spectrum = spectrum_sorted(&cl.a)?;
    let sgtr_traj = if sgtr_spectrum[0].re < 0.0 {
        Some(simulate_loop(cfg, &plant, &cl)?)
    } else {
        None
    };

    let (davison_spectrum, davison_traj, davison_failure) = match davison_sequential_design(&plant, &exo, &dv.eps) {
        Ok((_, dcl)) => (
            Some(spectrum_sorted(&dcl.a)?),
            Some(simulate_loop(cfg, &plant, &dcl)?),
            None,
        ),
        Err(Error::StageDestabilized { stage, abscissa }) => (None, None, Some((stage, abscissa))),
        Err(e) => return Err(e),
    };

    let mut eps1_limits = Vec::new();
    if exo.harmonic_count() > 0 {
        let start = 1e-3 * dv.eps[1];
        for e0 in std::iter::once(dv.eps[0]).chain(dv.eps0_variant) {
            let limit = match first_harmonic_limit(&plant, &exo, e0, start) {
                Ok(v) => v,
                Err(Error::StageDestabilized { stage: 0, .. }) => Some(0.0),
                Err(e) => return Err(e),
            };
            eps1_limits.push((e0, limit));
        }
    }
    let best_effort = match &dv.tuning_grid {
        Some(grid) => davison_grid_search(&plant, &exo, grid)?,
        None => None,
    };
    Ok((
        Comparison {
            sgtr_metrics: sgtr_traj.as_ref().map(trajectory_metrics),
            davison_metrics: davison_traj.as_ref().map(trajectory_metrics),
            sgtr_spectrum,
            davison_spectrum,
            davison_failure,
            eps1_limits,
            best_effort,
        },
        sgtr_traj,
        davison_traj,
    ))
}

pub fn cmd_compare(cfg: &ProjectConfig, opts: &RunOptions) -> Result<String> {
    let dir = out_dir(cfg, opts)?;
    let eps = opts.eps.unwrap_or(cfg.design.eps);
    let (cmp, sgtr_traj, davison_traj) = compare(cfg, opts)?;
    let davison_eps = &cfg.davison.as_ref().expect("checked in compare").eps;

    let mut rows: Vec<(&str, &[Complex64])> = vec![("sgtr", &cmp.sgtr_spectrum)];
    if let Some(d) = &cmp.davison_spectrum {
        rows.push(("davison", d));
    }
    write(&dir, "spectra.csv", &spectrum_csv(&rows))?;
    if let Some(t) = &sgtr_traj {
        write(&dir, "sgtr_trajectory.csv", &t.to_csv())?;
    }
    if let Some(t) = &davison_traj {
        write(&dir, "davison_trajectory.csv", &t.to_csv())?;
    }

    let mut s = Summary::default();
    s.section("compare").put("command", "compare").put("config", &cfg.name);
    let dom = cmp.sgtr_spectrum[0];
    s.section("sgtr")
        .num("eps", eps)
        .num("dominant_re", dom.re)
        .num("dominant_im", dom.im.abs())
        .put("hurwitz", dom.re < 0.0);
    if let Some(m) = &cmp.sgtr_metrics {
        put_metrics(&mut s, m);
    }
    s.section("davison").nums("eps", davison_eps);
    match (&cmp.davison_spectrum, &cmp.davison_failure) {
        (Some(d), _) => {
            s.num("dominant_re", d[0].re)
                .num("dominant_im", d[0].im.abs())
                .put("hurwitz", d[0].re < 0.0);
        }
        (None, Some((stage, abscissa))) => {
            s.put("hurwitz", false).put("failed_stage", stage).num("failed_stage_alpha", *abscissa);
        }
        _ => {}
    }
    if let Some(m) = &cmp.davison_metrics {
        put_metrics(&mut s, m);
    }
    if let Some(d) = &cmp.davison_spectrum {
        s.section("ordering").put("sgtr_dominant_further_left", dom.re < d[0].re);
    }
    if !cmp.eps1_limits.is_empty() {
        s.section("davison_eps1_interval");
        for (e0, lim) in &cmp.eps1_limits {
            let key = format!("eps0_{}", fmt_sig(*e0));
            match lim {
                Some(v) => s.num(&key, *v),
                None => s.put(&key, "unbounded"),
            };
        }
    }
    if let Some((best, alpha)) = &cmp.best_effort {
        s.section("davison_best_effort_grid_tuning").nums("eps", best).num("dominant_re", *alpha);
    }
    let text = finish(&dir, s)?;
    if !(dom.re < 0.0) {
        return Err(Error::UnstableAtEps { eps, abscissa: dom.re });
    }
    if let Some((stage, abscissa)) = cmp.davison_failure {
        return Err(Error::StageDestabilized { stage, abscissa });
    }
    Ok(text)
}
