//! Davison's tuning regulator: per-mode gains from frequency-response
//! pseudoinverses, closed one mode at a time.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, pinv, CMatrix};
use crate::lti::{assemble_closed_loop, eval_transfer, ClosedLoopModel, StateSpaceModel};
use crate::servo::{Exosystem, ServoCompensator};
use crate::sslg::RANK_RTOL;

fn require_row_rank(sv: &[f64], r: usize, what: &str) -> Result<()> {
    let smax = sv.first().copied().unwrap_or(0.0);
    if linalg::rank_above(sv, RANK_RTOL * smax) < r || smax == 0.0 {
        return Err(Error::RankDeficient(format!("{what} has rank below {r}")));
    }
    Ok(())
}

/// `F_0 = P(0)^+`.
pub fn davison_gain_constant(p0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_row_rank(&linalg::singular_values(p0), p0.nrows(), "DC gain")?;
    Ok(pinv(p0, RANK_RTOL))
}

/// `[2 w (Im P)^+, 2 (Re P)^+]`, matching the servo block order
/// `(eta, eta')` of one harmonic.
pub fn davison_gain_harmonic(pjw: &CMatrix, omega: f64) -> Result<DMatrix<f64>> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Validation(format!("frequency must be positive, got {omega}")));
    }
    require_row_rank(
        &linalg::singular_values_complex(pjw),
        pjw.nrows(),
        &format!("frequency response at w = {omega}"),
    )?;
    let f1 = pinv(&linalg::imag_part(pjw), RANK_RTOL) * (2.0 * omega);
    let f2 = pinv(&linalg::real_part(pjw), RANK_RTOL) * 2.0;
    Ok(linalg::hstack(&[&f1, &f2]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DavisonDesign {
    /// `F_0`, m x r.
    pub f0: DMatrix<f64>,
    /// `F_k`, m x 2r, indexed by exosystem frequency (ascending).
    pub harmonic: Vec<DMatrix<f64>>,
    /// `eps_0..eps_l`, indexed like the modes.
    pub eps: Vec<f64>,
    /// Harmonic indices in the order the loops were closed.
    pub order: Vec<usize>,
    /// Spectral abscissa after each stage, constant stage first.
    pub stage_abscissae: Vec<f64>,
    frequencies: Vec<f64>,
}

impl DavisonDesign {
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Total feedback `[eps_0 F_0, eps_1 F_1, ...]` in servo block order.
    pub fn feedback(&self) -> DMatrix<f64> {
        let all: Vec<usize> = (0..self.harmonic.len()).collect();
        self.feedback_for(&all)
    }

    fn feedback_for(&self, closed: &[usize]) -> DMatrix<f64> {
        let mut blocks = vec![&self.f0 * self.eps[0]];
        for &k in closed {
            blocks.push(&self.harmonic[k] * self.eps[k + 1]);
        }
        let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
        linalg::hstack(&refs)
    }
}

/// Loop with the constant mode and the listed harmonics closed.
fn stage_loop(
    plant: &StateSpaceModel,
    design: &DavisonDesign,
    closed: &[usize],
) -> Result<ClosedLoopModel> {
    let mut sorted = closed.to_vec();
    sorted.sort_unstable();
    let freqs = sorted.iter().map(|&k| design.frequencies[k]).collect();
    let servo = ServoCompensator::new(&Exosystem::new(freqs)?, plant.r())?;
    assemble_closed_loop(plant, &servo, &design.feedback_for(&sorted))
}

/// Sequential design in ascending frequency order.
pub fn davison_sequential_design(
    plant: &StateSpaceModel,
    exo: &Exosystem,
    eps: &[f64],
) -> Result<(DavisonDesign, ClosedLoopModel)> {
    let order: Vec<usize> = (0..exo.harmonic_count()).collect();
    davison_sequential_design_ordered(plant, exo, eps, &order)
}

/// Sequential design with the harmonics closed in `order` (a permutation of
/// `0..l`); the constant mode is always closed first. Each harmonic gain is
/// computed from the current closed loop's input-to-error response.
pub fn davison_sequential_design_ordered(
    plant: &StateSpaceModel,
    exo: &Exosystem,
    eps: &[f64],
    order: &[usize],
) -> Result<(DavisonDesign, ClosedLoopModel)> {
    let l = exo.harmonic_count();
    if eps.len() != l + 1 {
        return Err(Error::Validation(format!("{} tuning gains for {} modes", eps.len(), l + 1)));
    }
    if eps.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::Validation("tuning gains must be positive".into()));
    }
    let mut seen = vec![false; l];
    if order.len() != l || order.iter().any(|&k| k >= l || std::mem::replace(&mut seen[k], true)) {
        return Err(Error::Validation(format!("stage order {order:?} is not a permutation of 0..{l}")));
    }
    plant.require_stable()?;

    let p0 = eval_transfer(plant, Complex64::new(0.0, 0.0))?;
    let f0 = davison_gain_constant(&linalg::real_part(&p0))
        .map_err(|e| Error::RankDeficient(format!("stage 0: {e}")))?;
    let mut design = DavisonDesign {
        f0,
        harmonic: vec![DMatrix::zeros(plant.m(), 2 * plant.r()); l],
        eps: eps.to_vec(),
        order: order.to_vec(),
        stage_abscissae: Vec::with_capacity(l + 1),
        frequencies: exo.frequencies().to_vec(),
    };

    let mut closed: Vec<usize> = Vec::with_capacity(l);
    let mut cl = stage_loop(plant, &design, &closed)?;
    let alpha = cl.abscissa()?;
    design.stage_abscissae.push(alpha);
    if !(alpha < 0.0) {
        return Err(Error::StageDestabilized { stage: 0, abscissa: alpha });
    }
    for (stage, &k) in order.iter().enumerate().map(|(i, k)| (i + 1, k)) {
        let omega = design.frequencies[k];
        let pk = cl.input_to_error(Complex64::new(0.0, omega))?;
        design.harmonic[k] = davison_gain_harmonic(&pk, omega)
            .map_err(|e| Error::RankDeficient(format!("stage {stage}: {e}")))?;
        closed.push(k);
        cl = stage_loop(plant, &design, &closed)?;
        let alpha = cl.abscissa()?;
        design.stage_abscissae.push(alpha);
        if !(alpha < 0.0) {
            return Err(Error::StageDestabilized { stage, abscissa: alpha });
        }
    }
    Ok((design, cl))
}

/// Supremum of `eps_1` keeping the loop with the constant mode and the first
/// harmonic closed stable, for a fixed `eps_0`. Scans upward from
/// `eps_start` by doubling and then bisects to relative width `1e-6`.
/// Returns `None` if the loop stays stable for 40 doublings.
pub fn first_harmonic_limit(
    plant: &StateSpaceModel,
    exo: &Exosystem,
    eps0: f64,
    eps_start: f64,
) -> Result<Option<f64>> {
    if exo.harmonic_count() == 0 {
        return Err(Error::Validation("no harmonic stage to tune".into()));
    }
    let sub = Exosystem::new(vec![exo.frequencies()[0]])?;
    let stable = |e1: f64| -> Result<bool> {
        match davison_sequential_design(plant, &sub, &[eps0, e1]) {
            Ok(_) => Ok(true),
            Err(Error::StageDestabilized { stage: 1, .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };
    let mut lo = 0.0;
    let mut hi = eps_start;
    let mut doublings = 0;
    while stable(hi)? {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 40 {
            return Ok(None);
        }
    }
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if stable(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Best-effort tuning: every combination of `grid` values for the
/// `l + 1` gains, keeping the stable design with the smallest abscissa.
pub fn davison_grid_search(
    plant: &StateSpaceModel,
    exo: &Exosystem,
    grid: &[f64],
) -> Result<Option<(Vec<f64>, f64)>> {
    let modes = exo.harmonic_count() + 1;
    let total = grid.len().checked_pow(modes as u32).unwrap_or(usize::MAX);
    if grid.is_empty() || total > 1_000_000 {
        return Err(Error::Capacity {
            what: "Davison tuning grid",
            size: total,
            limit: 1_000_000,
        });
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for idx in 0..total {
        let mut rest = idx;
        let eps: Vec<f64> = (0..modes)
            .map(|_| {
                let v = grid[rest % grid.len()];
                rest /= grid.len();
                v
            })
            .collect();
        match davison_sequential_design(plant, exo, &eps) {
            Ok((_, cl)) => {
                let alpha = cl.abscissa()?;
                if best.as_ref().is_none_or(|(_, a)| alpha < *a) {
                    best = Some((eps, alpha));
                }
            }
            Err(Error::StageDestabilized { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}
