//! Steady-state loop-gain operator.
//!
//! `L(F) = C Pi + D F` where `Pi Phi - A Pi = B F`. The same operator is
//! available from frequency-response samples alone:
//!
//! ```text
//! L(F) = P(0) F X_0 + 2 sum_k Re{ P(j w_k) F X_k }     (X_k lifted by ⊗ I_r)
//! ```
//!
//! and in vectorized form `vec L(F) = M vec F` with
//! `M = X_0^T ⊗ P(0) + 2 sum_k Re{ X_k^T ⊗ P(j w_k) }`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, conj, to_complex, unvec, vec_cols, CMatrix};
use crate::lti::{eval_transfer, sylvester_solve, StateSpaceModel};
use crate::servo::{Exosystem, ServoCompensator, SpectralData};

/// Relative singular-value threshold for rank decisions.
pub const RANK_RTOL: f64 = 1e-10;

/// Condition number of `M` above which designs are flagged.
pub const CONDITION_WARNING: f64 = 1e8;

/// Where a set of frequency samples came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Analytic,
    Identified,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Analytic => "analytic",
            Provenance::Identified => "identified",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrequencySample {
    pub omega: f64,
    pub response: CMatrix,
}

/// Plant frequency response at the exosystem eigenvalues: the DC gain and
/// one complex sample per harmonic frequency, in exosystem order.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyData {
    p0: DMatrix<f64>,
    samples: Vec<FrequencySample>,
    provenance: Provenance,
}

impl FrequencyData {
    pub fn new(p0: DMatrix<f64>, samples: Vec<FrequencySample>, provenance: Provenance) -> Result<Self> {
        let (r, m) = p0.shape();
        if r == 0 || m == 0 {
            return Err(Error::Dimension("DC gain must be non-empty".into()));
        }
        let mut prev = 0.0;
        for s in &samples {
            if s.response.shape() != (r, m) {
                return Err(Error::Dimension(format!(
                    "sample at w = {} is {:?}, expected {:?}",
                    s.omega,
                    s.response.shape(),
                    (r, m)
                )));
            }
            if !(s.omega > prev) {
                return Err(Error::Validation("sample frequencies must increase strictly".into()));
            }
            prev = s.omega;
        }
        let finite = p0.iter().all(|v| v.is_finite())
            && samples
                .iter()
                .all(|s| s.response.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        if !finite {
            return Err(Error::Validation("frequency data contains non-finite values".into()));
        }
        Ok(FrequencyData {
            p0,
            samples,
            provenance,
        })
    }

    /// Samples computed from a model by direct transfer evaluation.
    pub fn analytic(plant: &StateSpaceModel, exo: &Exosystem) -> Result<Self> {
        let p0 = linalg::real_part(&eval_transfer(plant, Complex64::new(0.0, 0.0))?);
        let samples = exo
            .frequencies()
            .iter()
            .map(|&w| {
                Ok(FrequencySample {
                    omega: w,
                    response: eval_transfer(plant, Complex64::new(0.0, w))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(p0, samples, Provenance::Analytic)
    }

    pub fn r(&self) -> usize {
        self.p0.nrows()
    }
    pub fn m(&self) -> usize {
        self.p0.ncols()
    }
    pub fn dc_gain(&self) -> &DMatrix<f64> {
        &self.p0
    }
    pub fn samples(&self) -> &[FrequencySample] {
        &self.samples
    }
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.omega).collect()
    }

    /// Errors unless the sample frequencies are exactly the exosystem's.
    pub fn check_matches(&self, exo: &Exosystem) -> Result<()> {
        if self.frequencies() != exo.frequencies() {
            return Err(Error::Validation(format!(
                "frequency data sampled at {:?} but exosystem has {:?}",
                self.frequencies(),
                exo.frequencies()
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        let file = FrequencyDataFile {
            provenance: self.provenance,
            r: self.r(),
            m: self.m(),
            dc: linalg::to_rows(&self.p0),
            samples: self
                .samples
                .iter()
                .map(|s| SampleFile {
                    omega: s.omega,
                    re: linalg::to_rows(&linalg::real_part(&s.response)),
                    im: linalg::to_rows(&linalg::imag_part(&s.response)),
                })
                .collect(),
        };
        let body = toml::to_string(&file).expect("frequency data serializes");
        format!("# frequency response samples ({} provenance)\n{body}", self.provenance.as_str())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: FrequencyDataFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let p0 = linalg::from_rows(&file.dc)?;
        if p0.shape() != (file.r, file.m) {
            return Err(Error::Dimension("dc block disagrees with declared r, m".into()));
        }
        let samples = file
            .samples
            .iter()
            .map(|s| {
                let re = linalg::from_rows(&s.re)?;
                let im = linalg::from_rows(&s.im)?;
                if re.shape() != im.shape() {
                    return Err(Error::Dimension("real and imaginary blocks differ in shape".into()));
                }
                Ok(FrequencySample {
                    omega: s.omega,
                    response: re.zip_map(&im, Complex64::new),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(p0, samples, file.provenance)
    }
}

#[derive(Serialize, Deserialize)]
struct FrequencyDataFile {
    provenance: Provenance,
    r: usize,
    m: usize,
    dc: Vec<Vec<f64>>,
    #[serde(default)]
    samples: Vec<SampleFile>,
}

#[derive(Serialize, Deserialize)]
struct SampleFile {
    omega: f64,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

fn check_data_against_spectrum(fd: &FrequencyData, spec: &SpectralData) -> Result<()> {
    if fd.samples().len() + 1 != spec.len() {
        return Err(Error::Dimension(format!(
            "{} harmonic samples for {} harmonic modes",
            fd.samples().len(),
            spec.len() - 1
        )));
    }
    for (k, s) in fd.samples().iter().enumerate() {
        if s.omega != spec.eigenvalue(k + 1).im {
            return Err(Error::Validation(format!(
                "sample {k} at w = {} but mode at w = {}",
                s.omega,
                spec.eigenvalue(k + 1).im
            )));
        }
    }
    Ok(())
}

/// `L(F)` from frequency-response samples.
pub fn sslg_apply_data(fd: &FrequencyData, spec: &SpectralData, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_data_against_spectrum(fd, spec)?;
    let r = fd.r();
    let rq = r * spec.q();
    if f.shape() != (fd.m(), rq) {
        return Err(Error::Dimension(format!(
            "gain is {:?}, expected {:?}",
            f.shape(),
            (fd.m(), rq)
        )));
    }
    let fc = to_complex(f);
    let mut total = to_complex(fd.dc_gain()) * &fc * spec.lifted(0, r);
    for (k, s) in fd.samples().iter().enumerate() {
        let x = spec.lifted(k + 1, r);
        // The conjugate-mode residue is formed explicitly; the imaginary
        // parts then cancel only up to rounding.
        total += &s.response * &fc * &x;
        total += conj(&s.response) * &fc * conj(&x);
    }
    let real = linalg::real_part(&total);
    let residue = linalg::imag_part(&total).amax();
    if residue > 1e-9 * real.amax().max(1.0) {
        return Err(Error::ImaginaryResidue { residue });
    }
    Ok(real)
}

/// `L(F)` from a state-space model through the Sylvester equation.
pub fn sslg_apply_model(
    plant: &StateSpaceModel,
    servo: &ServoCompensator,
    f: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    plant.require_stable()?;
    let rq = servo.big_phi().nrows();
    if servo.r() != plant.r() || f.shape() != (plant.m(), rq) {
        return Err(Error::Dimension(format!(
            "gain is {:?}, expected {:?}",
            f.shape(),
            (plant.m(), rq)
        )));
    }
    let pi = sylvester_solve(plant.a(), servo.big_phi(), &(plant.b() * f))?;
    Ok(plant.c() * pi + plant.d() * f)
}

/// Vectorized operator with cached singular data for repeated solves.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    matrix: DMatrix<f64>,
    sigma_min: f64,
    sigma_max: f64,
    pinv: Option<DMatrix<f64>>,
    r: usize,
    m: usize,
    rq: usize,
}

impl OperatorMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }
    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }
    pub fn condition_number(&self) -> f64 {
        self.sigma_max / self.sigma_min
    }
    pub fn is_ill_conditioned(&self) -> bool {
        !(self.condition_number() <= CONDITION_WARNING)
    }
    pub fn has_full_row_rank(&self) -> bool {
        self.sigma_min > RANK_RTOL * self.sigma_max
    }
    /// Shape `(r, m, rq)` of the operator `R^{m x rq} -> R^{r x rq}`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.r, self.m, self.rq)
    }
}

pub fn build_m(fd: &FrequencyData, spec: &SpectralData) -> Result<OperatorMatrix> {
    check_data_against_spectrum(fd, spec)?;
    let r = fd.r();
    let m = fd.m();
    let rq = r * spec.q();
    let mut mat = spec.lifted(0, r).transpose().kronecker(&to_complex(fd.dc_gain()));
    for (k, s) in fd.samples().iter().enumerate() {
        let term = spec.lifted(k + 1, r).transpose().kronecker(&s.response);
        mat += term.map(|v| Complex64::new(2.0 * v.re, 0.0));
    }
    let matrix = linalg::real_part(&mat);
    let sv = linalg::singular_values(&matrix);
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    // Full row rank needs r*rq nonzero singular values.
    let sigma_min = if sv.len() < r * rq { 0.0 } else { sv[r * rq - 1] };
    let mut op = OperatorMatrix {
        matrix,
        sigma_min,
        sigma_max,
        pinv: None,
        r,
        m,
        rq,
    };
    if op.has_full_row_rank() {
        op.pinv = Some(linalg::pinv(&op.matrix, RANK_RTOL));
    }
    Ok(op)
}

/// Solves `M vec F = vec Z`; minimum-norm when `m > r`.
pub fn solve_gain(op: &OperatorMatrix, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if z.shape() != (op.r, op.rq) {
        return Err(Error::Dimension(format!(
            "target is {:?}, expected {:?}",
            z.shape(),
            (op.r, op.rq)
        )));
    }
    let pinv = op.pinv.as_ref().ok_or_else(|| Error::NonResonance {
        singular_values: linalg::singular_values(&op.matrix),
    })?;
    let zv = vec_cols(z);
    let fv: DVector<f64> = pinv * &zv;
    let residual = (&op.matrix * &fv - &zv).norm();
    if residual > 1e-8 * (1.0 + zv.norm()) {
        return Err(Error::NonResonance {
            singular_values: linalg::singular_values(&op.matrix),
        });
    }
    Ok(unvec(&fv, op.m, op.rq))
}

/// Rank of one frequency-response sample.
#[derive(Clone, Debug, PartialEq)]
pub struct RankEntry {
    pub lambda: Complex64,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonResonanceReport {
    pub entries: Vec<RankEntry>,
    pub threshold: f64,
    pub pass: bool,
}

impl NonResonanceReport {
    pub fn failures(&self) -> impl Iterator<Item = &RankEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }
}

/// Checks `rank P(lambda) = r` at every exosystem eigenvalue.
///
/// The threshold is relative to the largest singular value across all
/// samples so that a single vanishing sample is still detected.
pub fn check_nonresonance(fd: &FrequencyData) -> NonResonanceReport {
    let r = fd.r();
    let mut svs = vec![(Complex64::new(0.0, 0.0), linalg::singular_values(fd.dc_gain()))];
    for s in fd.samples() {
        svs.push((Complex64::new(0.0, s.omega), linalg::singular_values_complex(&s.response)));
    }
    let scale = svs
        .iter()
        .filter_map(|(_, sv)| sv.first().copied())
        .fold(0.0, f64::max);
    let threshold = RANK_RTOL * scale;
    let entries: Vec<RankEntry> = svs
        .into_iter()
        .map(|(lambda, sv)| {
            let rank = linalg::rank_above(&sv, threshold);
            RankEntry {
                lambda,
                rank,
                pass: rank == r,
                singular_values: sv,
            }
        })
        .collect();
    let pass = entries.iter().all(|e| e.pass);
    NonResonanceReport {
        entries,
        threshold,
        pass,
    }
}
