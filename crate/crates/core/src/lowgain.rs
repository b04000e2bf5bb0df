//! Low-gain pole placement for the internal model, SGTR design assembly and
//! low-gain Hurwitz certification.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::linalg::{self, spectral_abscissa};
use crate::servo::{controllability_matrix, Exosystem, ServoCompensator, SpectralData};
use crate::sslg::{self, build_m, check_nonresonance, solve_gain, FrequencyData, OperatorMatrix};

/// Minimum fitted margin constant accepted by [`certify_low_gain`].
pub const MIN_MARGIN: f64 = 1e-6;

/// Default number of grid points for certification.
pub const DEFAULT_GRID_POINTS: usize = 24;

/// `(s + k_0 eps) prod_i (s^2 + 2 k_i eps s + k_i^2 eps^2 + w_i^2)`, highest
/// degree first.
pub fn desired_polynomial(k: &[f64], exo: &Exosystem, eps: f64) -> Result<Vec<f64>> {
    if k.len() != exo.harmonic_count() + 1 {
        return Err(Error::Validation(format!(
            "{} pole constants for {} modes",
            k.len(),
            exo.harmonic_count() + 1
        )));
    }
    if k.iter().any(|&ki| !(ki > 0.0) || !ki.is_finite()) {
        return Err(Error::Validation("pole constants must be positive".into()));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Validation(format!("eps must be positive, got {eps}")));
    }
    let mut p = vec![1.0, k[0] * eps];
    for (&ki, &w) in k[1..].iter().zip(exo.frequencies()) {
        let a = ki * eps;
        p = linalg::poly_mul(&p, &[1.0, 2.0 * a, a * a + w * w]);
    }
    Ok(p)
}

/// Roots of [`desired_polynomial`], listed constant mode first.
pub fn desired_roots(k: &[f64], exo: &Exosystem, eps: f64) -> Vec<Complex64> {
    let mut roots = vec![Complex64::new(-k[0] * eps, 0.0)];
    for (&ki, &w) in k[1..].iter().zip(exo.frequencies()) {
        roots.push(Complex64::new(-ki * eps, w));
        roots.push(Complex64::new(-ki * eps, -w));
    }
    roots
}

/// Single-input pole placement (Ackermann): returns the row `z` such that
/// `phi - g z` has characteristic polynomial `desired` (monic, degree q).
pub fn pole_place(phi: &DMatrix<f64>, g: &DVector<f64>, desired: &[f64]) -> Result<RowDVector<f64>> {
    let q = phi.nrows();
    if !phi.is_square() || g.len() != q {
        return Err(Error::Dimension(format!(
            "pole placement with phi {:?} and g of length {}",
            phi.shape(),
            g.len()
        )));
    }
    if desired.len() != q + 1 || (desired[0] - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!(
            "desired polynomial must be monic of degree {q}"
        )));
    }
    let ctrb = controllability_matrix(phi, g);
    let sv = linalg::singular_values(&ctrb);
    let rank = linalg::rank_above(&sv, 1e-13 * sv.first().copied().unwrap_or(0.0));
    if rank < q {
        return Err(Error::Uncontrollable { rank, expected: q });
    }
    // p(phi) by Horner
    let mut p_phi = DMatrix::<f64>::zeros(q, q);
    for &c in desired {
        p_phi = phi * p_phi + DMatrix::identity(q, q) * c;
    }
    let mut e_last = DVector::zeros(q);
    e_last[q - 1] = 1.0;
    let y = ctrb
        .transpose()
        .lu()
        .solve(&e_last)
        .ok_or(Error::Uncontrollable { rank, expected: q })?;
    Ok(y.transpose() * p_phi)
}

/// Low-gain stabilizability: stabilizable, with no eigenvalue in the open
/// right half plane.
pub fn is_low_gain_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    const TOL: f64 = 1e-9;
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return false;
    }
    let eig = match linalg::eigenvalues(a) {
        Ok(e) => e,
        Err(_) => return false,
    };
    if eig.iter().any(|l| l.re > TOL) {
        return false;
    }
    let scale = 1.0 + a.norm() + b.norm();
    eig.iter().filter(|l| l.re >= -TOL).all(|&lam| {
        let mut pbh = linalg::CMatrix::zeros(n, n + b.ncols());
        pbh.view_mut((0, 0), (n, n))
            .copy_from(&(linalg::to_complex(a) - linalg::CMatrix::identity(n, n) * lam));
        pbh.view_mut((0, n), (n, b.ncols())).copy_from(&linalg::to_complex(b));
        let sv = linalg::singular_values_complex(&pbh);
        linalg::rank_above(&sv, 1e-9 * scale) == n
    })
}

/// A complete single-gain tuning regulator: the internal model, pole
/// constants and the `eps`-independent operator matrix. Gains are produced
/// on demand by [`SgtrDesign::gain_at`].
#[derive(Clone, Debug)]
pub struct SgtrDesign {
    exo: Exosystem,
    spectral: SpectralData,
    servo: ServoCompensator,
    operator: OperatorMatrix,
    k: Vec<f64>,
    m: usize,
}

/// Unit constants for every internal-model mode.
pub fn default_pole_constants(exo: &Exosystem) -> Vec<f64> {
    vec![1.0; exo.harmonic_count() + 1]
}

pub fn design_sgtr(fd: &FrequencyData, exo: &Exosystem, k: &[f64]) -> Result<SgtrDesign> {
    fd.check_matches(exo)?;
    // validates k and its length
    desired_polynomial(k, exo, 1.0)?;
    let report = check_nonresonance(fd);
    if !report.pass {
        let singular_values = report
            .failures()
            .flat_map(|e| e.singular_values.iter().copied())
            .collect();
        return Err(Error::NonResonance { singular_values });
    }
    let spectral = SpectralData::new(exo);
    let operator = build_m(fd, &spectral)?;
    if !operator.has_full_row_rank() {
        return Err(Error::NonResonance {
            singular_values: vec![operator.sigma_min(), operator.sigma_max()],
        });
    }
    Ok(SgtrDesign {
        servo: ServoCompensator::new(exo, fd.r())?,
        exo: exo.clone(),
        spectral,
        operator,
        k: k.to_vec(),
        m: fd.m(),
    })
}

impl SgtrDesign {
    pub fn exosystem(&self) -> &Exosystem {
        &self.exo
    }
    pub fn spectral(&self) -> &SpectralData {
        &self.spectral
    }
    pub fn servo(&self) -> &ServoCompensator {
        &self.servo
    }
    pub fn operator(&self) -> &OperatorMatrix {
        &self.operator
    }
    pub fn pole_constants(&self) -> &[f64] {
        &self.k
    }
    pub fn r(&self) -> usize {
        self.servo.r()
    }
    pub fn m(&self) -> usize {
        self.m
    }

    /// Internal-model feedback row `z(eps)`; zero at `eps = 0`.
    pub fn z_at(&self, eps: f64) -> Result<RowDVector<f64>> {
        if eps == 0.0 {
            return Ok(RowDVector::zeros(self.exo.q()));
        }
        let desired = desired_polynomial(&self.k, &self.exo, eps)?;
        pole_place(self.servo.phi(), self.servo.g(), &desired)
    }

    /// `Z(eps) = z(eps) ⊗ I_r`
    pub fn target_at(&self, eps: f64) -> Result<DMatrix<f64>> {
        let z = self.z_at(eps)?;
        let r = self.r();
        let zm = DMatrix::from_row_slice(1, z.len(), z.as_slice());
        Ok(zm.kronecker(&DMatrix::identity(r, r)))
    }

    /// Feedback gain `F(eps)` solving `L(F) = Z(eps)`.
    pub fn gain_at(&self, eps: f64) -> Result<DMatrix<f64>> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::Validation(format!("eps must be non-negative, got {eps}")));
        }
        if eps == 0.0 {
            return Ok(DMatrix::zeros(self.m, self.r() * self.exo.q()));
        }
        solve_gain(&self.operator, &self.target_at(eps)?)
    }

    /// `Phi - G Z(eps)`, the reduced loop the design places.
    pub fn reduced_matrix(&self, eps: f64) -> Result<DMatrix<f64>> {
        Ok(self.servo.big_phi() - self.servo.big_g() * self.target_at(eps)?)
    }

    /// Samples `|F(eps)|` on `eps_probe * 2^-i`, `i = 1..=20`, and fits
    /// `|F| ~ C eps` by least squares through the origin.
    pub fn class_f_probe(&self, eps_probe: f64) -> Result<ClassFProbe> {
        let eps: Vec<f64> = (1..=20).map(|i| eps_probe * 0.5f64.powi(i)).collect();
        let norms = eps
            .iter()
            .map(|&e| Ok(self.gain_at(e)?.norm()))
            .collect::<Result<Vec<_>>>()?;
        let num: f64 = eps.iter().zip(&norms).map(|(e, n)| e * n).sum();
        let den: f64 = eps.iter().map(|e| e * e).sum();
        Ok(ClassFProbe {
            eps,
            norms,
            slope: num / den,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassFProbe {
    pub eps: Vec<f64>,
    pub norms: Vec<f64>,
    pub slope: f64,
}

impl ClassFProbe {
    pub fn ratios(&self) -> Vec<f64> {
        self.eps.iter().zip(&self.norms).map(|(e, n)| n / e).collect()
    }
}

/// Solution of `A^T P + P A = -eps I` at one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovWitness {
    pub eps: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub residual: f64,
}

pub fn lyapunov_certificate(a_eps: &DMatrix<f64>, eps: f64) -> Result<LyapunovWitness> {
    if !(eps > 0.0) {
        return Err(Error::Validation(format!("eps must be positive, got {eps}")));
    }
    let abscissa = spectral_abscissa(a_eps)?;
    if !(abscissa < 0.0) {
        return Err(Error::NotHurwitz { abscissa });
    }
    let n = a_eps.nrows();
    let q = DMatrix::identity(n, n) * eps;
    let p = linalg::lyapunov_solve(a_eps, &q)?;
    let residual = (a_eps.transpose() * &p + &p * a_eps + &q).norm();
    let ev = linalg::symmetric_eigenvalues(&p);
    Ok(LyapunovWitness {
        eps,
        lambda_min: ev[0],
        lambda_max: ev[n - 1],
        residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

/// Grid evidence for `alpha(A(eps)) <= -c eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityCertificate {
    pub eps: Vec<f64>,
    pub alpha: Vec<f64>,
    pub ratio: Vec<f64>,
    pub margin: f64,
    pub verdict: Verdict,
    pub lyapunov: Vec<LyapunovWitness>,
}

impl StabilityCertificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// `eps,alpha,ratio` rows followed by a `#` summary line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,alpha,ratio\n");
        for i in 0..self.eps.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_sig(self.eps[i]),
                fmt_sig(self.alpha[i]),
                fmt_sig(self.ratio[i])
            ));
        }
        out.push_str(&format!(
            "# margin={} verdict={} points={}\n",
            fmt_sig(self.margin),
            if self.passed() { "pass" } else { "fail" },
            self.eps.len()
        ));
        out
    }
}

/// Grid `eps_max * 2^-(points-1), ..., eps_max / 2, eps_max`.
pub fn certificate_grid(eps_max: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| eps_max * 0.5f64.powi((points - 1 - i) as i32))
        .collect()
}

/// Evaluates the spectral abscissa on a factor-two grid in `(0, eps_max]`
/// and fits the margin `c = min -alpha/eps`.
pub fn certify_low_gain<F>(loop_at: F, eps_max: f64, points: usize) -> Result<StabilityCertificate>
where
    F: Fn(f64) -> Result<DMatrix<f64>>,
{
    if points < 8 {
        return Err(Error::Validation(format!("certificate needs at least 8 points, got {points}")));
    }
    if !(eps_max > 0.0) || !eps_max.is_finite() {
        return Err(Error::Validation(format!("eps_max must be positive, got {eps_max}")));
    }
    let eps = certificate_grid(eps_max, points);
    let alpha = eps
        .iter()
        .map(|&e| spectral_abscissa(&loop_at(e)?))
        .collect::<Result<Vec<_>>>()?;
    let ratio: Vec<f64> = eps.iter().zip(&alpha).map(|(e, a)| -a / e).collect();
    let margin = ratio.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = margin >= MIN_MARGIN && alpha.iter().all(|&a| a < 0.0);
    Ok(StabilityCertificate {
        eps,
        alpha,
        ratio,
        margin,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        lyapunov: Vec::new(),
    })
}

/// Adds Lyapunov witnesses at every grid point where the matrix is Hurwitz.
pub fn attach_lyapunov<F>(cert: &mut StabilityCertificate, loop_at: F) -> Result<()>
where
    F: Fn(f64) -> Result<DMatrix<f64>>,
{
    cert.lyapunov.clear();
    for (&e, &a) in cert.eps.iter().zip(&cert.alpha) {
        if a < 0.0 {
            cert.lyapunov.push(lyapunov_certificate(&loop_at(e)?, e)?);
        }
    }
    Ok(())
}

/// Rounds to two significant figures.
pub fn round_sig2(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = 10f64.powi(x.abs().log10().floor() as i32 - 1);
    (x / mag).round() * mag
}

/// Upper stability threshold: scans `eps_start * 2^i` until the abscissa
/// is non-negative, then bisects. Returns `None` when no unstable point is
/// found within 40 doublings.
pub fn estimate_eps_star<F>(loop_at: F, eps_start: f64) -> Result<Option<f64>>
where
    F: Fn(f64) -> Result<DMatrix<f64>>,
{
    let unstable = |e: f64| -> Result<bool> { Ok(spectral_abscissa(&loop_at(e)?)? >= 0.0) };
    let (mut lo, mut hi);
    if unstable(eps_start)? {
        hi = eps_start;
        lo = eps_start / 2.0;
        let mut halvings = 0;
        while unstable(lo)? {
            hi = lo;
            lo /= 2.0;
            halvings += 1;
            if halvings > 60 {
                return Ok(Some(0.0));
            }
        }
    } else {
        lo = eps_start;
        hi = eps_start * 2.0;
        let mut doublings = 0;
        while !unstable(hi)? {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings >= 40 {
                return Ok(None);
            }
        }
    }
    while (hi - lo) > 1e-4 * hi {
        let mid = 0.5 * (lo + hi);
        if unstable(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(round_sig2(0.5 * (lo + hi))))
}

/// The `count` eigenvalues with the largest real parts.
pub fn dominant_eigenvalues(a: &DMatrix<f64>, count: usize) -> Result<Vec<Complex64>> {
    let mut eig = linalg::eigenvalues(a)?;
    eig.sort_by(|x, y| y.re.total_cmp(&x.re));
    eig.truncate(count);
    Ok(eig)
}

/// Re-export for callers that only need the operator pieces.
pub use sslg::sslg_apply_data;
