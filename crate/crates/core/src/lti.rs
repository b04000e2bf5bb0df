//! State-space plants, exogenous signals, closed-loop assembly and
//! fixed-step simulation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::linalg::{self, to_complex, unvec, vec_cols, CMatrix, KRONECKER_LIMIT};
use crate::servo::ServoCompensator;

pub use crate::linalg::spectral_abscissa;

/// Plants registered as stable must have abscissa strictly below this.
pub const STABILITY_MARGIN: f64 = -1e-12;

/// Linear time-invariant plant
///
/// ```text
/// x' = A x + B u + Bd d
/// e  = C x + D u + Dd d
/// ```
///
/// with `r <= m` error channels. Disturbance channels are optional and
/// default to zero columns.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    bd: DMatrix<f64>,
    dd: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let r = c.nrows();
        let bd = DMatrix::zeros(n, 0);
        let dd = DMatrix::zeros(r, 0);
        let model = StateSpaceModel { a, b, c, d, bd, dd };
        model.check_dimensions()?;
        Ok(model)
    }

    /// Like [`StateSpaceModel::new`], additionally requiring a Hurwitz `A`.
    pub fn new_stable(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let model = Self::new(a, b, c, d)?;
        model.require_stable()?;
        Ok(model)
    }

    pub fn with_disturbance(mut self, bd: DMatrix<f64>, dd: DMatrix<f64>) -> Result<Self> {
        self.bd = bd;
        self.dd = dd;
        self.check_dimensions()?;
        Ok(self)
    }

    fn check_dimensions(&self) -> Result<()> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        let r = self.c.nrows();
        let nd = self.bd.ncols();
        let bad = |what: &str| Err(Error::Dimension(what.to_string()));
        if n == 0 || m == 0 || r == 0 {
            return bad("plant dimensions n, m, r must be positive");
        }
        if !self.a.is_square() {
            return bad("A must be square");
        }
        if self.b.nrows() != n {
            return bad("B must have n rows");
        }
        if self.c.ncols() != n {
            return bad("C must have n columns");
        }
        if self.d.shape() != (r, m) {
            return bad("D must be r x m");
        }
        if self.bd.nrows() != n {
            return bad("Bd must have n rows");
        }
        if self.dd.shape() != (r, nd) {
            return bad("Dd must be r x n_d");
        }
        if r > m {
            return bad("error dimension r must not exceed input dimension m");
        }
        let finite = [&self.a, &self.b, &self.c, &self.d, &self.bd, &self.dd]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Validation("plant matrices contain non-finite entries".into()));
        }
        Ok(())
    }

    /// Returns the spectral abscissa of `A`, or an error when it is not
    /// below [`STABILITY_MARGIN`].
    pub fn require_stable(&self) -> Result<f64> {
        let alpha = spectral_abscissa(&self.a)?;
        if alpha < STABILITY_MARGIN {
            Ok(alpha)
        } else {
            Err(Error::PlantNotStable { abscissa: alpha })
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn bd(&self) -> &DMatrix<f64> {
        &self.bd
    }
    pub fn dd(&self) -> &DMatrix<f64> {
        &self.dd
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn r(&self) -> usize {
        self.c.nrows()
    }
    pub fn nd(&self) -> usize {
        self.bd.ncols()
    }
}

/// One sinusoidal component `cos_amp * cos(wt) + sin_amp * sin(wt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Harmonic {
    pub omega: f64,
    pub cos_amp: DVector<f64>,
    pub sin_amp: DVector<f64>,
}

/// Disturbance/reference signal: a constant plus finitely many harmonics.
#[derive(Clone, Debug, PartialEq)]
pub struct ExogenousSignal {
    constant: DVector<f64>,
    harmonics: Vec<Harmonic>,
}

impl ExogenousSignal {
    pub fn new(constant: DVector<f64>, harmonics: Vec<Harmonic>) -> Result<Self> {
        let nd = constant.len();
        let mut prev = 0.0;
        for h in &harmonics {
            if !(h.omega > prev) || !h.omega.is_finite() {
                return Err(Error::Validation(
                    "harmonic frequencies must be positive and strictly increasing".into(),
                ));
            }
            if h.cos_amp.len() != nd || h.sin_amp.len() != nd {
                return Err(Error::Dimension("harmonic amplitude length differs from n_d".into()));
            }
            prev = h.omega;
        }
        Ok(ExogenousSignal { constant, harmonics })
    }

    pub fn zero(nd: usize) -> Self {
        ExogenousSignal {
            constant: DVector::zeros(nd),
            harmonics: Vec::new(),
        }
    }

    pub fn constant(value: DVector<f64>) -> Self {
        ExogenousSignal {
            constant: value,
            harmonics: Vec::new(),
        }
    }

    pub fn nd(&self) -> usize {
        self.constant.len()
    }

    pub fn constant_part(&self) -> &DVector<f64> {
        &self.constant
    }

    pub fn harmonics(&self) -> &[Harmonic] {
        &self.harmonics
    }

    pub fn max_frequency(&self) -> Option<f64> {
        self.harmonics.last().map(|h| h.omega)
    }

    pub fn value_at(&self, t: f64) -> DVector<f64> {
        let mut v = self.constant.clone();
        for h in &self.harmonics {
            let (s, c) = (h.omega * t).sin_cos();
            v += &h.cos_amp * c + &h.sin_amp * s;
        }
        v
    }

    /// Autonomous generator `(S, W, w0)` with `w' = S w`, `d = W w`,
    /// `w(0) = w0`: one constant state, then a `(sin, cos)` pair per harmonic.
    pub fn generator(&self) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let g = 1 + 2 * self.harmonics.len();
        let mut s = DMatrix::zeros(g, g);
        let mut w = DMatrix::zeros(self.nd(), g);
        let mut w0 = DVector::zeros(g);
        w.set_column(0, &self.constant);
        w0[0] = 1.0;
        for (i, h) in self.harmonics.iter().enumerate() {
            let j = 1 + 2 * i;
            s[(j, j + 1)] = h.omega;
            s[(j + 1, j)] = -h.omega;
            w.set_column(j, &h.sin_amp);
            w.set_column(j + 1, &h.cos_amp);
            w0[j + 1] = 1.0;
        }
        (s, w, w0)
    }

    /// Sum of component amplitudes; an upper bound on `sup |d(t)|`.
    pub fn amplitude_bound(&self) -> f64 {
        self.constant.norm()
            + self
                .harmonics
                .iter()
                .map(|h| h.cos_amp.norm() + h.sin_amp.norm())
                .sum::<f64>()
    }
}

/// Default simulation step for a given signal: `min(0.01, 0.05 / w_max)`.
pub fn default_dt(signal: &ExogenousSignal) -> f64 {
    match signal.max_frequency() {
        Some(w) => (0.05 / w).min(0.01),
        None => 0.01,
    }
}

/// Sampled closed-loop response.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub errors: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn error_norms(&self) -> Vec<f64> {
        self.errors.iter().map(|e| e.norm()).collect()
    }

    pub fn peak_error(&self) -> f64 {
        self.error_norms().into_iter().fold(0.0, f64::max)
    }

    pub fn terminal_error(&self) -> f64 {
        self.errors.last().map_or(0.0, |e| e.norm())
    }

    /// CSV with header `t,e_1..e_r,u_1..u_m`, 12 significant digits.
    pub fn to_csv(&self) -> String {
        let r = self.errors.first().map_or(0, |e| e.len());
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut out = String::from("t");
        for i in 1..=r {
            out.push_str(&format!(",e_{i}"));
        }
        for i in 1..=m {
            out.push_str(&format!(",u_{i}"));
        }
        out.push('\n');
        for k in 0..self.times.len() {
            out.push_str(&fmt_sig(self.times[k]));
            for v in self.errors[k].iter().chain(self.inputs[k].iter()) {
                out.push(',');
                out.push_str(&fmt_sig(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// `C (sI - A)^{-1} B + D`.
pub fn eval_transfer(model: &StateSpaceModel, s: Complex64) -> Result<CMatrix> {
    transfer(model.a(), model.b(), model.c(), model.d(), s)
}

pub(crate) fn transfer(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    s: Complex64,
) -> Result<CMatrix> {
    let n = a.nrows();
    let resolvent = CMatrix::identity(n, n) * s - to_complex(a);
    let lu = resolvent.clone().lu();
    // Relative pivot test: exact eigenvalues give a (near) zero pivot.
    let scale = resolvent.norm().max(f64::MIN_POSITIVE);
    let u = lu.u();
    let min_pivot = (0..n).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-14 * scale {
        return Err(Error::EigenvalueCollision { s });
    }
    let x = lu
        .solve(&to_complex(b))
        .ok_or(Error::EigenvalueCollision { s })?;
    Ok(to_complex(c) * x + to_complex(d))
}

/// Solves `Pi Phi - A Pi = R` (dense Kronecker form).
pub fn sylvester_solve(a: &DMatrix<f64>, phi: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let p = phi.nrows();
    if !a.is_square() || !phi.is_square() || r.shape() != (n, p) {
        return Err(Error::Dimension(format!(
            "Sylvester equation with A {:?}, Phi {:?}, R {:?}",
            a.shape(),
            phi.shape(),
            r.shape()
        )));
    }
    if n * p > KRONECKER_LIMIT {
        return Err(Error::Capacity {
            what: "Sylvester system",
            size: n * p,
            limit: KRONECKER_LIMIT,
        });
    }
    let ea = linalg::eigenvalues(a)?;
    let ep = linalg::eigenvalues(phi)?;
    let scale = 1.0 + a.norm() + phi.norm();
    let gap = ea
        .iter()
        .flat_map(|x| ep.iter().map(move |y| (x - y).norm()))
        .fold(f64::INFINITY, f64::min);
    if gap <= 1e-10 * scale {
        return Err(Error::ResonantSylvester { gap });
    }
    // vec(Pi Phi) = (Phi^T ⊗ I_n) vec Pi, vec(A Pi) = (I_p ⊗ A) vec Pi
    let k = phi.transpose().kronecker(&DMatrix::identity(n, n)) - DMatrix::identity(p, p).kronecker(a);
    let sol = k
        .lu()
        .solve(&vec_cols(r))
        .ok_or(Error::ResonantSylvester { gap })?;
    Ok(unvec(&sol, n, p))
}

/// Plant in feedback with an internal model and static gain `u = -F eta`.
///
/// State is `(x, eta)`; `b_ext`/`d_ext` carry the disturbance `d`, and
/// `b_u` injects an additional plant input (used for loop-at-a-time
/// frequency evaluation).
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopModel {
    pub a: DMatrix<f64>,
    pub b_ext: DMatrix<f64>,
    pub b_u: DMatrix<f64>,
    pub c_err: DMatrix<f64>,
    pub d_ext: DMatrix<f64>,
    pub d_u: DMatrix<f64>,
    pub c_u: DMatrix<f64>,
    pub plant_order: usize,
    pub servo_order: usize,
}

impl ClosedLoopModel {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn spectrum(&self) -> Result<Vec<Complex64>> {
        linalg::eigenvalues(&self.a)
    }

    pub fn abscissa(&self) -> Result<f64> {
        spectral_abscissa(&self.a)
    }

    /// Transfer from an extra plant input to the error output.
    pub fn input_to_error(&self, s: Complex64) -> Result<CMatrix> {
        transfer(&self.a, &self.b_u, &self.c_err, &self.d_u, s)
    }
}

/// Assembles
///
/// ```text
/// [x']   [ A    -B F       ] [x]   [ Bd   ]
/// [η'] = [ G C  Φ - G D F  ] [η] + [ G Dd ] d
/// e    = [ C    -D F       ] [x;η] + Dd d
/// ```
pub fn assemble_closed_loop(
    plant: &StateSpaceModel,
    servo: &ServoCompensator,
    f: &DMatrix<f64>,
) -> Result<ClosedLoopModel> {
    let n = plant.n();
    let m = plant.m();
    let r = plant.r();
    let rq = servo.big_phi().nrows();
    if servo.r() != r {
        return Err(Error::Dimension(format!(
            "servo built for r = {} but plant has r = {r}",
            servo.r()
        )));
    }
    if f.shape() != (m, rq) {
        return Err(Error::Dimension(format!(
            "gain must be {m}x{rq}, got {}x{}",
            f.nrows(),
            f.ncols()
        )));
    }
    let g = servo.big_g();
    let bf = plant.b() * f;
    let df = plant.d() * f;
    let big = n + rq;
    let mut a = DMatrix::zeros(big, big);
    a.view_mut((0, 0), (n, n)).copy_from(plant.a());
    a.view_mut((0, n), (n, rq)).copy_from(&(-&bf));
    a.view_mut((n, 0), (rq, n)).copy_from(&(g * plant.c()));
    a.view_mut((n, n), (rq, rq)).copy_from(&(servo.big_phi() - g * &df));

    let nd = plant.nd();
    let mut b_ext = DMatrix::zeros(big, nd);
    b_ext.view_mut((0, 0), (n, nd)).copy_from(plant.bd());
    b_ext.view_mut((n, 0), (rq, nd)).copy_from(&(g * plant.dd()));

    let mut b_u = DMatrix::zeros(big, m);
    b_u.view_mut((0, 0), (n, m)).copy_from(plant.b());
    b_u.view_mut((n, 0), (rq, m)).copy_from(&(g * plant.d()));

    let mut c_err = DMatrix::zeros(r, big);
    c_err.view_mut((0, 0), (r, n)).copy_from(plant.c());
    c_err.view_mut((0, n), (r, rq)).copy_from(&(-&df));

    let mut c_u = DMatrix::zeros(m, big);
    c_u.view_mut((0, n), (m, rq)).copy_from(&(-f));

    Ok(ClosedLoopModel {
        a,
        b_ext,
        b_u,
        c_err,
        d_ext: plant.dd().clone(),
        d_u: plant.d().clone(),
        c_u,
        plant_order: n,
        servo_order: rq,
    })
}

/// Exact zero-order-hold discretization `(e^{A dt}, ∫_0^dt e^{As} ds B)`.
pub fn zoh(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let k = b.ncols();
    let mut aug = DMatrix::zeros(n + k, n + k);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    aug.view_mut((0, n), (n, k)).copy_from(&(b * dt));
    let e = aug.exp();
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, k)).into_owned(),
    )
}

/// Fixed-step simulation sampled at `t = k dt`. The exogenous signal is
/// generated by its own autonomous model appended to the loop state, so the
/// samples are exact for any step size.
pub fn simulate(
    cl: &ClosedLoopModel,
    d: &ExogenousSignal,
    x0: &DVector<f64>,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    if !(horizon >= dt) {
        return Err(Error::Config(format!("horizon {horizon} shorter than step {dt}")));
    }
    if x0.len() != cl.order() {
        return Err(Error::Dimension(format!(
            "initial state has length {} but loop order is {}",
            x0.len(),
            cl.order()
        )));
    }
    if d.nd() != cl.b_ext.ncols() {
        return Err(Error::Dimension(format!(
            "signal has {} channels but loop expects {}",
            d.nd(),
            cl.b_ext.ncols()
        )));
    }
    let n = cl.order();
    let (s_gen, w_gen, w0) = d.generator();
    let g = s_gen.nrows();
    let mut aug = DMatrix::zeros(n + g, n + g);
    aug.view_mut((0, 0), (n, n)).copy_from(&cl.a);
    aug.view_mut((0, n), (n, g)).copy_from(&(&cl.b_ext * &w_gen));
    aug.view_mut((n, n), (g, g)).copy_from(&s_gen);
    let step = (aug * dt).exp();
    let c_aug = {
        let mut c = DMatrix::zeros(cl.c_err.nrows(), n + g);
        c.view_mut((0, 0), (cl.c_err.nrows(), n)).copy_from(&cl.c_err);
        c.view_mut((0, n), (cl.c_err.nrows(), g)).copy_from(&(&cl.d_ext * &w_gen));
        c
    };
    let steps = (horizon / dt + 1e-9).floor() as usize;
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps + 1),
        errors: Vec::with_capacity(steps + 1),
    };
    let mut z = DVector::zeros(n + g);
    z.rows_mut(0, n).copy_from(x0);
    z.rows_mut(n, g).copy_from(&w0);
    for k in 0..=steps {
        let t = k as f64 * dt;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: t });
        }
        let x = z.rows(0, n).into_owned();
        traj.times.push(t);
        traj.errors.push(&c_aug * &z);
        traj.inputs.push(&cl.c_u * &x);
        traj.states.push(x);
        z = &step * &z;
    }
    Ok(traj)
}
