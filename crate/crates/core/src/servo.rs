//! Internal-model construction from an exosystem frequency list.
//!
//! Blocks are ordered constant-first, then by ascending frequency:
//!
//! ```text
//! phi = blkdiag(0, phi_1, ..., phi_l),  phi_k = [[0, 1], [-w_k^2, 0]]
//! g   = col(1, [0; 1], ..., [0; 1])
//! Phi = phi ⊗ I_r,  G = g ⊗ I_r
//! ```

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Relative gap below which two frequencies count as coincident.
pub const FREQUENCY_GAP_RTOL: f64 = 1e-9;

/// Exosystem described by the distinct harmonic frequencies of its
/// minimal polynomial `s (s^2 + w_1^2) ... (s^2 + w_l^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Exosystem {
    frequencies: Vec<f64>,
}

impl Exosystem {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        for (i, &w) in frequencies.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::Validation(format!("frequency {w} at position {i} is not positive")));
            }
            if i > 0 {
                let prev = frequencies[i - 1];
                if w - prev <= FREQUENCY_GAP_RTOL * w.max(1.0) {
                    return Err(Error::Validation(format!(
                        "frequencies must be strictly increasing: {prev} then {w}"
                    )));
                }
            }
        }
        Ok(Exosystem { frequencies })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Number of harmonic frequencies.
    pub fn harmonic_count(&self) -> usize {
        self.frequencies.len()
    }

    /// Order of the minimal polynomial, `2 l + 1`.
    pub fn q(&self) -> usize {
        2 * self.frequencies.len() + 1
    }

    /// Roots `0, j w_1, -j w_1, ...` of the minimal polynomial.
    pub fn roots(&self) -> Vec<Complex64> {
        let mut roots = vec![Complex64::new(0.0, 0.0)];
        for &w in &self.frequencies {
            roots.push(Complex64::new(0.0, w));
            roots.push(Complex64::new(0.0, -w));
        }
        roots
    }

    /// Minimal polynomial coefficients, highest degree first.
    pub fn minimal_polynomial(&self) -> Vec<f64> {
        self.frequencies
            .iter()
            .fold(vec![1.0, 0.0], |acc, &w| linalg::poly_mul(&acc, &[1.0, 0.0, w * w]))
    }
}

pub fn build_exosystem(frequencies: &[f64]) -> Result<Exosystem> {
    Exosystem::new(frequencies.to_vec())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServoCompensator {
    phi: DMatrix<f64>,
    g: DVector<f64>,
    r: usize,
    big_phi: DMatrix<f64>,
    big_g: DMatrix<f64>,
}

impl ServoCompensator {
    pub fn new(exo: &Exosystem, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::Validation("error dimension r must be at least 1".into()));
        }
        let q = exo.q();
        let mut phi = DMatrix::zeros(q, q);
        let mut g = DVector::zeros(q);
        g[0] = 1.0;
        for (k, &w) in exo.frequencies().iter().enumerate() {
            let j = 1 + 2 * k;
            phi[(j, j + 1)] = 1.0;
            phi[(j + 1, j)] = -w * w;
            g[j + 1] = 1.0;
        }
        let eye = DMatrix::identity(r, r);
        let big_phi = phi.kronecker(&eye);
        let big_g = DMatrix::from_column_slice(q, 1, g.as_slice()).kronecker(&eye);
        Ok(ServoCompensator {
            phi,
            g,
            r,
            big_phi,
            big_g,
        })
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }
    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }
    pub fn r(&self) -> usize {
        self.r
    }
    pub fn q(&self) -> usize {
        self.phi.nrows()
    }
    /// `phi ⊗ I_r`
    pub fn big_phi(&self) -> &DMatrix<f64> {
        &self.big_phi
    }
    /// `g ⊗ I_r`
    pub fn big_g(&self) -> &DMatrix<f64> {
        &self.big_g
    }

    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        controllability_matrix(&self.phi, &self.g)
    }
}

pub fn build_servocompensator(exo: &Exosystem, r: usize) -> Result<ServoCompensator> {
    ServoCompensator::new(exo, r)
}

/// `[g, phi g, ..., phi^{q-1} g]`
pub fn controllability_matrix(phi: &DMatrix<f64>, g: &DVector<f64>) -> DMatrix<f64> {
    let q = phi.nrows();
    let mut out = DMatrix::zeros(q, q);
    let mut col = g.clone();
    for i in 0..q {
        out.set_column(i, &col);
        col = phi * col;
    }
    out
}

/// Eigen-structure of `phi`: upper-half-plane eigenvalues `0, j w_k` with
/// right/left eigenvectors normalized so that `w_k v_k = 1`, and rank-one
/// projectors `X_k = v_k w_k`. Conjugate data is obtained with `conj`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralData {
    eigenvalues: Vec<Complex64>,
    right: Vec<DVector<Complex64>>,
    left: Vec<RowDVector<Complex64>>,
    projectors: Vec<CMatrix>,
}

impl SpectralData {
    pub fn new(exo: &Exosystem) -> Self {
        let q = exo.q();
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);

        let mut v0 = DVector::from_element(q, zero);
        v0[0] = one;
        let mut w0 = RowDVector::from_element(q, zero);
        w0[0] = one;

        let mut eigenvalues = vec![zero];
        let mut right = vec![v0];
        let mut left = vec![w0];
        for (k, &w) in exo.frequencies().iter().enumerate() {
            let j = 1 + 2 * k;
            let mut v = DVector::from_element(q, zero);
            v[j] = one;
            v[j + 1] = Complex64::new(0.0, w);
            let mut l = RowDVector::from_element(q, zero);
            l[j] = Complex64::new(0.5, 0.0);
            l[j + 1] = Complex64::new(0.0, -0.5 / w);
            eigenvalues.push(Complex64::new(0.0, w));
            right.push(v);
            left.push(l);
        }
        let projectors = right.iter().zip(&left).map(|(v, w)| v * w).collect();
        SpectralData {
            eigenvalues,
            right,
            left,
            projectors,
        }
    }

    /// Number of stored modes, `l + 1`.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn q(&self) -> usize {
        self.right[0].len()
    }

    pub fn eigenvalue(&self, k: usize) -> Complex64 {
        self.eigenvalues[k]
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn right(&self, k: usize) -> &DVector<Complex64> {
        &self.right[k]
    }

    pub fn left(&self, k: usize) -> &RowDVector<Complex64> {
        &self.left[k]
    }

    pub fn projector(&self, k: usize) -> &CMatrix {
        &self.projectors[k]
    }

    /// `X_k ⊗ I_r`
    pub fn lifted(&self, k: usize, r: usize) -> CMatrix {
        self.projectors[k].kronecker(&CMatrix::identity(r, r))
    }
}

pub fn spectral_projectors(exo: &Exosystem) -> SpectralData {
    SpectralData::new(exo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn constant_only_exosystem() {
        let exo = Exosystem::new(vec![]).unwrap();
        assert_eq!(exo.q(), 1);
        assert_eq!(exo.roots(), vec![c(0.0, 0.0)]);
        let servo = ServoCompensator::new(&exo, 2).unwrap();
        assert_eq!(servo.big_phi(), &DMatrix::<f64>::zeros(2, 2));
        assert_eq!(servo.big_g(), &DMatrix::<f64>::identity(2, 2));
        let spec = SpectralData::new(&exo);
        assert_eq!(spec.projector(0), &CMatrix::identity(1, 1));
    }

    #[test]
    fn four_tank_exosystem_polynomial() {
        let exo = Exosystem::new(vec![0.01, 0.1]).unwrap();
        assert_eq!(exo.q(), 5);
        // s (s^2 + 1e-4)(s^2 + 1e-2) = s^5 + 0.0101 s^3 + 1e-6 s
        let p = exo.minimal_polynomial();
        let expected = [1.0, 0.0, 0.0101, 0.0, 1e-6, 0.0];
        for (a, b) in p.iter().zip(expected.iter()) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1e-6));
        }
    }

    #[test]
    fn ordering_is_validated() {
        assert!(matches!(Exosystem::new(vec![0.1, 0.01]), Err(Error::Validation(_))));
        assert!(matches!(Exosystem::new(vec![1.0, 1.0]), Err(Error::Validation(_))));
        assert!(matches!(Exosystem::new(vec![1.0, 1.0 + 1e-10]), Err(Error::Validation(_))));
        assert!(matches!(Exosystem::new(vec![0.0]), Err(Error::Validation(_))));
        assert!(matches!(Exosystem::new(vec![-1.0]), Err(Error::Validation(_))));
        assert!(Exosystem::new(vec![1.0, 1.0 + 1e-8]).is_ok());
    }

    #[test]
    fn single_harmonic_blocks() {
        let exo = Exosystem::new(vec![2.0]).unwrap();
        let servo = ServoCompensator::new(&exo, 1).unwrap();
        let phi = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -4.0, 0.0]);
        assert_eq!(servo.phi(), &phi);
        assert_eq!(servo.g().as_slice(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn lifted_dimensions() {
        let exo = Exosystem::new(vec![0.01, 0.1]).unwrap();
        let servo = ServoCompensator::new(&exo, 2).unwrap();
        assert_eq!(servo.big_phi().shape(), (10, 10));
        assert_eq!(servo.big_g().shape(), (10, 2));
        assert_eq!(SpectralData::new(&exo).lifted(2, 2).shape(), (10, 10));
    }

    #[test]
    fn rejects_zero_error_dimension() {
        let exo = Exosystem::new(vec![]).unwrap();
        assert!(ServoCompensator::new(&exo, 0).is_err());
    }

    #[test]
    fn unit_frequency_projector() {
        let spec = SpectralData::new(&Exosystem::new(vec![1.0]).unwrap());
        let x = spec.projector(1);
        let block = x.view((1, 1), (2, 2));
        let expected = [[c(0.5, 0.0), c(0.0, -0.5)], [c(0.0, 0.5), c(0.5, 0.0)]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((block[(i, j)] - expected[i][j]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn eigenvector_equations_hold() {
        let exo = Exosystem::new(vec![0.3, 1.7, 4.0]).unwrap();
        let servo = ServoCompensator::new(&exo, 1).unwrap();
        let spec = SpectralData::new(&exo);
        let phi = linalg::to_complex(servo.phi());
        for k in 0..spec.len() {
            let lam = spec.eigenvalue(k);
            assert!((&phi * spec.right(k) - spec.right(k) * lam).norm() < 1e-12);
            assert!((spec.left(k) * &phi - spec.left(k) * lam).norm() < 1e-12);
        }
    }
}
