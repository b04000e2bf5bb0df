//! Dense linear-algebra helpers shared by the design and analysis modules.
//!
//! Vectorization is column-wise throughout, which is also nalgebra's storage
//! order, so `vec(F)` is just the matrix's backing slice.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const SCHUR_MAX_ITER: usize = 100_000;

/// Largest Kronecker-vectorized system solved densely.
pub const KRONECKER_LIMIT: usize = 4000;

/// All eigenvalues of a real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigenvalues of a non-square {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigensolver("matrix has non-finite entries".into()));
    }
    if let Some(schur) = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER) {
        return Ok(schur.complex_eigenvalues().iter().copied().collect());
    }
    // The unshifted-restart QR can stall on exactly repeated eigenvalues
    // (Kronecker-structured matrices). Retry on an orthogonally similar
    // matrix, then with progressively looser deflation.
    let h = householder(m.nrows());
    let rotated = &h * m * &h;
    for eps in [f64::EPSILON, 1e-15, 1e-14, 1e-13] {
        if let Some(schur) = Schur::try_new(rotated.clone(), eps, SCHUR_MAX_ITER) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(Error::Eigensolver(format!("Schur iteration did not converge (n = {})", m.nrows())))
}

/// Fixed symmetric orthogonal reflector `I - 2 u u^T / |u|^2`.
fn householder(n: usize) -> DMatrix<f64> {
    let u = DVector::from_fn(n, |i, _| 1.0 + 0.37 * (i as f64 + 1.0).sqrt());
    DMatrix::identity(n, n) - &u * u.transpose() * (2.0 / u.norm_squared())
}

/// Maximum real part over the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    let eig = eigenvalues(m)?;
    if eig.is_empty() {
        return Err(Error::Dimension("spectral abscissa of an empty matrix".into()));
    }
    Ok(eig.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn singular_values_complex(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values strictly above `threshold`.
pub fn rank_above(sv: &[f64], threshold: f64) -> usize {
    sv.iter().filter(|&&s| s > threshold).count()
}

/// Moore-Penrose pseudoinverse with singular values at or below
/// `rtol * sigma_max` treated as zero.
pub fn pinv(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut out = DMatrix::zeros(cols, rows);
    if smax == 0.0 {
        return out;
    }
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > rtol * smax {
            out += v_t.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    out
}

/// Column-wise vectorization.
pub fn vec_cols<T: nalgebra::Scalar>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_cols`].
pub fn unvec<T: nalgebra::Scalar>(v: &DVector<T>, rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn real_part(m: &CMatrix) -> DMatrix<f64> {
    m.map(|v| v.re)
}

pub fn imag_part(m: &CMatrix) -> DMatrix<f64> {
    m.map(|v| v.im)
}

pub fn conj(m: &CMatrix) -> CMatrix {
    m.map(|v| v.conj())
}

/// Pairs two spectra greedily by distance and returns the largest pairing
/// error, or `None` when the sizes differ.
pub fn match_spectra(a: &[Complex64], b: &[Complex64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for (d, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            worst = worst.max(d);
        }
    }
    Some(worst)
}

/// Solves `A^T P + P A = -Q` for `P` by Kronecker vectorization.
pub fn lyapunov_solve(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Lyapunov equation with A {:?} and Q {:?}",
            a.shape(),
            q.shape()
        )));
    }
    if n * n > KRONECKER_LIMIT {
        return Err(Error::Capacity {
            what: "Lyapunov system",
            size: n * n,
            limit: KRONECKER_LIMIT,
        });
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    // vec(A^T P) = (I ⊗ A^T) vec P, vec(P A) = (A^T ⊗ I) vec P
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -vec_cols(q);
    let lu = k.clone().lu();
    let mut sol = lu.solve(&rhs).ok_or(Error::NotHurwitz { abscissa: f64::NAN })?;
    // one step of iterative refinement
    if let Some(corr) = lu.solve(&(&rhs - &k * &sol)) {
        sol += corr;
    }
    let p = unvec(&sol, n, n);
    Ok((&p + p.transpose()) * 0.5)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Monic polynomial coefficients (highest degree first) from its roots.
/// Conjugate pairs must both be present for the result to be real.
pub fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &root in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * root;
        }
        coeffs = next;
    }
    coeffs
}

/// Multiplies two real polynomials (highest degree first).
pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Horizontal concatenation of real matrices sharing a row count.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Block-diagonal concatenation of square real matrices.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let m: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, m);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), b.shape()).copy_from(b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

/// Row-major nested rows to a matrix; every row must share one length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
