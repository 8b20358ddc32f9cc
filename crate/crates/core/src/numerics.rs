//! Dense complex matrices and the few linear-algebra routines the rest of the
//! crate relies on: unitary DFT matrices, cyclic shifts, Hermitian eigenvalues
//! and a unitary FFT wrapper for the fast transmit chains.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Index, IndexMut};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Relative rank threshold applied to Hermitian eigenvalues.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;

/// Entrywise tolerance used when checking that an input is Hermitian.
pub const HERMITIAN_TOLERANCE: f64 = 1e-9;

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(size: usize) -> Self {
        Self::from_fn(size, size, |r, c| {
            if r == c {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidLength {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Stacks equal-length columns side by side.
    pub fn from_columns(columns: &[Vec<Complex64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(Error::InvalidLength {
                expected: rows,
                actual: bad.len(),
            });
        }
        Ok(Self::from_fn(rows, columns.len(), |r, c| columns[c][r]))
    }

    pub fn diagonal(entries: &[Complex64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn mul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::InvalidDimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..rhs.cols {
                    out[(r, c)] += a * rhs[(k, c)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.cols != x.len() {
            return Err(Error::InvalidDimension(format!(
                "cannot apply {}x{} matrix to a vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::InvalidDimension(format!(
                "cannot subtract {}x{} from {}x{}",
                rhs.rows, rhs.cols, self.rows, self.cols
            )));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, factor: Complex64) -> ComplexMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest entrywise magnitude of `self - rhs`.
    pub fn max_abs_diff(&self, rhs: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tolerance: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|r| {
                (r..self.cols).all(|c| (self[(r, c)] - self[(c, r)].conj()).norm() <= tolerance)
            })
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| {
                    let v = self[(r, c)];
                    format!("{:+.4}{:+.4}j", v.re, v.im)
                })
                .collect();
            writeln!(f, "  {}", row.join(", "))?;
        }
        write!(f, "]")
    }
}

/// Unitary DFT matrix, entry (k, n) = exp(-j2πkn/size)/√size, conjugated when
/// `inverse` is set.
pub fn dft_matrix(size: usize, inverse: bool) -> Result<ComplexMatrix> {
    if size == 0 {
        return Err(Error::InvalidDimension("DFT size must be at least 1".into()));
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let scale = 1.0 / (size as f64).sqrt();
    Ok(ComplexMatrix::from_fn(size, size, |k, n| {
        // reduce k*n mod size first so the phase stays small and exact
        let kn = (k * n) % size;
        Complex64::from_polar(scale, sign * 2.0 * PI * kn as f64 / size as f64)
    }))
}

/// Permutation matrix of the forward cyclic shift: `(Π^delay x)[n] = x[(n - delay) mod size]`.
pub fn circular_shift_matrix(size: usize, delay: usize) -> Result<ComplexMatrix> {
    if delay >= size {
        return Err(Error::InvalidArgument(format!(
            "cyclic shift {delay} must be smaller than size {size}"
        )));
    }
    Ok(ComplexMatrix::from_fn(size, size, |r, c| {
        if (c + delay) % size == r {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// Eigenvalues of a Hermitian matrix with a tolerance-based rank.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    /// Sorted in descending order.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    pub tolerance: f64,
}

impl EigenResult {
    /// The eigenvalues counted by `rank` (the leading ones).
    pub fn nonzero(&self) -> &[f64] {
        &self.eigenvalues[..self.rank]
    }

    /// Whether no eigenvalue falls below `-tolerance * max(λ_max, 1)`.
    pub fn is_positive_semidefinite(&self) -> bool {
        let floor = self.tolerance * self.scale();
        self.eigenvalues.iter().all(|&l| l >= -floor)
    }

    fn scale(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0).max(1.0)
    }
}

/// Eigenvalues of a Hermitian matrix.
///
/// The n×n complex problem is embedded in the 2n×2n real symmetric matrix
/// `[[Re A, -Im A], [Im A, Re A]]`, whose spectrum is that of `A` with every
/// eigenvalue doubled, and solved with cyclic Jacobi rotations.
pub fn hermitian_eigen(m: &ComplexMatrix, tolerance: f64) -> Result<EigenResult> {
    if !m.is_square() {
        return Err(Error::InvalidInput(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_hermitian(HERMITIAN_TOLERANCE) {
        return Err(Error::InvalidInput("matrix is not Hermitian".into()));
    }
    let n = m.rows();
    let dim = 2 * n;
    let mut a = vec![0.0; dim * dim];
    for r in 0..n {
        for c in 0..n {
            // symmetrize so rounding noise in the input cannot break the solver
            let v = 0.5 * (m[(r, c)] + m[(c, r)].conj());
            a[r * dim + c] = v.re;
            a[(r + n) * dim + (c + n)] = v.re;
            a[r * dim + (c + n)] = -v.im;
            a[(r + n) * dim + c] = v.im;
        }
    }
    jacobi_eigenvalues(&mut a, dim);
    let mut doubled: Vec<f64> = (0..dim).map(|i| a[i * dim + i]).collect();
    doubled.sort_by(|x, y| y.total_cmp(x));
    let eigenvalues: Vec<f64> = doubled
        .chunks(2)
        .map(|pair| 0.5 * (pair[0] + pair[1]))
        .collect();

    let threshold = tolerance * eigenvalues.first().copied().unwrap_or(0.0).max(1.0);
    let rank = eigenvalues.iter().filter(|&&l| l > threshold).count();
    Ok(EigenResult {
        eigenvalues,
        rank,
        tolerance,
    })
}

/// Cyclic Jacobi sweeps on a dense real symmetric matrix; leaves the
/// eigenvalues on the diagonal.
fn jacobi_eigenvalues(a: &mut [f64], n: usize) {
    const MAX_SWEEPS: usize = 100;
    let total: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if total == 0.0 {
        return;
    }
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total {
            return;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
}

/// Squared Euclidean norm.
pub fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(Complex64::norm_sqr).sum()
}

/// Unitary forward/inverse FFT of a fixed size.
#[derive(Clone)]
pub struct UnitaryFft {
    size: usize,
    scale: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl UnitaryFft {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidDimension("FFT size must be at least 1".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            size,
            scale: 1.0 / (size as f64).sqrt(),
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.size);
        self.forward.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.size);
        self.inverse.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }
}

impl fmt::Debug for UnitaryFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UnitaryFft").field("size", &self.size).finish()
    }
}
