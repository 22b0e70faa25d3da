//! Dense real-symmetric matrices and the spectral primitives built on them.
//!
//! A [`HermitianMatrix`] stores all `n * n` entries row-major and is exactly
//! symmetric: every constructor either mirrors an upper triangle, checks
//! exact symmetry, or (for floating point input) symmetrises within a
//! relative tolerance of `1e-12` and rejects anything further off.
//!
//! The eigendecomposition is the single backend for matrix functions,
//! `φ(|M|)` and Cauchy transforms.

use num_complex::Complex;
use num_traits::{Float, Zero};

use crate::eigen::tridiagonal_ql;
use crate::error::{Error, Result};
use crate::scalar::{lit, Real, Scalar};

/// Relative asymmetry accepted (and removed) by the floating constructors.
pub const SYMMETRIZE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix<T> {
    n: usize,
    data: Vec<T>,
}

/// General square matrix, used for products that are not symmetric on their
/// own (for example `A * B` or one half of a two-term diffusion).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

/// Eigenvalues in ascending order plus the orthogonal basis whose columns
/// are the corresponding eigenvectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition<T> {
    pub eigenvalues: Vec<T>,
    pub basis: DenseMatrix<T>,
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidArgument("matrix dimension must be positive".into()))
    } else {
        Ok(())
    }
}

fn from_usize<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("dimension representable in scalar type")
}

impl<T: Scalar> HermitianMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, T::one())
    }

    pub fn scaled_identity(n: usize, c: T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = c.clone();
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = d.clone();
        }
        m
    }

    /// Builds the matrix from its upper triangle: `f(i, j)` is called once
    /// for each `i <= j` and mirrored below the diagonal.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                let x = f(i, j);
                if i != j {
                    data[j * n + i] = x.clone();
                }
                data[i * n + j] = x;
            }
        }
        Self { n, data }
    }

    /// Entries for in-place updates that keep the matrix symmetric.
    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Row-major input that must already be exactly symmetric.
    pub fn new_exact(n: usize, data: Vec<T>) -> Result<Self> {
        check_dim(n)?;
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::NotSymmetric {
                        asymmetry: f64::NAN,
                        tolerance: 0.0,
                    });
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i).clone()).collect()
    }

    pub fn trace(&self) -> T {
        (0..self.n).fold(T::zero(), |acc, i| acc + self.get(i, i).clone())
    }

    /// `tr(M) / n`, the matrix-level trace state `φ`.
    pub fn normalized_trace(&self) -> T {
        self.trace() / from_usize(self.n)
    }

    fn same_dim(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            })
        } else {
            Ok(())
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.clone() + b.clone())
            .collect();
        Ok(Self { n: self.n, data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.clone() - b.clone())
            .collect();
        Ok(Self { n: self.n, data })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_dim(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = a.clone() + b.clone();
        }
        Ok(())
    }

    pub fn scaled(&self, c: &T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|x| c.clone() * x.clone()).collect(),
        }
    }

    /// Ordinary matrix product; symmetric only if the factors commute.
    pub fn matmul(&self, other: &Self) -> Result<DenseMatrix<T>> {
        self.same_dim(other)?;
        Ok(DenseMatrix::from(self.clone()).matmul(&DenseMatrix::from(other.clone())))
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        DenseMatrix {
            n: self.n,
            data: self.data.clone(),
        }
    }
}

impl<T: Scalar> From<HermitianMatrix<T>> for DenseMatrix<T> {
    fn from(m: HermitianMatrix<T>) -> Self {
        DenseMatrix {
            n: m.n,
            data: m.data,
        }
    }
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn from_row_major(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(self.data[j * n + i].clone());
            }
        }
        Self { n, data }
    }

    pub fn trace(&self) -> T {
        (0..self.n).fold(T::zero(), |acc, i| acc + self.get(i, i).clone())
    }

    pub fn normalized_trace(&self) -> T {
        self.trace() / from_usize(self.n)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "matmul dimension mismatch");
        let n = self.n;
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            let row = &mut out[i * n..(i + 1) * n];
            for k in 0..n {
                let a = &self.data[i * n + k];
                if a.is_zero() {
                    continue;
                }
                let other_row = &other.data[k * n..(k + 1) * n];
                for (o, b) in row.iter_mut().zip(other_row) {
                    *o = o.clone() + a.clone() * b.clone();
                }
            }
        }
        Self { n, data: out }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.n, other.n, "add dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = a.clone() + b.clone();
        }
    }

    pub fn scale_in_place(&mut self, c: &T) {
        for x in self.data.iter_mut() {
            *x = c.clone() * x.clone();
        }
    }

    /// Exact symmetry required; for rational or otherwise exact arithmetic.
    pub fn into_hermitian_exact(self) -> Result<HermitianMatrix<T>> {
        HermitianMatrix::new_exact(self.n, self.data)
    }
}

impl<T: Real> DenseMatrix<T> {
    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    /// `max |m_ij - m_ji|`.
    pub fn max_asymmetry(&self) -> T {
        let n = self.n;
        let mut worst = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max(Float::abs(self.data[i * n + j] - self.data[j * n + i]));
            }
        }
        worst
    }

    /// Replaces the matrix by `(M + Mᵀ)/2` when its asymmetry is at most
    /// `rel_tol * ‖M‖_F`, otherwise fails with [`Error::NotSymmetric`].
    pub fn symmetrize(self, rel_tol: T) -> Result<HermitianMatrix<T>> {
        let asym = self.max_asymmetry();
        let tol = rel_tol * self.frobenius_norm();
        if !(asym <= tol) {
            return Err(Error::NotSymmetric {
                asymmetry: asym.to_f64_lossy(),
                tolerance: tol.to_f64_lossy(),
            });
        }
        let n = self.n;
        let half = lit::<T>(0.5);
        Ok(HermitianMatrix::from_upper_fn(n, |i, j| {
            if i == j {
                self.data[i * n + i]
            } else {
                (self.data[i * n + j] + self.data[j * n + i]) * half
            }
        }))
    }
}

impl<T: Real> HermitianMatrix<T> {
    /// Row-major floating input under the symmetrisation policy.
    pub fn new(n: usize, data: Vec<T>) -> Result<Self> {
        check_dim(n)?;
        DenseMatrix::from_row_major(n, data)?.symmetrize(lit(SYMMETRIZE_TOLERANCE))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn symmetric_eig(&self) -> Result<SpectralDecomposition<T>> {
        let (eigenvalues, basis) = tridiagonal_ql(self.n, &self.data, true)?;
        Ok(SpectralDecomposition {
            eigenvalues,
            basis: DenseMatrix {
                n: self.n,
                data: basis.expect("vectors requested"),
            },
        })
    }

    /// Ascending eigenvalues without the eigenvector accumulation.
    pub fn eigenvalues(&self) -> Result<Vec<T>> {
        tridiagonal_ql(self.n, &self.data, false).map(|(values, _)| values)
    }

    /// `f(M)` by functional calculus. A non-finite `f(λ)` is reported as
    /// [`Error::DomainError`].
    pub fn matrix_function(&self, f: impl Fn(T) -> T) -> Result<Self> {
        self.symmetric_eig()?.map_eigenvalues(f)
    }

    /// `√M⁺`: negative eigenvalues are clamped to zero first. Returns the
    /// root and the number of clamped eigenvalues.
    pub fn sqrt_psd(&self) -> Result<(Self, usize)> {
        let decomposition = self.symmetric_eig()?;
        let clamped = decomposition
            .eigenvalues
            .iter()
            .filter(|&&l| l < T::zero())
            .count();
        let root = decomposition.map_eigenvalues(|l| l.max(T::zero()).sqrt())?;
        Ok((root, clamped))
    }

    /// `φ(|M|) = Σ|λᵢ| / n`.
    pub fn abs_trace(&self) -> Result<T> {
        let values = self.eigenvalues()?;
        let n = lit::<T>(self.n as f64);
        Ok(values.iter().map(|&l| Float::abs(l)).sum::<T>() / n)
    }

    /// `G(z) = φ((M - z)⁻¹)`, evaluated on the spectrum.
    pub fn cauchy_transform(&self, z: Complex<T>) -> Result<Complex<T>> {
        check_upper_half_plane(z)?;
        Ok(cauchy_transform_of_spectrum(&self.eigenvalues()?, z))
    }
}

impl<T: Real> SpectralDecomposition<T> {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `basis · diag(f(λ)) · basisᵀ`, assembled from the upper triangle so the
    /// result is exactly symmetric.
    pub fn map_eigenvalues(&self, f: impl Fn(T) -> T) -> Result<HermitianMatrix<T>> {
        let mapped: Vec<T> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        if let Some(pos) = mapped.iter().position(|x| !x.is_finite()) {
            return Err(Error::DomainError {
                eigenvalue: self.eigenvalues[pos].to_f64_lossy(),
            });
        }
        let n = self.n();
        let v = &self.basis.data;
        // Scale columns once: w_ik = v_ik * f_k.
        let mut weighted = v.clone();
        for i in 0..n {
            for k in 0..n {
                weighted[i * n + k] = weighted[i * n + k] * mapped[k];
            }
        }
        Ok(HermitianMatrix::from_upper_fn(n, |i, j| {
            let wi = &weighted[i * n..(i + 1) * n];
            let vj = &v[j * n..(j + 1) * n];
            wi.iter().zip(vj).map(|(&a, &b)| a * b).sum()
        }))
    }

    pub fn reconstruct(&self) -> Result<HermitianMatrix<T>> {
        self.map_eigenvalues(|l| l)
    }
}

pub(crate) fn check_upper_half_plane<T: Real>(z: Complex<T>) -> Result<()> {
    if z.im > T::zero() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "Cauchy transform needs Im z > 0, got {}",
            z.im
        )))
    }
}

/// `(1/n) Σ 1/(λᵢ - z)` for a list of eigenvalues.
pub fn cauchy_transform_of_spectrum<T: Real>(eigenvalues: &[T], z: Complex<T>) -> Complex<T> {
    if eigenvalues.is_empty() {
        return Complex::zero();
    }
    let sum = eigenvalues
        .iter()
        .fold(Complex::zero(), |acc: Complex<T>, &l| {
            acc + (Complex::new(l, T::zero()) - z).inv()
        });
    sum / lit::<T>(eigenvalues.len() as f64)
}

pub fn normalized_trace<T: Scalar>(m: &HermitianMatrix<T>) -> T {
    m.normalized_trace()
}

pub fn symmetric_eig<T: Real>(m: &HermitianMatrix<T>) -> Result<SpectralDecomposition<T>> {
    m.symmetric_eig()
}

pub fn matrix_function<T: Real>(
    m: &HermitianMatrix<T>,
    f: impl Fn(T) -> T,
) -> Result<HermitianMatrix<T>> {
    m.matrix_function(f)
}

pub fn abs_trace<T: Real>(m: &HermitianMatrix<T>) -> Result<T> {
    m.abs_trace()
}

pub fn cauchy_transform<T: Real>(m: &HermitianMatrix<T>, z: Complex<T>) -> Result<Complex<T>> {
    m.cauchy_transform(z)
}
