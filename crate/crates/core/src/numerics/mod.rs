//! Dense linear algebra, Gaussian sampling and projectors.
//!
//! Everything here works on small dense problems (p up to a few dozen), so
//! the routines favour clarity and exactness over blocking or sparsity.

mod quad;
mod rng;
mod special;

use nalgebra::{Cholesky, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub use quad::integrate;
pub use rng::{RngStream, StreamRng, RNG_ALGORITHM};
pub use special::{normal_cdf, normal_pdf, normal_quantile};

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

const SYMMETRY_TOL: f64 = 1e-12;

/// A symmetric positive definite matrix.
///
/// Construction checks symmetry (relative to the largest entry) and that a
/// Cholesky factorization exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SpdMatrix(Matrix);

impl SpdMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if !is_symmetric(&m) || m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        if Cholesky::new(m.clone()).is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(SpdMatrix(m))
    }

    pub fn identity(p: usize) -> Self {
        SpdMatrix(Matrix::identity(p, p))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diagonal(&Vector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.0 * c)
    }
}

impl AsRef<Matrix> for SpdMatrix {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

impl TryFrom<Vec<Vec<f64>>> for SpdMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let p = rows.len();
        for r in &rows {
            check_dim(p, r.len())?;
        }
        SpdMatrix::new(Matrix::from_fn(p, p, |i, j| rows[i][j]))
    }
}

impl From<SpdMatrix> for Vec<Vec<f64>> {
    fn from(m: SpdMatrix) -> Self {
        m.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

/// Serde adapter that writes a [`Vector`] as a plain JSON array.
pub mod serde_vector {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vector, D::Error> {
        let raw = Vec::<f64>::deserialize(d)?;
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(serde::de::Error::custom("vector entries must be finite"));
        }
        Ok(Vector::from_vec(raw))
    }
}

pub(crate) fn is_symmetric(m: &Matrix) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= SYMMETRY_TOL * scale))
}

pub(crate) fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = m`.
pub fn cholesky(m: &SpdMatrix) -> Result<Matrix> {
    Cholesky::new(m.0.clone())
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite)
}

/// Symmetric square root `S` with `S S = m`.
pub fn symmetric_sqrt(m: &SpdMatrix) -> Result<SpdMatrix> {
    let eig = SymmetricEigen::new(m.0.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let d = eig.eigenvalues.map(f64::sqrt);
    let s = &eig.eigenvectors * Matrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    Ok(SpdMatrix(symmetrize(&s)))
}

/// Inverse of the symmetric square root, `S⁻¹` with `S⁻¹ m S⁻¹ = I`.
pub fn inverse_symmetric_sqrt(m: &SpdMatrix) -> Result<SpdMatrix> {
    let eig = SymmetricEigen::new(m.0.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let s = &eig.eigenvectors * Matrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    Ok(SpdMatrix(symmetrize(&s)))
}

pub fn solve_spd(m: &SpdMatrix, b: &Vector) -> Result<Vector> {
    check_dim(m.dim(), b.len())?;
    let chol = Cholesky::new(m.0.clone()).ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.solve(b))
}

/// Draws from `N(mean, cov)` for a symmetric positive semidefinite `cov`.
///
/// The factor is a Cholesky factor when one exists. Singular covariances use
/// an eigendecomposition with eigenvalues below `1e-12 · trace` clamped to
/// zero, so a zero covariance yields the mean itself.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    mean: Vector,
    factor: Matrix,
}

impl GaussianSampler {
    pub fn new(mean: Vector, cov: &Matrix) -> Result<Self> {
        check_dim(mean.len(), cov.nrows())?;
        check_dim(cov.nrows(), cov.ncols())?;
        if !is_symmetric(cov) {
            return Err(Error::NotPositiveDefinite);
        }
        match Cholesky::new(cov.clone()) {
            Some(c) => Ok(GaussianSampler { mean, factor: c.l() }),
            None => Self::new_psd(mean, cov),
        }
    }

    /// Always factorizes through the eigendecomposition.
    pub fn new_psd(mean: Vector, cov: &Matrix) -> Result<Self> {
        check_dim(mean.len(), cov.nrows())?;
        check_dim(cov.nrows(), cov.ncols())?;
        if !is_symmetric(cov) {
            return Err(Error::NotPositiveDefinite);
        }
        let cov = symmetrize(cov);
        let trace = cov.trace().abs();
        let eig = SymmetricEigen::new(cov);
        let floor = 1e-12 * trace;
        if eig.eigenvalues.iter().any(|&l| l < -1e-8 * trace.max(1.0)) {
            return Err(Error::NotPositiveDefinite);
        }
        let d = eig
            .eigenvalues
            .map(|l| if l <= floor { 0.0 } else { l.sqrt() });
        let factor = &eig.eigenvectors * Matrix::from_diagonal(&d);
        Ok(GaussianSampler { mean, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let p = self.mean.len();
        let z = Vector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.factor * z
    }
}

/// One draw of `N(mean, cov)` using a fresh generator for `stream`.
pub fn sample_gaussian(mean: &Vector, cov: &Matrix, stream: &RngStream) -> Result<Vector> {
    let sampler = GaussianSampler::new(mean.clone(), cov)?;
    Ok(sampler.sample(&mut stream.rng()))
}

/// Orthogonal projector onto the span of `basis`, for vectors in `ℝ^dim`.
///
/// Uses modified Gram–Schmidt with reorthogonalization; a basis vector whose
/// remainder falls below `1e-10` of its norm is rejected.
pub fn projector(basis: &[Vector], dim: usize) -> Result<Matrix> {
    let q = orthonormalize(basis, dim)?;
    let mut p = Matrix::zeros(dim, dim);
    for v in &q {
        p += v * v.transpose();
    }
    Ok(symmetrize(&p))
}

pub(crate) fn orthonormalize(basis: &[Vector], dim: usize) -> Result<Vec<Vector>> {
    let mut q: Vec<Vector> = Vec::with_capacity(basis.len());
    for b in basis {
        check_dim(dim, b.len())?;
        let norm0 = b.norm();
        if norm0 == 0.0 {
            return Err(Error::RankDeficientBasis);
        }
        let mut v = b.clone();
        for _ in 0..2 {
            for e in &q {
                let c = e.dot(&v);
                v.axpy(-c, e, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= 1e-10 * norm0 {
            return Err(Error::RankDeficientBasis);
        }
        q.push(v / norm);
    }
    Ok(q)
}

/// Largest eigenvalue bound used for step sizes: the Frobenius norm.
pub(crate) fn spectral_bound(m: &Matrix) -> f64 {
    m.norm()
}
