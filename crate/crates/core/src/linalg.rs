//! Dense symmetric-matrix kernels shared by the rest of the crate.
//!
//! General matrices are plain [`nalgebra::DMatrix`] values ([`Mat`]); symmetric
//! ones are wrapped in [`SymMat`], which is exactly symmetric by construction.
//! The packed `svec` layout scales off-diagonal entries by `sqrt(2)` so that
//! `svec(a) . svec(b) == trace(a b)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// General dense real matrix.
pub type Mat = DMatrix<f64>;
/// Dense real column vector.
pub type Vector = DVector<f64>;

/// Default relative PSD tolerance.
pub const PSD_TOL: f64 = 1e-9;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITERS: usize = 10_000;

/// Dense symmetric matrix. Entries are averaged with their transpose on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat(Mat);

impl SymMat {
    /// Symmetrizes `m` as `(m + m^T) / 2`.
    pub fn new(m: Mat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::Dimension("symmetric matrix must have n >= 1".into()));
        }
        Ok(Self::symmetrize(m))
    }

    /// Infallible variant for internally produced square matrices.
    pub(crate) fn symmetrize(m: Mat) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        let mut s = m.clone();
        let n = s.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        SymMat(s)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("rows must form a square matrix".into()));
        }
        Self::new(Mat::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        SymMat(Mat::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMat(Mat::zeros(n, n))
    }

    pub fn from_diag(d: &[f64]) -> Self {
        SymMat(Mat::from_diagonal(&Vector::from_column_slice(d)))
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        SymMat(Mat::identity(n, n) * s)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `trace(self * other)` without forming the product.
    pub fn trace_prod(&self, other: &SymMat) -> f64 {
        self.0.component_mul(&other.0).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, s: f64) -> SymMat {
        SymMat(&self.0 * s)
    }

    pub fn add(&self, other: &SymMat) -> SymMat {
        SymMat(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMat) -> SymMat {
        SymMat(&self.0 - &other.0)
    }

    /// `t * self * t^T`.
    pub fn congruence(&self, t: &Mat) -> SymMat {
        SymMat::symmetrize(t * &self.0 * t.transpose())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(sym_eig(self)?.0[0])
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        let (vals, _) = sym_eig(self)?;
        Ok(vals[vals.len() - 1])
    }

    /// Cholesky factor `L` with `self = L L^T`; fails unless strictly positive definite.
    pub fn cholesky(&self) -> Result<Mat> {
        nalgebra::linalg::Cholesky::new(self.0.clone())
            .map(|c| c.l())
            .ok_or_else(|| Error::NotPd("Cholesky factorization failed".into()))
    }

    /// Solves `self * X = rhs` for positive definite `self`.
    pub fn solve_pd(&self, rhs: &Mat) -> Result<Mat> {
        let chol = nalgebra::linalg::Cholesky::new(self.0.clone())
            .ok_or_else(|| Error::NotPd("Cholesky factorization failed".into()))?;
        Ok(chol.solve(rhs))
    }

    /// Inverse of a positive definite matrix via Cholesky.
    pub fn inverse_pd(&self) -> Result<SymMat> {
        let chol = nalgebra::linalg::Cholesky::new(self.0.clone())
            .ok_or_else(|| Error::NotPd("Cholesky factorization failed".into()))?;
        Ok(SymMat::symmetrize(chol.inverse()))
    }

    /// Natural log-determinant of a positive definite matrix.
    pub fn log_det_pd(&self) -> Result<f64> {
        let l = self.cholesky()?;
        Ok(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
    }

    /// 2-norm condition number; infinite for singular or indefinite input.
    pub fn condition_number(&self) -> Result<f64> {
        let (vals, _) = sym_eig(self)?;
        let lo = vals[0];
        let hi = vals[vals.len() - 1];
        if lo <= 0.0 {
            Ok(f64::INFINITY)
        } else {
            Ok(hi / lo)
        }
    }

    /// Assemble `[[a, b], [b^T, d]]`.
    pub fn block2(a: &SymMat, b: &Mat, d: &SymMat) -> Result<SymMat> {
        let (n1, n2) = (a.dim(), d.dim());
        if b.nrows() != n1 || b.ncols() != n2 {
            return Err(Error::Dimension(format!(
                "off-diagonal block is {}x{}, expected {}x{}",
                b.nrows(),
                b.ncols(),
                n1,
                n2
            )));
        }
        let mut m = Mat::zeros(n1 + n2, n1 + n2);
        m.view_mut((0, 0), (n1, n1)).copy_from(&a.0);
        m.view_mut((0, n1), (n1, n2)).copy_from(b);
        m.view_mut((n1, 0), (n2, n1)).copy_from(&b.transpose());
        m.view_mut((n1, n1), (n2, n2)).copy_from(&d.0);
        Ok(SymMat(m))
    }

    /// Square sub-block starting at `(start, start)`.
    pub fn sub_block(&self, start: usize, len: usize) -> SymMat {
        SymMat(self.0.view((start, start), (len, len)).into_owned())
    }
}

impl std::fmt::Display for SymMat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::ops::Index<(usize, usize)> for SymMat {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Symmetric eigendecomposition with ascending eigenvalues and orthonormal eigenvector columns.
pub fn sym_eig(m: &SymMat) -> Result<(Vec<f64>, Mat)> {
    let eig = m
        .0
        .clone()
        .try_symmetric_eigen(EIG_EPS, EIG_MAX_ITERS)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let n = m.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = Mat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((vals, vecs))
}

/// `true` iff `min eig >= -tol * (1 + max |eig|)`.
pub fn is_psd(m: &SymMat, tol: f64) -> Result<bool> {
    let (vals, _) = sym_eig(m)?;
    let scale = vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    Ok(vals[0] >= -tol * (1.0 + scale))
}

/// Apply a scalar function to the eigenvalues of a symmetric matrix.
pub fn sym_apply(m: &SymMat, f: impl Fn(f64) -> f64) -> Result<SymMat> {
    let (vals, vecs) = sym_eig(m)?;
    let d = Mat::from_diagonal(&Vector::from_iterator(vals.len(), vals.iter().map(|&v| f(v))));
    Ok(SymMat::symmetrize(&vecs * d * vecs.transpose()))
}

/// Principal square root of a PSD matrix. Tiny negative eigenvalues within
/// [`PSD_TOL`] are clamped to zero.
pub fn sqrtm_psd(m: &SymMat) -> Result<SymMat> {
    let (vals, vecs) = sym_eig(m)?;
    let scale = vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if vals[0] < -PSD_TOL * (1.0 + scale) {
        return Err(Error::NotPsd { min_eig: vals[0] });
    }
    let d = Mat::from_diagonal(&Vector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| v.max(0.0).sqrt()),
    ));
    Ok(SymMat::symmetrize(&vecs * d * vecs.transpose()))
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "spectral radius needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let schur = m
        .clone()
        .try_schur(EIG_EPS, EIG_MAX_ITERS)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

/// Packed length `n(n+1)/2`.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Column-wise lower-triangle packing with off-diagonals scaled by `sqrt(2)`.
pub fn svec(m: &SymMat) -> Vec<f64> {
    let n = m.dim();
    let mut out = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        out.push(m[(j, j)]);
        for i in (j + 1)..n {
            out.push(std::f64::consts::SQRT_2 * m[(i, j)]);
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], n: usize) -> Result<SymMat> {
    if v.len() != svec_len(n) || n == 0 {
        return Err(Error::Dimension(format!(
            "svec of length {} does not match n = {} (expected {})",
            v.len(),
            n,
            svec_len(n)
        )));
    }
    let mut m = Mat::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        m[(j, j)] = v[k];
        k += 1;
        for i in (j + 1)..n {
            let x = v[k] / std::f64::consts::SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    Ok(SymMat(m))
}

/// Build a matrix from nested row slices.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension("matrix rows must be non-empty and of equal length".into()));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

/// Nested row vectors, the JSON/TOML matrix layout.
pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Infinity norm of the entrywise difference.
pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).amax()
}
