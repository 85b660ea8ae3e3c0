//! Matrix-valued affine expressions in scalar decision variables.

use std::collections::BTreeMap;

use crate::linalg::{Mat, SymMat};

/// `constant + sum_k y_k terms[k]`, all of the same shape.
#[derive(Debug, Clone)]
pub(crate) struct Affine {
    pub constant: Mat,
    pub terms: BTreeMap<usize, Mat>,
}

impl Affine {
    pub fn constant(m: Mat) -> Self {
        Self { constant: m, terms: BTreeMap::new() }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(Mat::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(Mat::identity(n, n))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    fn map(&self, f: impl Fn(&Mat) -> Mat) -> Self {
        Self {
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(k, m)| (*k, f(m))).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|m| m * s)
    }

    pub fn lmul(&self, left: &Mat) -> Self {
        self.map(|m| left * m)
    }

    pub fn add(&self, other: &Affine) -> Self {
        assert_eq!(self.shape(), other.shape(), "affine shapes differ");
        let mut out = self.clone();
        out.constant += &other.constant;
        for (k, m) in &other.terms {
            out.terms
                .entry(*k)
                .and_modify(|t| *t += m)
                .or_insert_with(|| m.clone());
        }
        out
    }

    pub fn sub(&self, other: &Affine) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn add_const(&self, m: &Mat) -> Self {
        let mut out = self.clone();
        out.constant += m;
        out
    }

    /// Symmetric block matrix `[[a, b], [b^T, d]]`.
    pub fn block2(a: &Affine, b: &Affine, d: &Affine) -> Self {
        let (n1, _) = a.shape();
        let (n2, _) = d.shape();
        assert_eq!(b.shape(), (n1, n2), "off-diagonal block has the wrong shape");
        let n = n1 + n2;
        let place = |ma: Option<&Mat>, mb: Option<&Mat>, md: Option<&Mat>| {
            let mut m = Mat::zeros(n, n);
            if let Some(x) = ma {
                m.view_mut((0, 0), (n1, n1)).copy_from(x);
            }
            if let Some(x) = mb {
                m.view_mut((0, n1), (n1, n2)).copy_from(x);
                m.view_mut((n1, 0), (n2, n1)).copy_from(&x.transpose());
            }
            if let Some(x) = md {
                m.view_mut((n1, n1), (n2, n2)).copy_from(x);
            }
            m
        };
        let mut keys: Vec<usize> = a.terms.keys().chain(b.terms.keys()).chain(d.terms.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        Self {
            constant: place(Some(&a.constant), Some(&b.constant), Some(&d.constant)),
            terms: keys
                .into_iter()
                .map(|k| (k, place(a.terms.get(&k), b.terms.get(&k), d.terms.get(&k))))
                .collect(),
        }
    }

    /// Vertical stack `[top; bottom]`.
    pub fn vstack(top: &Affine, bottom: &Affine) -> Self {
        let (r1, c) = top.shape();
        let (r2, c2) = bottom.shape();
        assert_eq!(c, c2, "stacked blocks have different widths");
        let place = |mt: Option<&Mat>, mb: Option<&Mat>| {
            let mut m = Mat::zeros(r1 + r2, c);
            if let Some(x) = mt {
                m.view_mut((0, 0), (r1, c)).copy_from(x);
            }
            if let Some(x) = mb {
                m.view_mut((r1, 0), (r2, c)).copy_from(x);
            }
            m
        };
        let mut keys: Vec<usize> = top.terms.keys().chain(bottom.terms.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        Self {
            constant: place(Some(&top.constant), Some(&bottom.constant)),
            terms: keys
                .into_iter()
                .map(|k| (k, place(top.terms.get(&k), bottom.terms.get(&k))))
                .collect(),
        }
    }

    /// `tr(weight * self)` as `(constant, coefficient per variable)`.
    pub fn trace_with(&self, weight: &Mat) -> (f64, BTreeMap<usize, f64>) {
        let tr = |m: &Mat| (weight * m).trace();
        (tr(&self.constant), self.terms.iter().map(|(k, m)| (*k, tr(m))).collect())
    }

    /// Value at `y`.
    #[cfg(test)]
    pub fn evaluate(&self, y: &[f64]) -> Mat {
        let mut m = self.constant.clone();
        for (k, t) in &self.terms {
            m += t * y[*k];
        }
        m
    }

    /// Dense coefficient list over `num_vars` variables for a PSD block.
    pub fn into_block(self, num_vars: usize) -> (SymMat, Vec<SymMat>) {
        let n = self.constant.nrows();
        let constant = SymMat::new(self.constant).expect("square block");
        let mut coeffs = vec![SymMat::zeros(n); num_vars];
        for (k, m) in self.terms {
            coeffs[k] = SymMat::new(m).expect("square block");
        }
        (constant, coeffs)
    }
}

/// Location of a matrix variable inside the scalar decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarBlock {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub symmetric: bool,
}

impl VarBlock {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        if self.symmetric {
            self.rows * (self.rows + 1) / 2
        } else {
            self.rows * self.cols
        }
    }

    /// Scalar variable index of entry `(i, j)` (upper triangle for symmetric blocks).
    pub fn index(&self, i: usize, j: usize) -> usize {
        if self.symmetric {
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            // column-wise upper triangle
            self.offset + j * (j + 1) / 2 + i
        } else {
            self.offset + j * self.rows + i
        }
    }

    pub fn value(&self, y: &[f64]) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| y[self.index(i, j)])
    }

    pub(crate) fn expr(&self) -> Affine {
        let mut a = Affine::zeros(self.rows, self.cols);
        for j in 0..self.cols {
            let top = if self.symmetric { j + 1 } else { self.rows };
            for i in 0..top {
                let mut e = Mat::zeros(self.rows, self.cols);
                e[(i, j)] = 1.0;
                if self.symmetric {
                    e[(j, i)] = 1.0;
                }
                a.terms.insert(self.index(i, j), e);
            }
        }
        a
    }
}

/// Allocator of scalar decision variables.
#[derive(Debug, Default)]
pub(crate) struct Vars {
    count: usize,
}

impl Vars {
    pub fn symmetric(&mut self, n: usize) -> VarBlock {
        self.push(n, n, true)
    }

    pub fn general(&mut self, rows: usize, cols: usize) -> VarBlock {
        self.push(rows, cols, false)
    }

    fn push(&mut self, rows: usize, cols: usize, symmetric: bool) -> VarBlock {
        let v = VarBlock { offset: self.count, rows, cols, symmetric };
        self.count += v.len();
        v
    }

    pub fn count(&self) -> usize {
        self.count
    }
}
