//! Equality elimination and removal of constant blocks.

use nalgebra::SymmetricEigen;

use super::{SdpProblem, SdpStatus};
use crate::linalg::{Mat, Vector};

/// Block of the reduced problem, with coefficients stored only for the
/// variables that touch it.
#[derive(Debug, Clone)]
pub(super) struct Block {
    pub dim: usize,
    pub c: Mat,
    pub terms: Vec<(usize, Mat)>,
}

impl Block {
    pub fn adjoint(&self, z: &Vector) -> Mat {
        let mut m = Mat::zeros(self.dim, self.dim);
        for (k, a) in &self.terms {
            if z[*k] != 0.0 {
                m += a * z[*k];
            }
        }
        m
    }
}

/// Reduced problem in variables `z`, with `y = y_particular + nullspace * z`.
#[derive(Debug, Clone)]
pub(super) struct Reduced {
    pub blocks: Vec<Block>,
    /// Original index of each kept block.
    pub kept: Vec<usize>,
    pub objective: Vector,
    pub offset: f64,
    pub y_particular: Vector,
    pub nullspace: Mat,
}

impl Reduced {
    pub fn lift(&self, z: &Vector) -> Vector {
        &self.y_particular + &self.nullspace * z
    }
}

#[derive(Debug)]
pub(super) enum Presolved {
    Reduced(Reduced),
    /// Decided without running the cone solver; carries a direction `d`
    /// for the unbounded case.
    Decided { status: SdpStatus, y: Vector, ray: Option<Vector> },
}

const RANK_TOL: f64 = 1e-10;
const ZERO_COEF_TOL: f64 = 1e-13;

pub(super) fn presolve(p: &SdpProblem) -> Presolved {
    let m = p.num_vars;
    let c = Vector::from_column_slice(&p.objective);

    let (y_particular, nullspace) = if p.equalities.is_empty() {
        (Vector::zeros(m), Mat::identity(m, m))
    } else {
        let rows = p.equalities.len();
        let e = Mat::from_fn(rows, m, |r, k| p.equalities[r].row[k]);
        let rhs = Vector::from_fn(rows, |r, _| p.equalities[r].rhs);
        let scale = e.amax().max(1.0);
        let svd = e.clone().svd(true, true);
        let yp = svd
            .solve(&rhs, RANK_TOL * scale)
            .unwrap_or_else(|_| Vector::zeros(m));
        if (&e * &yp - &rhs).norm() > 1e-9 * (1.0 + rhs.norm()) {
            return Presolved::Decided { status: SdpStatus::Infeasible, y: yp, ray: None };
        }
        let gram = e.transpose() * &e;
        let eig = SymmetricEigen::new(gram);
        let cut = RANK_TOL * scale * scale * m as f64;
        let mut free: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] <= cut).collect();
        free.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut basis = Mat::zeros(m, free.len());
        for (col, &i) in free.iter().enumerate() {
            basis.set_column(col, &eig.eigenvectors.column(i));
        }
        (yp, basis)
    };

    let mut nullspace = nullspace;
    let mut objective = nullspace.transpose() * &c;
    let offset = c.dot(&y_particular);

    let reduce = |nullspace: &Mat| -> Vec<(Mat, Vec<Mat>)> {
        p.blocks
            .iter()
            .map(|b| {
                let mut cst = b.constant.as_mat().clone();
                for (i, a) in b.coefficients.iter().enumerate() {
                    if y_particular[i] != 0.0 {
                        cst += a.as_mat() * y_particular[i];
                    }
                }
                let coeffs = (0..nullspace.ncols())
                    .map(|k| {
                        let mut acc = Mat::zeros(b.dim(), b.dim());
                        for (i, a) in b.coefficients.iter().enumerate() {
                            let w = nullspace[(i, k)];
                            if w != 0.0 {
                                acc += a.as_mat() * w;
                            }
                        }
                        acc
                    })
                    .collect();
                (cst, coeffs)
            })
            .collect()
    };

    let mut reduced = reduce(&nullspace);
    let coef_scale = reduced
        .iter()
        .flat_map(|(_, cs)| cs.iter().map(|a| a.amax()))
        .fold(1.0, f64::max);

    // variables that appear in no block
    let nz = nullspace.ncols();
    let touched: Vec<bool> = (0..nz)
        .map(|k| reduced.iter().any(|(_, cs)| cs[k].amax() > ZERO_COEF_TOL * coef_scale))
        .collect();
    let c_scale = objective.amax().max(1.0);
    for k in 0..nz {
        if !touched[k] && objective[k].abs() > 1e-12 * c_scale {
            let mut dz = Vector::zeros(nz);
            dz[k] = -1.0 / objective[k];
            let ray = &nullspace * dz;
            return Presolved::Decided { status: SdpStatus::Unbounded, y: y_particular, ray: Some(ray) };
        }
    }
    if touched.iter().any(|t| !t) {
        let keep: Vec<usize> = (0..nz).filter(|&k| touched[k]).collect();
        nullspace = Mat::from_fn(m, keep.len(), |i, col| nullspace[(i, keep[col])]);
        objective = Vector::from_fn(keep.len(), |col, _| objective[keep[col]]);
        reduced = reduce(&nullspace);
    }

    let mut blocks = Vec::new();
    let mut kept = Vec::new();
    for (j, (cst, coeffs)) in reduced.into_iter().enumerate() {
        let terms: Vec<(usize, Mat)> = coeffs
            .into_iter()
            .enumerate()
            .filter(|(_, a)| a.amax() > ZERO_COEF_TOL * coef_scale)
            .map(|(k, a)| (k, (&a + a.transpose()) * 0.5))
            .collect();
        let cst = (&cst + cst.transpose()) * 0.5;
        if terms.is_empty() {
            let min = SymmetricEigen::new(cst.clone()).eigenvalues.min();
            if min < -1e-9 * (1.0 + cst.norm()) {
                return Presolved::Decided {
                    status: SdpStatus::Infeasible,
                    y: y_particular,
                    ray: None,
                };
            }
            continue;
        }
        blocks.push(Block { dim: cst.nrows(), c: cst, terms });
        kept.push(j);
    }

    if nullspace.ncols() == 0 {
        return Presolved::Decided { status: SdpStatus::Optimal, y: y_particular, ray: None };
    }

    Presolved::Reduced(Reduced { blocks, kept, objective, offset, y_particular, nullspace })
}
