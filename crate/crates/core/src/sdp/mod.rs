//! Dense semidefinite programming in the inequality (LMI) form
//!
//! ```text
//! minimize    c^T y
//! subject to  C_j + sum_i y_i A_{j,i}  >= 0   for every block j
//!             E y = e
//! ```
//!
//! The built-in engine is [`InteriorPoint`], a primal-dual path-following
//! method with Nesterov-Todd scaling and Mehrotra predictor-corrector steps.
//! Other engines can be plugged in through [`SdpBackend`].

mod ipm;
mod presolve;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{Mat, SymMat};

pub use ipm::InteriorPoint;

/// One PSD block: `constant + sum_i y_i coefficients[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpBlock {
    pub constant: SymMat,
    pub coefficients: Vec<SymMat>,
}

impl SdpBlock {
    pub fn dim(&self) -> usize {
        self.constant.dim()
    }

    /// Value of the block at `y`.
    pub fn evaluate(&self, y: &[f64]) -> Mat {
        let mut m = self.constant.as_mat().clone();
        for (c, &yi) in self.coefficients.iter().zip(y) {
            if yi != 0.0 {
                m += c.as_mat() * yi;
            }
        }
        m
    }
}

/// Linear equality `row . y = rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearEquality {
    pub row: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<SdpBlock>,
    pub equalities: Vec<LinearEquality>,
}

impl SdpProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        Self { num_vars: objective.len(), objective, blocks: Vec::new(), equalities: Vec::new() }
    }

    pub fn add_block(&mut self, constant: SymMat, coefficients: Vec<SymMat>) -> Result<()> {
        let block = SdpBlock { constant, coefficients };
        self.check_block(&block)?;
        self.blocks.push(block);
        Ok(())
    }

    pub fn add_equality(&mut self, row: Vec<f64>, rhs: f64) -> Result<()> {
        if row.len() != self.num_vars {
            return Err(Error::Dimension(format!(
                "equality row has {} entries for {} variables",
                row.len(),
                self.num_vars
            )));
        }
        self.equalities.push(LinearEquality { row, rhs });
        Ok(())
    }

    fn check_block(&self, block: &SdpBlock) -> Result<()> {
        if block.coefficients.len() != self.num_vars {
            return Err(Error::Dimension(format!(
                "block has {} coefficient matrices for {} variables",
                block.coefficients.len(),
                self.num_vars
            )));
        }
        if let Some(c) = block.coefficients.iter().find(|c| c.dim() != block.dim()) {
            return Err(Error::Dimension(format!(
                "coefficient of size {} in a block of size {}",
                c.dim(),
                block.dim()
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.num_vars {
            return Err(Error::Dimension("objective length differs from num_vars".into()));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("objective has non-finite entries".into()));
        }
        for b in &self.blocks {
            self.check_block(b)?;
            let finite = b.constant.as_mat().iter().all(|v| v.is_finite())
                && b.coefficients.iter().all(|c| c.as_mat().iter().all(|v| v.is_finite()));
            if !finite {
                return Err(Error::InvalidParameter("block has non-finite entries".into()));
            }
        }
        for e in &self.equalities {
            if e.row.len() != self.num_vars {
                return Err(Error::Dimension("equality row length differs from num_vars".into()));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.iter().zip(y).map(|(c, y)| c * y).sum()
    }

    /// JSON document with dense row-major block entries.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct BlockDump {
            dim: usize,
            constant: Vec<f64>,
            coefficients: Vec<Vec<f64>>,
        }
        #[derive(Serialize)]
        struct Dump<'a> {
            num_vars: usize,
            objective: &'a [f64],
            blocks: Vec<BlockDump>,
            equalities: &'a [LinearEquality],
        }
        let row_major = |m: &SymMat| {
            let n = m.dim();
            (0..n * n).map(|k| m[(k / n, k % n)]).collect::<Vec<_>>()
        };
        let dump = Dump {
            num_vars: self.num_vars,
            objective: &self.objective,
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockDump {
                    dim: b.dim(),
                    constant: row_major(&b.constant),
                    coefficients: b.coefficients.iter().map(row_major).collect(),
                })
                .collect(),
            equalities: &self.equalities,
        };
        serde_json::to_string_pretty(&dump).expect("plain data serializes")
    }

    pub fn dump_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Per-iteration diagnostics.
///
/// `shifted_primal` and `shifted_dual` are the two objectives of the pair
/// obtained by moving the current residuals into the data, for which the
/// iterate is exactly feasible. Their difference equals `sum <S_j, X_j>`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub shifted_primal: f64,
    pub shifted_dual: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub complementarity: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub y: Vec<f64>,
    /// `C_j + sum_i y_i A_{j,i}` at `y`.
    pub slack_blocks: Vec<SymMat>,
    /// Multipliers `X_j >= 0` of the block constraints.
    pub dual_blocks: Vec<SymMat>,
    /// Multipliers of the equality constraints.
    pub equality_duals: Vec<f64>,
    pub status: SdpStatus,
    /// `|primal objective - dual objective|`.
    pub gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    /// Normalized Farkas direction when the status is infeasible or unbounded.
    pub certificate: Option<Certificate>,
    pub trace: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// `X_j >= 0` with `sum_j <A_{j,i}, X_j> ~ 0` and `sum_j <C_j, X_j> = -1`.
    Infeasible(Vec<SymMat>),
    /// `d` with `sum_i d_i A_{j,i} >= 0` and `c^T d = -1`.
    Unbounded(Vec<f64>),
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    /// Error unless the status is optimal.
    pub fn require_optimal(&self) -> Result<()> {
        if self.is_optimal() {
            Ok(())
        } else {
            Err(Error::Solver { status: self.status })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub verbose: bool,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-8, verbose: false }
    }
}

/// A conic engine able to solve an [`SdpProblem`].
pub trait SdpBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &SdpProblem, options: &SdpOptions) -> Result<SdpSolution>;
}

/// Solve with the built-in interior-point engine.
pub fn solve_sdp(problem: &SdpProblem, options: &SdpOptions) -> Result<SdpSolution> {
    InteriorPoint.solve(problem, options)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    /// Largest PSD violation of the blocks plus the equality residual norm.
    pub primal_res: f64,
    /// `|| c - A^*(X) - E^T lambda ||` plus the PSD violation of the multipliers.
    pub dual_res: f64,
    /// `|c^T y - (e^T lambda - sum_j <C_j, X_j>)|`.
    pub gap: f64,
    /// `sum_j |<S_j, X_j>|`.
    pub complementarity: f64,
}

fn psd_violation(m: &Mat) -> f64 {
    SymMat::new(m.clone())
        .and_then(|s| s.min_eigenvalue())
        .map(|l| (-l).max(0.0))
        .unwrap_or(f64::INFINITY)
}

/// KKT residuals of `solution` for `problem`, recomputed from scratch.
pub fn kkt_residuals(problem: &SdpProblem, solution: &SdpSolution) -> KktResiduals {
    let y = &solution.y;
    let slacks: Vec<Mat> = problem.blocks.iter().map(|b| b.evaluate(y)).collect();

    let mut primal = slacks.iter().map(psd_violation).fold(0.0, f64::max);
    let eq_res: f64 = problem
        .equalities
        .iter()
        .map(|e| {
            let r = e.row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - e.rhs;
            r * r
        })
        .sum();
    primal += eq_res.sqrt();

    let mut grad = problem.objective.clone();
    for (b, x) in problem.blocks.iter().zip(&solution.dual_blocks) {
        for (g, a) in grad.iter_mut().zip(&b.coefficients) {
            *g -= a.trace_prod(x);
        }
    }
    for (e, &l) in problem.equalities.iter().zip(&solution.equality_duals) {
        for (g, a) in grad.iter_mut().zip(&e.row) {
            *g -= l * a;
        }
    }
    let dual_violation = solution
        .dual_blocks
        .iter()
        .map(|x| psd_violation(x.as_mat()))
        .fold(0.0, f64::max);
    let dual = grad.iter().map(|g| g * g).sum::<f64>().sqrt() + dual_violation;

    let pobj = problem.objective_value(y);
    let dobj: f64 = problem
        .equalities
        .iter()
        .zip(&solution.equality_duals)
        .map(|(e, l)| e.rhs * l)
        .sum::<f64>()
        - problem
            .blocks
            .iter()
            .zip(&solution.dual_blocks)
            .map(|(b, x)| b.constant.trace_prod(x))
            .sum::<f64>();

    let complementarity = slacks
        .iter()
        .zip(&solution.dual_blocks)
        .map(|(s, x)| s.component_mul(x.as_mat()).sum().abs())
        .sum();

    KktResiduals { primal_res: primal, dual_res: dual, gap: (pobj - dobj).abs(), complementarity }
}
