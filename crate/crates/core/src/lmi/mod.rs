//! LQR design formulations as semidefinite programs.
//!
//! All formulations share the decision blocks `Sigma` (state covariance),
//! `L = K Sigma` and `Z0 >= L Sigma^-1 L^T`, the objective
//! `tr(Q Sigma) + tr(R Z0)`, and the relaxed Lyapunov inequality
//!
//! ```text
//! [[Sigma - W - B V B^T, A Sigma + B L], [.., Sigma]] >= 0.
//! ```
//!
//! The data-conforming variants add either constraints tying `Sigma` to the
//! data covariance or convex penalties on the mismatch between the designed
//! and the observed distributions.

mod affine;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use affine::VarBlock;
use affine::{Affine, Vars};

use crate::error::{Error, Result};
use crate::linalg::{mat_to_rows, sym_eig, Mat, SymMat};
use crate::lqr::LqrWeights;
use crate::sdp::{solve_sdp, SdpBackend, SdpOptions, SdpProblem, SdpSolution, SdpStatus};
use crate::sysid::{check_pe, least_squares_id, moments_about, Centering, EmpiricalMoments, LinearModel, TrajectoryData};

/// Lower bound `Sigma >= EPS0 I` standing in for strict positivity.
pub const EPS0: f64 = 1e-8;
/// Relative Lyapunov residual below which the constraint counts as active.
pub const ACTIVITY_TOL: f64 = 1e-5;
/// Largest admissible condition number of `Sigma*` in gain recovery.
pub const MAX_RECOVERY_CONDITION: f64 = 1e10;
/// Condition number above which recovery applies a Tikhonov shift.
pub const SHIFT_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Formulation {
    /// Model-based LQR on a known model.
    Standard,
    /// LQR on the least-squares model.
    CertaintyEquivalence,
    /// `Sigma = Sigma_data` exactly.
    StateHard,
    /// `Sigma_data - eps I <= Sigma <= Sigma_data + eps I`.
    StateBand { eps: f64 },
    /// Penalty `gamma_prime ||Sigma - Sigma_data||_F^2`.
    StateRegularized { gamma_prime: f64 },
    /// Penalty `gamma F` on the joint state-input covariance.
    JointRegularized { gamma: f64 },
}

impl Formulation {
    pub fn needs_moments(&self) -> bool {
        !matches!(self, Formulation::Standard | Formulation::CertaintyEquivalence)
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self {
            Formulation::Standard => "standard".into(),
            Formulation::CertaintyEquivalence => "certainty-equivalence".into(),
            Formulation::StateHard => "state-hard".into(),
            Formulation::StateBand { eps } => format!("state-band(eps={eps})"),
            Formulation::StateRegularized { gamma_prime } => format!("state-regularized(gamma'={gamma_prime})"),
            Formulation::JointRegularized { gamma } => format!("joint-regularized(gamma={gamma})"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::InvalidParameter(format!("{what} must be positive, got {v}"));
        match *self {
            Formulation::StateBand { eps } if !(eps > 0.0) => Err(bad("eps", eps)),
            Formulation::StateRegularized { gamma_prime } if !(gamma_prime >= 0.0) || !gamma_prime.is_finite() => {
                Err(Error::InvalidParameter(format!("gamma' must be nonnegative, got {gamma_prime}")))
            }
            Formulation::JointRegularized { gamma } if !(gamma > 0.0) || !gamma.is_finite() => Err(bad("gamma", gamma)),
            _ => Ok(()),
        }
    }
}

/// Everything one design needs: the (true or identified) model, the weights,
/// the data moments, and the formulation.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub model: LinearModel,
    pub weights: LqrWeights,
    pub moments: Option<EmpiricalMoments>,
    pub formulation: Formulation,
}

impl DesignSpec {
    pub fn new(
        model: LinearModel,
        weights: LqrWeights,
        moments: Option<EmpiricalMoments>,
        formulation: Formulation,
    ) -> Result<Self> {
        formulation.validate()?;
        let (rx, ru) = (model.state_dim(), model.input_dim());
        if weights.q.dim() != rx || weights.r.dim() != ru || weights.v.dim() != ru {
            return Err(Error::Dimension(format!(
                "weights (Q {}, R {}, V {}) do not fit a model with r_x = {rx}, r_u = {ru}",
                weights.q.dim(),
                weights.r.dim(),
                weights.v.dim()
            )));
        }
        match &moments {
            None if formulation.needs_moments() => {
                return Err(Error::InvalidParameter(format!(
                    "{} design needs data moments",
                    formulation.label()
                )))
            }
            Some(m) if m.state_dim() != rx || m.input_dim() != ru => {
                return Err(Error::Dimension("moments do not match the model dimensions".into()))
            }
            _ => {}
        }
        Ok(Self { model, weights, moments, formulation })
    }

    /// Identify the model and moments from one trajectory. Raises the
    /// persistent-excitation error when the data cannot identify the model.
    pub fn from_data(data: &TrajectoryData, weights: LqrWeights, formulation: Formulation) -> Result<Self> {
        Self::from_data_about(data, weights, formulation, Centering::SampleMean)
    }

    pub fn from_data_about(
        data: &TrajectoryData,
        weights: LqrWeights,
        formulation: Formulation,
        centering: Centering,
    ) -> Result<Self> {
        let pe = check_pe(data);
        if !pe.satisfied {
            return Err(Error::PeViolation { rank: pe.rank, required: data.state_dim() + data.input_dim() });
        }
        let model = least_squares_id(data)?;
        let moments = if formulation.needs_moments() { Some(moments_about(data, centering)?) } else { None };
        Self::new(model, weights, moments, formulation)
    }

    fn moments(&self) -> &EmpiricalMoments {
        self.moments.as_ref().expect("validated at construction")
    }
}

/// Positions of the named decision blocks of a [`DesignProblem`].
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub sigma: VarBlock,
    pub l: VarBlock,
    pub aux: Vec<(String, VarBlock)>,
    /// Index of the Lyapunov LMI among the SDP blocks.
    pub lyapunov_block: usize,
}

/// An SDP together with the map back to the design variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignProblem {
    pub sdp: SdpProblem,
    pub layout: Layout,
}

struct Builder {
    vars: Vars,
    objective: Vec<(BTreeMap<usize, f64>, f64)>,
    blocks: Vec<Affine>,
    equalities: Vec<(Vec<(usize, f64)>, f64)>,
}

impl Builder {
    fn new() -> Self {
        Self { vars: Vars::default(), objective: Vec::new(), blocks: Vec::new(), equalities: Vec::new() }
    }

    /// Add `scale * tr(weight * expr)` to the objective.
    fn minimize_trace(&mut self, weight: &Mat, expr: &Affine, scale: f64) {
        let (_, coef) = expr.trace_with(weight);
        self.objective.push((coef, scale));
    }

    fn psd(&mut self, expr: Affine) -> usize {
        self.blocks.push(expr);
        self.blocks.len() - 1
    }

    fn finish(self) -> SdpProblem {
        let n = self.vars.count();
        let mut c = vec![0.0; n];
        for (coef, scale) in &self.objective {
            for (k, v) in coef {
                c[*k] += scale * v;
            }
        }
        let mut p = SdpProblem::new(c);
        for b in self.blocks {
            let (cst, coeffs) = b.into_block(n);
            p.add_block(cst, coeffs).expect("builder keeps shapes consistent");
        }
        for (row, rhs) in self.equalities {
            let mut dense = vec![0.0; n];
            for (k, v) in row {
                dense[k] = v;
            }
            p.add_equality(dense, rhs).expect("row length matches");
        }
        p
    }
}

/// Compile a design specification into an SDP.
pub fn build(spec: &DesignSpec) -> Result<DesignProblem> {
    let model = &spec.model;
    let w = &spec.weights;
    let (rx, ru) = (model.state_dim(), model.input_dim());

    let mut bld = Builder::new();
    let sigma = bld.vars.symmetric(rx);
    let l = bld.vars.general(ru, rx);
    let z0 = bld.vars.symmetric(ru);
    let (s, le, z0e) = (sigma.expr(), l.expr(), z0.expr());
    let mut aux = vec![("Z0".to_string(), z0)];

    bld.minimize_trace(w.q.as_mat(), &s, 1.0);
    bld.minimize_trace(w.r.as_mat(), &z0e, 1.0);

    bld.psd(s.add_const(&(-Mat::identity(rx, rx) * EPS0)));
    bld.psd(Affine::block2(&z0e, &le, &s));
    let noise = model.w.as_mat() + &model.b * w.v.as_mat() * model.b.transpose();
    let coupling = s.lmul(&model.a).add(&le.lmul(&model.b));
    let lyapunov_block = bld.psd(Affine::block2(&s.add_const(&-noise), &coupling, &s));

    match spec.formulation {
        Formulation::Standard | Formulation::CertaintyEquivalence => {}
        Formulation::StateRegularized { gamma_prime: 0.0 } => {}
        Formulation::StateHard => {
            let sd = &spec.moments().sigma_data;
            for j in 0..rx {
                for i in 0..=j {
                    bld.equalities.push((vec![(sigma.index(i, j), 1.0)], sd[(i, j)]));
                }
            }
        }
        Formulation::StateBand { eps } => {
            let sd = spec.moments().sigma_data.as_mat();
            let shift = Mat::identity(rx, rx) * eps;
            bld.psd(s.add_const(&(-sd + &shift)));
            bld.psd(s.scale(-1.0).add_const(&(sd + &shift)));
        }
        Formulation::StateRegularized { gamma_prime } => {
            let sd = spec.moments().sigma_data.as_mat();
            let zp = bld.vars.symmetric(rx);
            let zpe = zp.expr();
            bld.minimize_trace(&Mat::identity(rx, rx), &zpe, gamma_prime);
            bld.psd(Affine::block2(&zpe, &s.add_const(&-sd), &Affine::identity(rx)));
            aux.push(("Z_prime".into(), zp));
        }
        Formulation::JointRegularized { gamma } => {
            let mom = spec.moments();
            let sd = &mom.sigma_data;
            let gamma_inv = mom.gamma_data.inverse_pd().map_err(|_| {
                Error::DegenerateData("joint data covariance is singular".into())
            })?;
            let v_inv = w.v.inverse_pd()?;
            let sd_inv = sd.inverse_pd()?;

            let z1 = bld.vars.symmetric(rx + ru);
            let z2 = bld.vars.symmetric(ru);
            let z3 = bld.vars.symmetric(rx);
            let (z1e, z2e, z3e) = (z1.expr(), z2.expr(), z3.expr());
            bld.minimize_trace(gamma_inv.as_mat(), &z1e, gamma);
            bld.minimize_trace(v_inv.as_mat(), &z2e, gamma);
            bld.minimize_trace(sd.as_mat(), &z3e, gamma);

            let mut pad = Mat::zeros(rx + ru, rx + ru);
            pad.view_mut((rx, rx), (ru, ru)).copy_from(w.v.as_mat());
            bld.psd(Affine::block2(&z1e.add_const(&-pad), &Affine::vstack(&s, &le), &s));
            let shift = mom.h_data.transpose() * sd_inv.as_mat();
            bld.psd(Affine::block2(&z2e, &le.sub(&s.lmul(&shift)), &s));
            bld.psd(Affine::block2(&z3e, &Affine::identity(rx), &s));
            aux.push(("Z1".into(), z1));
            aux.push(("Z2".into(), z2));
            aux.push(("Z3".into(), z3));
        }
    }

    Ok(DesignProblem { sdp: bld.finish(), layout: Layout { sigma, l, aux, lyapunov_block } })
}

/// Model-based LQR: `min tr(Q Sigma) + tr(R Z0)` under the Lyapunov LMI.
pub fn build_standard(model: &LinearModel, weights: &LqrWeights) -> Result<DesignProblem> {
    build(&DesignSpec::new(model.clone(), weights.clone(), None, Formulation::Standard)?)
}

/// LQR on the model identified from `data`.
pub fn build_certainty_equivalence(data: &TrajectoryData, weights: &LqrWeights) -> Result<DesignProblem> {
    build(&DesignSpec::from_data(data, weights.clone(), Formulation::CertaintyEquivalence)?)
}

/// How the state covariance is tied to the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateMode {
    Hard,
    Band(f64),
    Regularized(f64),
}

/// Certainty-equivalence LQR with the state covariance tied to the data.
pub fn build_state_conforming(data: &TrajectoryData, weights: &LqrWeights, mode: StateMode) -> Result<DesignProblem> {
    let formulation = match mode {
        StateMode::Hard => Formulation::StateHard,
        StateMode::Band(eps) => Formulation::StateBand { eps },
        StateMode::Regularized(gamma_prime) => Formulation::StateRegularized { gamma_prime },
    };
    build(&DesignSpec::from_data(data, weights.clone(), formulation)?)
}

/// Certainty-equivalence LQR penalized by the joint state-input surrogate divergence.
pub fn build_joint_conforming(data: &TrajectoryData, weights: &LqrWeights, gamma: f64) -> Result<DesignProblem> {
    build(&DesignSpec::from_data(data, weights.clone(), Formulation::JointRegularized { gamma })?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub k: Mat,
    pub sigma_star: SymMat,
    pub l_star: Mat,
    pub aux_blocks: BTreeMap<String, SymMat>,
    /// `r_x x r_x` leading block of the Lyapunov LMI multiplier.
    pub dual_upsilon: SymMat,
    pub lyapunov_active: bool,
    pub objective: f64,
    pub solver_status: SdpStatus,
    pub solver_iterations: usize,
    /// Set when `Sigma*` was shifted before inversion.
    pub shifted_recovery: bool,
}

/// Solve with the built-in engine and recover the controller.
pub fn design(spec: &DesignSpec, options: &SdpOptions) -> Result<DesignResult> {
    let problem = build(spec)?;
    let solution = solve_sdp(&problem.sdp, options)?;
    recover_design(&problem, &solution, spec)
}

/// Same as [`design`] with a caller-chosen backend.
pub fn design_with(backend: &dyn SdpBackend, spec: &DesignSpec, options: &SdpOptions) -> Result<DesignResult> {
    let problem = build(spec)?;
    let solution = backend.solve(&problem.sdp, options)?;
    recover_design(&problem, &solution, spec)
}

/// Recover `K = L Sigma^-1`, the named blocks and the Lyapunov multiplier.
pub fn recover_design(problem: &DesignProblem, solution: &SdpSolution, spec: &DesignSpec) -> Result<DesignResult> {
    solution.require_optimal()?;
    let y = &solution.y;
    let lay = &problem.layout;
    let rx = lay.sigma.rows;
    let sigma_star = SymMat::new(lay.sigma.value(y))?;
    let l_star = lay.l.value(y);

    let cond = sigma_star.condition_number()?;
    if !cond.is_finite() || cond > MAX_RECOVERY_CONDITION {
        return Err(Error::IllConditionedRecovery { cond });
    }
    let shifted_recovery = cond > SHIFT_CONDITION;
    let solve_with = if shifted_recovery {
        log::warn!("Sigma* has condition number {cond:.3e}; shifting before inversion");
        sigma_star.add(&SymMat::scaled_identity(rx, 1e-12 * sigma_star.trace() / rx as f64))
    } else {
        sigma_star.clone()
    };
    let k = solve_with.solve_pd(&l_star.transpose())?.transpose();

    let aux_blocks = lay
        .aux
        .iter()
        .map(|(name, vb)| Ok((name.clone(), SymMat::new(vb.value(y))?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let dual_upsilon = solution.dual_blocks[lay.lyapunov_block].sub_block(0, rx);

    let mut result = DesignResult {
        k,
        sigma_star,
        l_star,
        aux_blocks,
        dual_upsilon,
        lyapunov_active: false,
        objective: solution.primal_objective,
        solver_status: solution.status,
        solver_iterations: solution.iterations,
        shifted_recovery,
    };
    result.lyapunov_active = activity_report(spec, &result)?.active;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    Pd,
    Psd,
    Indefinite,
    Nsd,
}

impl Definiteness {
    pub fn classify(m: &SymMat) -> Result<Self> {
        let (eig, _) = sym_eig(m)?;
        let tol = 1e-9 * (1.0 + m.frobenius_norm());
        let (lo, hi) = (eig[0], eig[eig.len() - 1]);
        Ok(if lo > tol {
            Definiteness::Pd
        } else if lo >= -tol {
            Definiteness::Psd
        } else if hi <= tol {
            Definiteness::Nsd
        } else {
            Definiteness::Indefinite
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivityReport {
    /// `||(A+BK) Sigma (A+BK)^T - Sigma + W + B V B^T||_F`.
    pub lyapunov_residual: f64,
    pub active: bool,
    /// Definiteness of the stationarity term whose positivity forces activity.
    pub term_definiteness: Definiteness,
}

/// The matrix whose positive definiteness forces the Lyapunov constraint to
/// be tight at the optimum.
pub fn activity_term(spec: &DesignSpec, result: &DesignResult) -> Result<SymMat> {
    let w = &spec.weights;
    let k = &result.k;
    let base = w.q.add(&w.r.congruence(&k.transpose()));
    match spec.formulation {
        Formulation::StateRegularized { gamma_prime } => {
            let diff = result.sigma_star.sub(&spec.moments().sigma_data);
            Ok(base.add(&diff.scale(2.0 * gamma_prime)))
        }
        Formulation::JointRegularized { gamma } => {
            let mom = spec.moments();
            let rx = mom.state_dim();
            let ru = mom.input_dim();
            let gi = mom.gamma_data.inverse_pd()?;
            let a = gi.sub_block(0, rx);
            let b = gi.as_mat().view((0, rx), (rx, ru)).into_owned();
            let c = gi.sub_block(rx, ru);
            let bk = &b * k;
            let sinv = result.sigma_star.inverse_pd()?;
            let cross = SymMat::new(&bk + bk.transpose())?;
            let pulled = mom.sigma_data.congruence(sinv.as_mat());
            Ok(w.q
                .add(&a.scale(gamma))
                .add(&w.r.add(&c.scale(gamma)).congruence(&k.transpose()))
                .add(&cross.scale(gamma))
                .sub(&pulled.scale(gamma)))
        }
        _ => Ok(base),
    }
}

pub fn activity_report(spec: &DesignSpec, result: &DesignResult) -> Result<ActivityReport> {
    let model = &spec.model;
    let f = model.closed_loop(&result.k);
    let s = result.sigma_star.as_mat();
    let noise = model.w.as_mat() + &model.b * spec.weights.v.as_mat() * model.b.transpose();
    let residual = (&f * s * f.transpose() - s + noise).norm();
    let active = residual <= ACTIVITY_TOL * (1.0 + result.sigma_star.frobenius_norm());
    let term_definiteness = Definiteness::classify(&activity_term(spec, result)?)?;
    Ok(ActivityReport { lyapunov_residual: residual, active, term_definiteness })
}

/// JSON view of a design.
#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub formulation: String,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "Sigma_star")]
    pub sigma_star: Vec<Vec<f64>>,
    pub objective: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    pub activity: ActivityReport,
}

impl DesignReport {
    pub fn new(spec: &DesignSpec, result: &DesignResult) -> Result<Self> {
        Ok(Self {
            formulation: spec.formulation.label(),
            k: mat_to_rows(&result.k),
            sigma_star: mat_to_rows(result.sigma_star.as_mat()),
            objective: result.objective,
            status: result.solver_status,
            iterations: result.solver_iterations,
            activity: activity_report(spec, result)?,
        })
    }
}
