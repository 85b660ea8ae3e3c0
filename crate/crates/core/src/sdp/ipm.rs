//! Infeasible-start primal-dual interior-point engine.
//!
//! The LMI in `z` is treated as the dual of the standard-form primal
//! `max -<C, X>  s.t.  <A_i, X> = c_i,  X >= 0`. Each iteration forms the
//! Nesterov-Todd scaling `W` with `W S W = X`, solves the Schur complement
//! system, and takes a Mehrotra predictor-corrector step.

use nalgebra::{Cholesky, SymmetricEigen};

use super::presolve::{presolve, Presolved, Reduced};
use super::{
    Certificate, IterationRecord, SdpBackend, SdpOptions, SdpProblem, SdpSolution, SdpStatus,
};
use crate::error::{Error, Result};
use crate::linalg::{Mat, SymMat, Vector};

/// Built-in dense solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

impl SdpBackend for InteriorPoint {
    fn name(&self) -> &str {
        "interior-point"
    }

    fn solve(&self, problem: &SdpProblem, options: &SdpOptions) -> Result<SdpSolution> {
        problem.validate()?;
        if !(options.tol > 0.0) || options.max_iters == 0 {
            return Err(Error::InvalidParameter("tol must be positive and max_iters nonzero".into()));
        }
        let reduced = match presolve(problem) {
            Presolved::Reduced(r) => r,
            Presolved::Decided { status, y, ray } => {
                let certificate = ray.map(|d| Certificate::Unbounded(d.as_slice().to_vec()));
                return Ok(finish(problem, y, None, status, 0, Vec::new(), certificate));
            }
        };
        let out = core_solve(&reduced, options);
        let y = reduced.lift(&out.z);
        let mut duals: Vec<SymMat> =
            problem.blocks.iter().map(|b| SymMat::zeros(b.dim())).collect();
        for (x, &j) in out.x.iter().zip(&reduced.kept) {
            duals[j] = sym(x);
        }
        let certificate = match out.certificate {
            Some(Ray::Dual(xs)) => {
                let mut full: Vec<SymMat> =
                    problem.blocks.iter().map(|b| SymMat::zeros(b.dim())).collect();
                for (x, &j) in xs.iter().zip(&reduced.kept) {
                    full[j] = sym(x);
                }
                Some(Certificate::Infeasible(full))
            }
            Some(Ray::Primal(dz)) => {
                Some(Certificate::Unbounded((&reduced.nullspace * dz).as_slice().to_vec()))
            }
            None => None,
        };
        Ok(finish(problem, y, Some(duals), out.status, out.iterations, out.trace, certificate))
    }
}

fn sym(m: &Mat) -> SymMat {
    SymMat::new(m.clone()).expect("square block")
}

fn finish(
    problem: &SdpProblem,
    y: Vector,
    duals: Option<Vec<SymMat>>,
    status: SdpStatus,
    iterations: usize,
    trace: Vec<IterationRecord>,
    certificate: Option<Certificate>,
) -> SdpSolution {
    let yv = y.as_slice().to_vec();
    let slack_blocks: Vec<SymMat> = problem.blocks.iter().map(|b| sym(&b.evaluate(&yv))).collect();
    let dual_blocks =
        duals.unwrap_or_else(|| problem.blocks.iter().map(|b| SymMat::zeros(b.dim())).collect());

    // equality multipliers from c - A^*(X) = E^T lambda in the least-squares sense
    let equality_duals = if problem.equalities.is_empty() {
        Vec::new()
    } else {
        let mut g = Vector::from_column_slice(&problem.objective);
        for (b, x) in problem.blocks.iter().zip(&dual_blocks) {
            for (i, a) in b.coefficients.iter().enumerate() {
                g[i] -= a.trace_prod(x);
            }
        }
        let rows = problem.equalities.len();
        let et = Mat::from_fn(problem.num_vars, rows, |k, r| problem.equalities[r].row[k]);
        let tol = 1e-12 * et.amax().max(1.0);
        et.svd(true, true)
            .solve(&g, tol)
            .map(|l| l.as_slice().to_vec())
            .unwrap_or_else(|_| vec![0.0; rows])
    };

    let primal_objective = problem.objective_value(&yv);
    let dual_objective = problem
        .equalities
        .iter()
        .zip(&equality_duals)
        .map(|(e, l)| e.rhs * l)
        .sum::<f64>()
        - problem
            .blocks
            .iter()
            .zip(&dual_blocks)
            .map(|(b, x)| b.constant.trace_prod(x))
            .sum::<f64>();
    let gap = if status == SdpStatus::Optimal || duals_present(&dual_blocks) {
        (primal_objective - dual_objective).abs()
    } else {
        0.0
    };

    SdpSolution {
        y: yv,
        slack_blocks,
        dual_blocks,
        equality_duals,
        status,
        gap,
        primal_objective,
        dual_objective,
        iterations,
        certificate,
        trace,
    }
}

fn duals_present(d: &[SymMat]) -> bool {
    d.iter().any(|x| x.as_mat().amax() > 0.0)
}

enum Ray {
    Dual(Vec<Mat>),
    Primal(Vector),
}

struct CoreOutput {
    z: Vector,
    x: Vec<Mat>,
    status: SdpStatus,
    iterations: usize,
    trace: Vec<IterationRecord>,
    certificate: Option<Ray>,
}

#[derive(Clone)]
struct Iterate {
    z: Vector,
    s: Vec<Mat>,
    x: Vec<Mat>,
}

struct Scaling {
    r: Mat,
    r_inv: Mat,
    w: Mat,
    lambda: Vector,
}

const INFEASIBILITY_TOL: f64 = 1e-8;
const STALL_STEP: f64 = 1e-9;
/// Lower bound on the centering parameter. Pure Mehrotra steps drift off the
/// central path and the recovered primal then converges only like sqrt(mu).
const SIGMA_MIN: f64 = 0.1;

fn inner(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

fn symmetrize(m: &mut Mat) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn nt_scaling(s: &Mat, x: &Mat) -> Option<Scaling> {
    let ls = Cholesky::new(s.clone())?.l();
    let lx = Cholesky::new(x.clone())?.l();
    let g = ls.transpose() * &lx;
    let svd = g.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let lambda = svd.singular_values;
    if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return None;
    }
    let inv_sqrt = Mat::from_diagonal(&lambda.map(|l| 1.0 / l.sqrt()));
    let r = &lx * v_t.transpose() * &inv_sqrt;
    let r_inv = &inv_sqrt * u.transpose() * ls.transpose();
    let mut w = &r * r.transpose();
    symmetrize(&mut w);
    Some(Scaling { r, r_inv, w, lambda })
}

/// Largest `alpha` with `p + alpha d >= 0`, infinite if `d` keeps `p` inside the cone.
fn max_step(p: &Mat, d: &Mat) -> Option<f64> {
    let l = Cholesky::new(p.clone())?.l();
    let half = l.solve_lower_triangular(d)?;
    let mut full = l.solve_lower_triangular(&half.transpose())?;
    symmetrize(&mut full);
    let min = SymmetricEigen::new(full).eigenvalues.min();
    Some(if min >= 0.0 { f64::INFINITY } else { -1.0 / min })
}

fn core_solve(red: &Reduced, opts: &SdpOptions) -> CoreOutput {
    let blocks = &red.blocks;
    let c = &red.objective;
    let m = c.len();
    let n_total: usize = blocks.iter().map(|b| b.dim).sum();

    let norm_cc = blocks.iter().map(|b| b.c.norm_squared()).sum::<f64>().sqrt();
    let norm_c = c.norm();

    let eta = 1.0 + blocks.iter().map(|b| b.c.norm()).fold(0.0, f64::max);
    let mut a_norm = vec![0.0f64; m];
    for b in blocks {
        for (k, a) in &b.terms {
            a_norm[*k] = a_norm[*k].max(a.norm());
        }
    }
    let xi_ratio = (0..m).map(|k| (1.0 + c[k].abs()) / (1.0 + a_norm[k])).fold(0.0, f64::max);

    let mut it = Iterate {
        z: Vector::zeros(m),
        s: blocks.iter().map(|b| Mat::identity(b.dim, b.dim) * eta).collect(),
        x: blocks
            .iter()
            .map(|b| {
                let d = b.dim as f64;
                let xi = 10f64.max(d.sqrt()).max(d * xi_ratio);
                Mat::identity(b.dim, b.dim) * xi
            })
            .collect(),
    };

    let mut trace = Vec::new();
    let mut best: Option<(f64, Iterate)> = None;
    let mut steps = (0.0, 0.0);
    let mut stalled = 0usize;

    let adjoint_all = |z: &Vector| -> Vec<Mat> { blocks.iter().map(|b| b.adjoint(z)).collect() };
    let apply = |xs: &[Mat]| -> Vector {
        let mut v = Vector::zeros(m);
        for (b, x) in blocks.iter().zip(xs) {
            for (k, a) in &b.terms {
                v[*k] += inner(a, x);
            }
        }
        v
    };

    let fail = |status, iterations, best: Option<(f64, Iterate)>, it: Iterate, trace| {
        let chosen = best.map(|(_, b)| b).unwrap_or(it);
        CoreOutput { z: chosen.z, x: chosen.x, status, iterations, trace, certificate: None }
    };

    for iter in 0..=opts.max_iters {
        let az = adjoint_all(&it.z);
        let rp: Vec<Mat> = blocks
            .iter()
            .zip(&it.s)
            .zip(&az)
            .map(|((b, s), a)| s - &b.c - a)
            .collect();
        let ax = apply(&it.x);
        let rd = c - &ax;

        let cx: f64 = blocks.iter().zip(&it.x).map(|(b, x)| inner(&b.c, x)).sum();
        let pobj = c.dot(&it.z) + red.offset;
        let dobj = -cx + red.offset;
        let compl: f64 = it.s.iter().zip(&it.x).map(|(s, x)| inner(s, x)).sum();
        let shifted_cx: f64 = blocks
            .iter()
            .zip(&rp)
            .zip(&it.x)
            .map(|((b, r), x)| inner(&(&b.c + r), x))
            .sum();
        let shifted_primal = (c - &rd).dot(&it.z) + red.offset;
        let shifted_dual = -shifted_cx + red.offset;

        let pinf = rp.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / (1.0 + norm_cc);
        let dinf = rd.norm() / (1.0 + norm_c);
        let scale = 1.0 + pobj.abs().min(dobj.abs());
        let rel_gap = (pobj - dobj).abs() / scale;
        let rel_compl = compl / scale;

        trace.push(IterationRecord {
            primal_objective: pobj,
            dual_objective: dobj,
            shifted_primal,
            shifted_dual,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            complementarity: compl,
            step_primal: steps.0,
            step_dual: steps.1,
        });
        if opts.verbose {
            log::info!(
                "iter {iter:3} pobj {pobj:+.8e} dobj {dobj:+.8e} pinf {pinf:.2e} dinf {dinf:.2e} compl {compl:.2e}"
            );
        }

        let merit = pinf.max(dinf).max(rel_gap).max(rel_compl);
        if best.as_ref().is_none_or(|(bm, _)| merit < *bm) {
            best = Some((merit, it.clone()));
        }
        if pinf <= opts.tol && dinf <= opts.tol && rel_gap <= opts.tol && rel_compl <= opts.tol {
            return CoreOutput {
                z: it.z,
                x: it.x,
                status: SdpStatus::Optimal,
                iterations: iter,
                trace,
                certificate: None,
            };
        }

        if iter >= 3 {
            let t = -cx;
            if t > 0.0 && pinf > opts.tol && ax.norm() / t <= INFEASIBILITY_TOL {
                let xs = it.x.iter().map(|x| x / t).collect();
                return CoreOutput {
                    z: it.z,
                    x: it.x,
                    status: SdpStatus::Infeasible,
                    iterations: iter,
                    trace,
                    certificate: Some(Ray::Dual(xs)),
                };
            }
            let t = -c.dot(&it.z);
            if t > 0.0 && dinf > opts.tol {
                let worst = az
                    .iter()
                    .map(|a| {
                        let mut a = a.clone();
                        symmetrize(&mut a);
                        (-SymmetricEigen::new(a).eigenvalues.min()).max(0.0)
                    })
                    .fold(0.0, f64::max);
                if worst / t <= INFEASIBILITY_TOL {
                    let dz = &it.z / t;
                    return CoreOutput {
                        z: it.z,
                        x: it.x,
                        status: SdpStatus::Unbounded,
                        iterations: iter,
                        trace,
                        certificate: Some(Ray::Primal(dz)),
                    };
                }
            }
        }
        if iter == opts.max_iters {
            break;
        }

        let Some(scalings) = blocks
            .iter()
            .zip(&it.s)
            .zip(&it.x)
            .map(|((_, s), x)| nt_scaling(s, x))
            .collect::<Option<Vec<_>>>()
        else {
            return fail(SdpStatus::NumericalFailure, iter, best, it, trace);
        };

        // Schur complement M_ik = sum_j <A_ji, W_j A_jk W_j>
        let mut schur = Mat::zeros(m, m);
        for (b, sc) in blocks.iter().zip(&scalings) {
            for (k, ak) in &b.terms {
                let wak = &sc.w * ak * &sc.w;
                for (i, ai) in &b.terms {
                    if i <= k {
                        schur[(*i, *k)] += inner(ai, &wak);
                    }
                }
            }
        }
        for k in 0..m {
            for i in 0..k {
                schur[(k, i)] = schur[(i, k)];
            }
        }
        let Some(chol) = factor(schur) else {
            return fail(SdpStatus::NumericalFailure, iter, best, it, trace);
        };
        let wrw: Vec<Mat> = scalings.iter().zip(&rp).map(|(sc, r)| &sc.w * r * &sc.w).collect();

        let direction = |h: &[Mat]| -> (Vector, Vec<Mat>, Vec<Mat>) {
            let mut rhs = -&rd;
            for ((b, hj), wr) in blocks.iter().zip(h).zip(&wrw) {
                let sum = hj + wr;
                for (k, a) in &b.terms {
                    rhs[*k] += inner(a, &sum);
                }
            }
            let dz = chol.solve(&rhs);
            let ds: Vec<Mat> = blocks.iter().zip(&rp).map(|(b, r)| b.adjoint(&dz) - r).collect();
            let dx: Vec<Mat> = h
                .iter()
                .zip(&ds)
                .zip(&scalings)
                .map(|((hj, d), sc)| {
                    let mut t = hj - &sc.w * d * &sc.w;
                    symmetrize(&mut t);
                    t
                })
                .collect();
            (dz, ds, dx)
        };

        let step_len = |it: &Iterate, ds: &[Mat], dx: &[Mat]| -> Option<(f64, f64)> {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for j in 0..blocks.len() {
                ap = ap.min(max_step(&it.s[j], &ds[j])?);
                ad = ad.min(max_step(&it.x[j], &dx[j])?);
            }
            Some((ap, ad))
        };

        // predictor
        let h_aff: Vec<Mat> = it.x.iter().map(|x| -x).collect();
        let (_, ds_a, dx_a) = direction(&h_aff);
        let Some((ap_max, ad_max)) = step_len(&it, &ds_a, &dx_a) else {
            return fail(SdpStatus::NumericalFailure, iter, best, it, trace);
        };
        let ap = ap_max.min(1.0);
        let ad = ad_max.min(1.0);
        let mu = compl / n_total as f64;
        let mu_aff: f64 = it
            .s
            .iter()
            .zip(&it.x)
            .zip(ds_a.iter().zip(&dx_a))
            .map(|((s, x), (ds, dx))| inner(&(s + ds * ap), &(x + dx * ad)))
            .sum::<f64>()
            / n_total as f64;
        let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3).max(SIGMA_MIN) } else { 0.0 };

        // corrector
        let h: Vec<Mat> = scalings
            .iter()
            .zip(ds_a.iter().zip(&dx_a))
            .map(|(sc, (ds, dx))| {
                let dxt = &sc.r_inv * dx * sc.r_inv.transpose();
                let dst = sc.r.transpose() * ds * &sc.r;
                let mut prod = &dxt * &dst;
                symmetrize(&mut prod);
                let d = sc.lambda.len();
                let t = Mat::from_fn(d, d, |i, j| {
                    let base = if i == j { sigma * mu - sc.lambda[i] * sc.lambda[i] } else { 0.0 };
                    2.0 * (base - prod[(i, j)]) / (sc.lambda[i] + sc.lambda[j])
                });
                let mut hj = &sc.r * t * sc.r.transpose();
                symmetrize(&mut hj);
                hj
            })
            .collect();
        let (dz, ds, dx) = direction(&h);
        let Some((ap_max, ad_max)) = step_len(&it, &ds, &dx) else {
            return fail(SdpStatus::NumericalFailure, iter, best, it, trace);
        };
        let tau = 0.9 + 0.09 * ap.min(ad);
        let ap = (tau * ap_max).min(1.0);
        let ad = (tau * ad_max).min(1.0);
        steps = (ap, ad);

        it.z += &dz * ap;
        for j in 0..blocks.len() {
            it.s[j] += &ds[j] * ap;
            it.x[j] += &dx[j] * ad;
            symmetrize(&mut it.s[j]);
            symmetrize(&mut it.x[j]);
        }

        if ap.max(ad) < STALL_STEP {
            stalled += 1;
            if stalled >= 3 {
                return fail(SdpStatus::NumericalFailure, iter + 1, best, it, trace);
            }
        } else {
            stalled = 0;
        }
    }
    fail(SdpStatus::NumericalFailure, opts.max_iters, best, it, trace)
}

/// Cholesky of the Schur complement, with a small diagonal shift when it is
/// numerically singular.
fn factor(m: Mat) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let diag_max = m.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut shift = 1e-14 * diag_max;
    while shift <= 1e-6 * diag_max {
        let shifted = &m + Mat::identity(m.nrows(), m.ncols()) * shift;
        if let Some(c) = Cholesky::new(shifted) {
            return Some(c);
        }
        shift *= 100.0;
    }
    None
}
