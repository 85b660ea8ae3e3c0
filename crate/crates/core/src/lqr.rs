//! Discrete Lyapunov and Riccati solvers and the two Gramian forms of the LQR cost.
//!
//! These are the classical references the SDP path is checked against.

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Mat, SymMat};
use crate::sysid::LinearModel;

/// Riccati value-iteration stopping threshold.
pub const RICCATI_TOL: f64 = 1e-12;
/// Riccati value-iteration cap.
pub const RICCATI_MAX_ITERS: usize = 1_000_000;

const SMITH_MAX_DOUBLINGS: usize = 200;

/// LQR weights `Q >= 0`, `R > 0` and the exploration covariance `V > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    pub q: SymMat,
    pub r: SymMat,
    pub v: SymMat,
}

impl LqrWeights {
    pub fn new(q: SymMat, r: SymMat, v: SymMat) -> Result<Self> {
        if r.dim() != v.dim() {
            return Err(Error::Dimension("R and V must share the input dimension".into()));
        }
        if !crate::linalg::is_psd(&q, crate::linalg::PSD_TOL)? {
            return Err(Error::NotPsd {
                min_eig: q.min_eigenvalue()?,
            });
        }
        if r.min_eigenvalue()? <= 0.0 {
            return Err(Error::NotPd("R must be positive definite".into()));
        }
        if v.min_eigenvalue()? <= 0.0 {
            return Err(Error::NotPd("V must be positive definite".into()));
        }
        Ok(Self { q, r, v })
    }

    /// `Q = I`, `R = I` with the given exploration covariance.
    pub fn identity(state_dim: usize, v: SymMat) -> Result<Self> {
        let ru = v.dim();
        Self::new(SymMat::identity(state_dim), SymMat::identity(ru), v)
    }
}

/// Observability-type `P` and controllability-type `Sigma` Gramians of one closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianPair {
    pub p: SymMat,
    pub sigma: SymMat,
}

impl GramianPair {
    pub fn of(model: &LinearModel, k: &Mat, weights: &LqrWeights) -> Result<Self> {
        Ok(Self {
            p: solve_dlyap_observability(model, k, weights)?,
            sigma: solve_dlyap_controllability(model, k, &weights.v)?,
        })
    }
}

/// Solves `X = F X F^T + G` for Schur-stable `F` by Smith doubling.
pub fn solve_stein(f: &Mat, g: &SymMat) -> Result<SymMat> {
    let rho = spectral_radius(f)?;
    if rho >= 1.0 {
        return Err(Error::Unstable { spectral_radius: rho });
    }
    let mut x = g.as_mat().clone();
    let mut a = f.clone();
    for _ in 0..SMITH_MAX_DOUBLINGS {
        let inc = &a * &x * a.transpose();
        let done = inc.amax() <= f64::EPSILON * 1e-2 * x.amax().max(f64::MIN_POSITIVE);
        x += inc;
        if done || a.amax() == 0.0 {
            return Ok(SymMat::symmetrize(x));
        }
        a = &a * &a;
    }
    Err(Error::NonConvergence {
        iterations: SMITH_MAX_DOUBLINGS,
        residual: a.amax(),
    })
}

fn check_gain(model: &LinearModel, k: &Mat) -> Result<()> {
    if k.nrows() != model.input_dim() || k.ncols() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "gain is {}x{}, expected {}x{}",
            k.nrows(),
            k.ncols(),
            model.input_dim(),
            model.state_dim()
        )));
    }
    Ok(())
}

/// Closed-loop state covariance: `Sigma = (A+BK) Sigma (A+BK)^T + W + B V B^T`.
pub fn solve_dlyap_controllability(model: &LinearModel, k: &Mat, v: &SymMat) -> Result<SymMat> {
    check_gain(model, k)?;
    if v.dim() != model.input_dim() {
        return Err(Error::Dimension("V must match the input dimension".into()));
    }
    let forcing = model.w.add(&v.congruence(&model.b));
    solve_stein(&model.closed_loop(k), &forcing)
}

/// Cost Gramian: `P = (A+BK)^T P (A+BK) + Q + K^T R K`.
pub fn solve_dlyap_observability(model: &LinearModel, k: &Mat, weights: &LqrWeights) -> Result<SymMat> {
    check_gain(model, k)?;
    let stage = weights.q.add(&weights.r.congruence(&k.transpose()));
    solve_stein(&model.closed_loop(k).transpose(), &stage)
}

/// Optimal gain from `P`: `K = -(R + B^T P B)^{-1} B^T P A`.
pub fn riccati_gain(model: &LinearModel, weights: &LqrWeights, p: &SymMat) -> Result<Mat> {
    let bt_p = model.b.transpose() * p.as_mat();
    let s = SymMat::symmetrize(weights.r.as_mat() + &bt_p * &model.b);
    Ok(-s.solve_pd(&(&bt_p * &model.a))?)
}

/// Discrete algebraic Riccati equation by value iteration from `P = Q`.
pub fn solve_riccati(model: &LinearModel, weights: &LqrWeights) -> Result<(Mat, SymMat)> {
    if weights.q.dim() != model.state_dim() || weights.r.dim() != model.input_dim() {
        return Err(Error::Dimension("weights do not match model dimensions".into()));
    }
    let a = &model.a;
    let mut p = weights.q.clone();
    let mut change = f64::INFINITY;
    for _ in 0..RICCATI_MAX_ITERS {
        let k = riccati_gain(model, weights, &p)?;
        // P+ = Q + A^T P (A + B K)
        let next = SymMat::symmetrize(weights.q.as_mat() + a.transpose() * p.as_mat() * model.closed_loop(&k));
        change = (next.as_mat() - p.as_mat()).amax();
        let scale = next.as_mat().amax().max(1.0);
        p = next;
        if change <= RICCATI_TOL * scale {
            let k = riccati_gain(model, weights, &p)?;
            let rho = spectral_radius(&model.closed_loop(&k))?;
            if rho >= 1.0 {
                return Err(Error::Unstable { spectral_radius: rho });
            }
            return Ok((k, p));
        }
    }
    Err(Error::NonConvergence {
        iterations: RICCATI_MAX_ITERS,
        residual: change,
    })
}

/// `J = tr(P [W + B V B^T])`.
pub fn cost_p_param(model: &LinearModel, weights: &LqrWeights, p: &SymMat) -> Result<f64> {
    if p.dim() != model.state_dim() || weights.v.dim() != model.input_dim() {
        return Err(Error::Dimension("P or V does not match the model".into()));
    }
    let forcing = model.w.add(&weights.v.congruence(&model.b));
    Ok(p.trace_prod(&forcing))
}

/// `J = tr(Q Sigma) + tr(R K Sigma K^T)`.
pub fn cost_sigma_param(weights: &LqrWeights, k: &Mat, sigma: &SymMat) -> Result<f64> {
    if sigma.dim() != weights.q.dim() || k.ncols() != sigma.dim() || k.nrows() != weights.r.dim() {
        return Err(Error::Dimension("Sigma, K or weights dimensions disagree".into()));
    }
    Ok(weights.q.trace_prod(sigma) + weights.r.trace_prod(&sigma.congruence(k)))
}

/// Infinite-horizon average cost of gain `K` on `model` (Sigma route).
pub fn closed_loop_cost(model: &LinearModel, k: &Mat, weights: &LqrWeights) -> Result<f64> {
    let sigma = solve_dlyap_controllability(model, k, &weights.v)?;
    cost_sigma_param(weights, k, &sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mat_from_rows;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn reference_model() -> LinearModel {
        LinearModel::new(
            mat_from_rows(&[vec![0.98, 0.1], vec![0.0, 0.95]]).unwrap(),
            mat_from_rows(&[vec![0.0], vec![0.1]]).unwrap(),
            SymMat::from_diag(&[0.2, 0.1]),
        )
        .unwrap()
    }

    fn k0() -> Mat {
        mat_from_rows(&[vec![-0.2, -9.0]]).unwrap()
    }

    fn weights() -> LqrWeights {
        LqrWeights::identity(2, SymMat::from_diag(&[0.5])).unwrap()
    }

    /// Truncated series `sum_k F^k G F^kT`.
    fn series_oracle(f: &Mat, g: &Mat, terms: usize) -> Mat {
        let mut acc = Mat::zeros(g.nrows(), g.ncols());
        let mut term = g.clone();
        for _ in 0..terms {
            acc += &term;
            term = f * term * f.transpose();
        }
        acc
    }

    #[test]
    fn controllability_trivial_cases() {
        let m = LinearModel::new(
            Mat::zeros(2, 2),
            Mat::zeros(2, 1),
            SymMat::identity(2),
        )
        .unwrap();
        let s = solve_dlyap_controllability(&m, &Mat::zeros(1, 2), &SymMat::from_diag(&[3.0])).unwrap();
        assert!((s.as_mat() - Mat::identity(2, 2)).amax() < 1e-15);

        // a + b k = 0.5, w + b v b = 0.75 -> Sigma = 1
        let m = LinearModel::new(scalar(0.5), scalar(1.0), SymMat::from_diag(&[0.25])).unwrap();
        let s = solve_dlyap_controllability(&m, &scalar(0.0), &SymMat::from_diag(&[0.5])).unwrap();
        assert!((s[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn controllability_matches_series_for_initial_law() {
        let m = reference_model();
        let s = solve_dlyap_controllability(&m, &k0(), &SymMat::from_diag(&[0.5])).unwrap();
        let forcing = m.w.add(&SymMat::from_diag(&[0.5]).congruence(&m.b));
        let oracle = series_oracle(&m.closed_loop(&k0()), forcing.as_mat(), 10_000);
        assert!((s.as_mat() - &oracle).amax() < 1e-10 * oracle.amax());
        let resid = m.closed_loop(&k0()) * s.as_mat() * m.closed_loop(&k0()).transpose() + forcing.as_mat()
            - s.as_mat();
        assert!(resid.norm() <= 1e-10 * s.frobenius_norm());
    }

    #[test]
    fn observability_trivial_cases() {
        let m = LinearModel::new(Mat::zeros(2, 2), mat_from_rows(&[vec![1.0], vec![0.0]]).unwrap(), SymMat::zeros(2)).unwrap();
        let w = LqrWeights::new(SymMat::from_diag(&[2.0, 3.0]), SymMat::identity(1), SymMat::identity(1)).unwrap();
        let p = solve_dlyap_observability(&m, &Mat::zeros(1, 2), &w).unwrap();
        assert!((p.as_mat() - w.q.as_mat()).amax() < 1e-15);

        let m = LinearModel::new(scalar(0.5), scalar(1.0), SymMat::zeros(1)).unwrap();
        let w = LqrWeights::new(SymMat::identity(1), SymMat::identity(1), SymMat::identity(1)).unwrap();
        let p = solve_dlyap_observability(&m, &scalar(0.0), &w).unwrap();
        assert!((p[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn observability_matches_series_for_initial_law() {
        let m = reference_model();
        let w = weights();
        let p = solve_dlyap_observability(&m, &k0(), &w).unwrap();
        let stage = w.q.add(&w.r.congruence(&k0().transpose()));
        let oracle = series_oracle(&m.closed_loop(&k0()).transpose(), stage.as_mat(), 10_000);
        assert!((p.as_mat() - &oracle).amax() < 1e-10 * oracle.amax());
    }

    #[test]
    fn unstable_loop_is_rejected() {
        let m = reference_model();
        let err = solve_dlyap_controllability(&m, &Mat::zeros(1, 2), &SymMat::identity(1));
        // open loop has rho = 0.98, stable
        assert!(err.is_ok());
        let k = mat_from_rows(&[vec![0.0, 20.0]]).unwrap();
        assert!(matches!(
            solve_dlyap_controllability(&m, &k, &SymMat::identity(1)),
            Err(Error::Unstable { spectral_radius }) if spectral_radius > 1.0
        ));
    }

    /// Plain value iteration run to a tighter threshold than the solver.
    fn value_iteration_oracle(m: &LinearModel, w: &LqrWeights) -> (Mat, Mat) {
        let mut p = w.q.as_mat().clone();
        loop {
            let btp = m.b.transpose() * &p;
            let s = w.r.as_mat() + &btp * &m.b;
            let k = -s.clone().try_inverse().unwrap() * &btp * &m.a;
            let next = w.q.as_mat() + m.a.transpose() * &p * &m.a + m.a.transpose() * &p * &m.b * &k;
            let delta = (&next - &p).amax();
            p = next;
            if delta < 1e-13 {
                let btp = m.b.transpose() * &p;
                let s = w.r.as_mat() + &btp * &m.b;
                let k = -s.try_inverse().unwrap() * &btp * &m.a;
                return (k, p);
            }
        }
    }

    #[test]
    fn riccati_without_dynamics() {
        let m = LinearModel::new(Mat::zeros(2, 2), mat_from_rows(&[vec![1.0], vec![0.5]]).unwrap(), SymMat::identity(2)).unwrap();
        let (k, p) = solve_riccati(&m, &weights()).unwrap();
        assert!(k.amax() == 0.0);
        assert!((p.as_mat() - Mat::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn riccati_scalar_golden_ratio() {
        let m = LinearModel::new(scalar(1.0), scalar(1.0), SymMat::zeros(1)).unwrap();
        let w = LqrWeights::new(SymMat::identity(1), SymMat::identity(1), SymMat::identity(1)).unwrap();
        let (k, p) = solve_riccati(&m, &w).unwrap();
        let (ko, po) = value_iteration_oracle(&m, &w);
        assert!((p[(0, 0)] - po[(0, 0)]).abs() < 1e-10);
        assert!((p[(0, 0)] - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-10);
        assert!((k[(0, 0)] - ko[(0, 0)]).abs() < 1e-10);
    }

    #[test]
    fn riccati_matches_oracle_on_reference_model() {
        let m = reference_model();
        let w = weights();
        let (k, p) = solve_riccati(&m, &w).unwrap();
        let (ko, po) = value_iteration_oracle(&m, &w);
        assert!((&k - &ko).amax() < 1e-8);
        assert!((p.as_mat() - &po).amax() < 1e-8 * po.amax());
        let ricc = w.q.as_mat() + m.a.transpose() * p.as_mat() * m.closed_loop(&k) - p.as_mat();
        assert!(ricc.amax() < 1e-10 * p.as_mat().amax());
        assert!(spectral_radius(&m.closed_loop(&k)).unwrap() < 1.0);
    }

    #[test]
    fn cost_examples() {
        // W = 0 and no input channel: nothing excites the loop
        let m = LinearModel::new(Mat::zeros(2, 2), Mat::zeros(2, 1), SymMat::zeros(2)).unwrap();
        assert_eq!(cost_p_param(&m, &weights(), &SymMat::identity(2)).unwrap(), 0.0);

        let pm = reference_model();
        let c = cost_p_param(&pm, &weights(), &SymMat::identity(2)).unwrap();
        assert!((c - 0.305).abs() < 1e-15);

        assert_eq!(cost_sigma_param(&weights(), &Mat::zeros(1, 2), &SymMat::zeros(2)).unwrap(), 0.0);
        let c = cost_sigma_param(&weights(), &Mat::zeros(1, 2), &SymMat::from_diag(&[2.0, 3.0])).unwrap();
        assert!((c - 5.0).abs() < 1e-15);
    }

    #[test]
    fn gramian_costs_agree_for_initial_law() {
        let m = reference_model();
        let w = weights();
        let g = GramianPair::of(&m, &k0(), &w).unwrap();
        let jp = cost_p_param(&m, &w, &g.p).unwrap();
        let js = cost_sigma_param(&w, &k0(), &g.sigma).unwrap();
        assert!((jp - js).abs() <= 1e-8 * (1.0 + js.abs()));
    }

    #[test]
    fn riccati_gain_beats_perturbations() {
        let m = reference_model();
        let w = weights();
        let (k, _) = solve_riccati(&m, &w).unwrap();
        let best = closed_loop_cost(&m, &k, &w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tried = 0;
        while tried < 20 {
            let dk = Mat::from_fn(1, 2, |_, _| rng.gen_range(-0.5..0.5));
            let kp = &k + dk;
            if spectral_radius(&m.closed_loop(&kp)).unwrap() >= 1.0 {
                continue;
            }
            tried += 1;
            assert!(best <= closed_loop_cost(&m, &kp, &w).unwrap() + 1e-12);
        }
    }

    #[test]
    fn weights_validation() {
        assert!(LqrWeights::new(SymMat::identity(2), SymMat::zeros(1), SymMat::identity(1)).is_err());
        assert!(LqrWeights::new(SymMat::from_diag(&[1.0, -1.0]), SymMat::identity(1), SymMat::identity(1)).is_err());
        assert!(LqrWeights::new(SymMat::identity(2), SymMat::identity(1), SymMat::zeros(1)).is_err());
    }
}
