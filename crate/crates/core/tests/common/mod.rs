#![allow(dead_code)]

use dataconform::linalg::{spectral_radius, Mat, SymMat};
use dataconform::lqr::LqrWeights;
use dataconform::sdp::SdpProblem;
use dataconform::sysid::LinearModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random LMI problem with a known optimum, built from a complementary
/// pair `S* X* = 0` and a random primal point `y*`.
pub struct Constructed {
    pub problem: SdpProblem,
    pub y_star: Vec<f64>,
    pub optimum: f64,
}

fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMat {
    let g = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    SymMat::new(&g + g.transpose()).unwrap()
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let g = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    g.qr().q()
}

pub fn constructed_sdp(seed: u64) -> Constructed {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(2..=6);
    let n_blocks = rng.gen_range(1..=3);
    let y_star: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut objective = vec![0.0; m];
    let mut blocks = Vec::new();
    for _ in 0..n_blocks {
        let d = rng.gen_range(1..=4);
        let q = random_orthogonal(&mut rng, d);
        let rank_s = rng.gen_range(0..=d);
        let mut sd = vec![0.0; d];
        let mut xd = vec![0.0; d];
        for i in 0..d {
            if i < rank_s {
                sd[i] = rng.gen_range(0.5..2.0);
            } else {
                xd[i] = rng.gen_range(0.5..2.0);
            }
        }
        let s_star = SymMat::from_diag(&sd).congruence(&q);
        let x_star = SymMat::from_diag(&xd).congruence(&q);
        let coeffs: Vec<SymMat> = (0..m).map(|_| random_sym(&mut rng, d)).collect();
        let mut c = s_star.as_mat().clone();
        for (a, y) in coeffs.iter().zip(&y_star) {
            c -= a.as_mat() * *y;
        }
        for (o, a) in objective.iter_mut().zip(&coeffs) {
            *o += a.trace_prod(&x_star);
        }
        blocks.push((SymMat::new(c).unwrap(), coeffs));
    }
    let mut problem = SdpProblem::new(objective);
    for (c, coeffs) in blocks {
        problem.add_block(c, coeffs).unwrap();
    }
    let optimum = problem.objective_value(&y_star);
    Constructed { problem, y_star, optimum }
}

pub fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> SymMat {
    let g = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    SymMat::new(&g * g.transpose() + Mat::identity(n, n) * 0.1).unwrap()
}

fn controllable(a: &Mat, b: &Mat) -> bool {
    let n = a.nrows();
    let mut blocks = b.clone();
    let mut c = b.clone();
    for _ in 1..n {
        blocks = a * blocks;
        c = Mat::from_fn(n, c.ncols() + b.ncols(), |i, j| if j < c.ncols() { c[(i, j)] } else { blocks[(i, j - c.ncols())] });
    }
    c.svd(false, false).singular_values.iter().filter(|s| **s > 1e-6).count() == n
}

/// Random controllable model with spectral radius of `A` below `max_radius`.
pub fn random_model(rng: &mut ChaCha8Rng, max_radius: f64) -> LinearModel {
    loop {
        let rx = rng.gen_range(1..=4);
        let ru = rng.gen_range(1..=2);
        let a0 = Mat::from_fn(rx, rx, |_, _| rng.gen_range(-1.0..1.0));
        let rho = spectral_radius(&a0).unwrap();
        if rho < 1e-3 {
            continue;
        }
        let a = a0 * (rng.gen_range(0.1..max_radius) / rho);
        let b = Mat::from_fn(rx, ru, |_, _| rng.gen_range(-1.0..1.0));
        if !controllable(&a, &b) {
            continue;
        }
        let w = random_pd(rng, rx).scale(0.2);
        return LinearModel::new(a, b, w).unwrap();
    }
}

/// Random model, weights and a gain that makes the loop Schur stable.
pub fn random_stable_loop(rng: &mut ChaCha8Rng) -> (LinearModel, LqrWeights, Mat) {
    loop {
        let model = random_model(rng, 1.1);
        let (rx, ru) = (model.state_dim(), model.input_dim());
        let k = Mat::from_fn(ru, rx, |_, _| rng.gen_range(-0.5..0.5));
        if spectral_radius(&model.closed_loop(&k)).unwrap() >= 0.97 {
            continue;
        }
        let weights = LqrWeights::new(random_pd(rng, rx), random_pd(rng, ru), random_pd(rng, ru)).unwrap();
        return (model, weights, k);
    }
}

pub fn benchmark_weights() -> LqrWeights {
    LqrWeights::identity(2, SymMat::from_diag(&[0.5])).unwrap()
}
