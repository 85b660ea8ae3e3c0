mod common;

use common::{benchmark_weights, random_model, random_pd};
use dataconform::config::RunConfig;
use dataconform::linalg::{max_abs_diff, Mat, SymMat, Vector};
use dataconform::lmi::{build, build_certainty_equivalence, build_standard, recover_design, DesignSpec, Formulation};
use dataconform::lqr::{solve_riccati, LqrWeights};
use dataconform::regularizers::design_covariance;
use dataconform::sdp::{solve_sdp, SdpOptions};
use dataconform::simulator::{benchmark_initial_law, benchmark_model, run_repetition, simulate, ControlLaw, Plant};
use dataconform::sysid::{empirical_moments, least_squares_id, LinearModel, TrajectoryData};
use dataconform::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Largest entry in absolute value.
fn inf_norm(m: &Mat) -> f64 {
    m.amax()
}

fn config(name: &str) -> RunConfig {
    RunConfig::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)).unwrap()
}

fn benchmark_data(seed: u64) -> TrajectoryData {
    simulate(&Plant::linear(benchmark_model()), &benchmark_initial_law(), &Vector::zeros(2), 2000, seed).unwrap()
}

#[test]
fn sdp_gain_matches_riccati_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..30 {
        let model = random_model(&mut rng, 1.2);
        let (rx, ru) = (model.state_dim(), model.input_dim());
        let weights = LqrWeights::new(random_pd(&mut rng, rx), random_pd(&mut rng, ru), random_pd(&mut rng, ru)).unwrap();
        let (k_ric, _) = solve_riccati(&model, &weights).unwrap();
        let spec = DesignSpec::new(model, weights, None, Formulation::Standard).unwrap();
        let r = dataconform::lmi::design(&spec, &SdpOptions::default()).unwrap();
        let err = inf_norm(&(&r.k - &k_ric));
        assert!(err <= 1e-5, "case {case} ({rx}x{ru}): |K_sdp - K_ric| = {err:.3e}");
    }
}

fn dominates(upper: &SymMat, lower: &SymMat) -> bool {
    upper.sub(lower).min_eigenvalue().unwrap() >= -1e-6 * (1.0 + lower.frobenius_norm())
}

#[test]
fn auxiliary_blocks_dominate_their_quadratic_forms() {
    let data = benchmark_data(3);
    let weights = benchmark_weights();
    let m = empirical_moments(&data).unwrap();
    for f in [
        Formulation::CertaintyEquivalence,
        Formulation::StateBand { eps: 0.3 },
        Formulation::StateRegularized { gamma_prime: 20.0 },
        Formulation::JointRegularized { gamma: 10.0 },
    ] {
        let spec = DesignSpec::from_data(&data, weights.clone(), f).unwrap();
        let problem = build(&spec).unwrap();
        let sol = solve_sdp(&problem.sdp, &SdpOptions::default()).unwrap();
        for (j, s) in sol.slack_blocks.iter().enumerate() {
            assert!(s.min_eigenvalue().unwrap() >= -1e-7, "{}: slack {j} not PSD", f.label());
        }
        let r = recover_design(&problem, &sol, &spec).unwrap();
        let sigma_inv = r.sigma_star.inverse_pd().unwrap();
        assert!(dominates(&r.aux_blocks["Z0"], &r.sigma_star.congruence(&r.k)), "{}", f.label());
        if let Some(z) = r.aux_blocks.get("Z_prime") {
            let d = r.sigma_star.sub(&m.sigma_data);
            assert!(dominates(z, &SymMat::new(d.as_mat() * d.as_mat()).unwrap()));
        }
        if let Some(z1) = r.aux_blocks.get("Z1") {
            assert!(dominates(z1, &design_covariance(&r.sigma_star, &r.k, &weights.v).unwrap()));
            let off = &r.l_star - m.h_data.transpose() * m.sigma_data.solve_pd(r.sigma_star.as_mat()).unwrap();
            assert!(dominates(&r.aux_blocks["Z2"], &sigma_inv.congruence(&off)));
            assert!(dominates(&r.aux_blocks["Z3"], &sigma_inv));
        }
    }
}

#[test]
fn noiseless_data_reproduces_the_model_based_problem() {
    let mut truth = benchmark_model();
    truth.w = SymMat::zeros(2);
    let data = simulate(&Plant::linear(truth.clone()), &benchmark_initial_law(), &Vector::from_vec(vec![1.0, -1.0]), 200, 9).unwrap();
    let weights = benchmark_weights();
    let ce = build_certainty_equivalence(&data, &weights).unwrap().sdp;
    let standard = build_standard(&truth, &weights).unwrap().sdp;
    assert_eq!(ce.num_vars, standard.num_vars);
    assert_eq!(ce.objective, standard.objective);
    assert_eq!(ce.blocks.len(), standard.blocks.len());
    for (a, b) in ce.blocks.iter().zip(&standard.blocks) {
        assert!(max_abs_diff(a.constant.as_mat(), b.constant.as_mat()) < 1e-10);
        for (ca, cb) in a.coefficients.iter().zip(&b.coefficients) {
            assert!(max_abs_diff(ca.as_mat(), cb.as_mat()) < 1e-10);
        }
    }
}

#[test]
fn certainty_equivalence_gain_solves_the_identified_riccati_equation() {
    let weights = benchmark_weights();
    for seed in [1, 2, 3] {
        let data = benchmark_data(seed);
        let (k_id, _) = solve_riccati(&least_squares_id(&data).unwrap(), &weights).unwrap();
        let spec = DesignSpec::from_data(&data, weights.clone(), Formulation::CertaintyEquivalence).unwrap();
        let k = dataconform::lmi::design(&spec, &SdpOptions::default()).unwrap().k;
        assert!(inf_norm(&(&k - &k_id)) <= 1e-5, "seed {seed}: {k} vs {k_id}");
    }
}

#[test]
fn certainty_equivalence_gain_approaches_the_true_gain_with_more_data() {
    let weights = benchmark_weights();
    let (k_true, _) = solve_riccati(&benchmark_model(), &weights).unwrap();
    let median_error = |horizon: usize| {
        let mut errs: Vec<f64> = (0..21u64)
            .map(|seed| {
                let data = simulate(&Plant::linear(benchmark_model()), &benchmark_initial_law(), &Vector::zeros(2), horizon, seed).unwrap();
                let spec = DesignSpec::from_data(&data, weights.clone(), Formulation::CertaintyEquivalence).unwrap();
                inf_norm(&(&dataconform::lmi::design(&spec, &SdpOptions::default()).unwrap().k - &k_true))
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        errs[10]
    };
    let short = median_error(2000);
    let long = median_error(200_000);
    assert!(long < short, "{long} !< {short}");
    assert!(long <= 0.1, "median gain error {long} at N = 200000");
}

#[test]
fn unexcited_data_is_rejected() {
    let law = ControlLaw { k: Mat::from_row_slice(1, 2, &[-0.2, -9.0]), v: SymMat::zeros(1) };
    let data = simulate(&Plant::linear(benchmark_model()), &law, &Vector::from_vec(vec![1.0, 1.0]), 100, 0).unwrap();
    let err = build_certainty_equivalence(&data, &benchmark_weights()).unwrap_err();
    assert!(matches!(err, Error::PeViolation { .. }), "{err:?}");
    let err = DesignSpec::from_data(&data, benchmark_weights(), Formulation::JointRegularized { gamma: 1.0 }).unwrap_err();
    assert!(matches!(err, Error::PeViolation { .. }), "{err:?}");
}

#[test]
fn quadratic_plant_destabilizes_certainty_equivalence_only() {
    let cfg = config("quadratic_series.toml");
    let campaign = cfg.campaign().unwrap();
    let rec = run_repetition(&campaign, 0).unwrap();
    let stable: Vec<bool> = rec.designs.iter().map(|d| d.stable).collect();
    assert_eq!(stable, vec![false, true, true, true], "labels {:?}", cfg.designs.iter().map(|d| &d.label).collect::<Vec<_>>());
}

#[test]
fn joint_design_is_the_only_stabilizing_one_under_input_coupling() {
    let cfg = config("coupled_series.toml");
    let campaign = cfg.campaign().unwrap();
    let rec = run_repetition(&campaign, 0).unwrap();
    let stable: Vec<bool> = rec.designs.iter().map(|d| d.stable).collect();
    assert_eq!(stable, vec![false, false, false, true]);
}

#[test]
fn hard_constraint_on_the_generating_loop_is_feasible() {
    // exact stationary moments of the Riccati loop, slightly inflated
    let model: LinearModel = benchmark_model();
    let weights = benchmark_weights();
    let (k, _) = solve_riccati(&model, &weights).unwrap();
    let sigma = dataconform::lqr::solve_dlyap_controllability(&model, &k, &weights.v).unwrap().scale(1.001);
    let g = design_covariance(&sigma, &k, &weights.v.scale(1.001)).unwrap();
    let moments = dataconform::sysid::EmpiricalMoments::from_blocks(
        g.sub_block(0, 2),
        g.as_mat().view((0, 2), (2, 1)).into_owned(),
        g.sub_block(2, 1),
        Vector::zeros(3),
    )
    .unwrap();
    let spec = DesignSpec::new(model, weights, Some(moments), Formulation::StateHard).unwrap();
    let r = dataconform::lmi::design(&spec, &SdpOptions::default()).unwrap();
    assert!(inf_norm(&(&r.k - &k)) <= 0.05, "{} vs {k}", r.k);
}
