//! On a plant whose input gain depends on the state, conform to the joint
//! state-input distribution and compare closed loops with the
//! certainty-equivalent design.

use dataconform::linalg::SymMat;
use dataconform::lmi::{design, DesignSpec, Formulation};
use dataconform::lqr::LqrWeights;
use dataconform::regularizers::{design_covariance, jeffreys_f};
use dataconform::sdp::SdpOptions;
use dataconform::simulator::{
    benchmark_initial_law, benchmark_model, classify_stable, simulate, ControlLaw, Plant, PlantKind, BENCHMARK_THETA,
};
use dataconform::sysid::empirical_moments;

fn main() -> dataconform::Result<()> {
    let plant = Plant::new(PlantKind::BilinearTanh, benchmark_model(), BENCHMARK_THETA)?;
    let v = SymMat::from_diag(&[0.5]);
    let weights = LqrWeights::identity(2, v.clone())?;
    let data = simulate(&plant, &benchmark_initial_law(), &dataconform::linalg::Vector::zeros(2), 2000, 11)?;
    let gamma_data = empirical_moments(&data)?.gamma_data;
    let x_last = data.states().column(data.horizon()).into_owned();

    for f in [
        Formulation::CertaintyEquivalence,
        Formulation::StateRegularized { gamma_prime: 100.0 },
        Formulation::JointRegularized { gamma: 10.0 },
    ] {
        let spec = DesignSpec::from_data(&data, weights.clone(), f)?;
        let r = design(&spec, &SdpOptions::default())?;
        let f_value = jeffreys_f(&design_covariance(&r.sigma_star, &r.k, &v)?, &gamma_data)?;
        let closed = simulate(&plant, &ControlLaw::new(r.k.clone(), v.clone())?, &x_last, 2000, 12)?;
        let peak = closed.states().amax();
        println!(
            "{:<28} K = [{:8.4}, {:8.4}]  F = {:10.3}  bounded = {:5}  peak |x| = {peak:.3e}",
            f.label(),
            r.k[(0, 0)],
            r.k[(0, 1)],
            f_value,
            classify_stable(&closed, 50.0)
        );
    }
    Ok(())
}
