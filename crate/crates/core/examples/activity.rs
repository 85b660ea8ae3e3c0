//! Lyapunov-constraint activity: on consistent data the relaxed constraint
//! is tight; with a 10x inflated data covariance it goes slack and the
//! intended covariance only bounds the true one.

use dataconform::linalg::SymMat;
use dataconform::lmi::{activity_report, design, DesignSpec, Formulation};
use dataconform::lqr::{solve_dlyap_controllability, solve_riccati, LqrWeights};
use dataconform::regularizers::design_covariance;
use dataconform::sdp::SdpOptions;
use dataconform::simulator::benchmark_model;
use dataconform::sysid::EmpiricalMoments;

fn main() -> dataconform::Result<()> {
    let model = benchmark_model();
    let v = SymMat::from_diag(&[0.5]);
    let weights = LqrWeights::identity(2, v.clone())?;
    let (k, _) = solve_riccati(&model, &weights)?;
    let sigma = solve_dlyap_controllability(&model, &k, &v)?;
    let gamma = design_covariance(&sigma, &k, &v)?;

    for inflation in [1.0, 10.0] {
        let g = gamma.scale(inflation);
        let h = g.as_mat().view((0, 2), (2, 1)).into_owned();
        let moments = EmpiricalMoments::from_blocks(g.sub_block(0, 2), h, g.sub_block(2, 1), dataconform::linalg::Vector::zeros(3))?;
        let spec = DesignSpec::new(model.clone(), weights.clone(), Some(moments), Formulation::StateRegularized { gamma_prime: 100.0 })?;
        let r = design(&spec, &SdpOptions::default())?;
        let act = activity_report(&spec, &r)?;
        let actual = solve_dlyap_controllability(&model, &r.k, &v)?;
        println!(
            "inflation {inflation:4.1}: active {:5}  residual {:.2e}  term {:?}  min eig(Sigma* - Sigma_actual) {:.3e}",
            act.active,
            act.lyapunov_residual,
            act.term_definiteness,
            r.sigma_star.sub(&actual).min_eigenvalue()?
        );
    }
    Ok(())
}
