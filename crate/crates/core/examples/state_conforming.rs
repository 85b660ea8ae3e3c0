//! Pull the designed state covariance toward the data: hard equality, a
//! spectral band, and a Frobenius penalty of growing weight.

use dataconform::linalg::{SymMat, Vector};
use dataconform::lmi::{design, DesignSpec, Formulation};
use dataconform::lqr::LqrWeights;
use dataconform::regularizers::frobenius_gap;
use dataconform::sdp::SdpOptions;
use dataconform::simulator::{benchmark_initial_law, benchmark_model, simulate, Plant, PlantKind, BENCHMARK_THETA};
use dataconform::sysid::empirical_moments;

fn main() -> dataconform::Result<()> {
    let plant = Plant::new(PlantKind::Quadratic, benchmark_model(), BENCHMARK_THETA)?;
    let data = simulate(&plant, &benchmark_initial_law(), &Vector::zeros(2), 2000, 5)?;
    let weights = LqrWeights::identity(2, SymMat::from_diag(&[0.5]))?;
    let sigma_data = empirical_moments(&data)?.sigma_data;
    let opts = SdpOptions::default();

    println!("{:<32} {:>24} {:>10}", "formulation", "K", "gap");
    let show = |f: Formulation| -> dataconform::Result<()> {
        match DesignSpec::from_data(&data, weights.clone(), f).and_then(|s| design(&s, &opts)) {
            Ok(r) => println!(
                "{:<32} [{:>10.4}, {:>10.4}] {:>10.4}",
                f.label(),
                r.k[(0, 0)],
                r.k[(0, 1)],
                frobenius_gap(&r.sigma_star, &sigma_data)?
            ),
            Err(e) => println!("{:<32} {e}", f.label()),
        }
        Ok(())
    };
    show(Formulation::CertaintyEquivalence)?;
    for gamma_prime in [1.0, 5.0, 20.0, 100.0] {
        show(Formulation::StateRegularized { gamma_prime })?;
    }
    show(Formulation::StateBand { eps: 0.5 })?;
    // sampled moments rarely satisfy the identified Lyapunov equation exactly
    show(Formulation::StateHard)?;
    Ok(())
}
