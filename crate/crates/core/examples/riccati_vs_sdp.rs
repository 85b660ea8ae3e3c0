//! The covariance-parameterized SDP reproduces the Riccati gain, and the
//! multiplier of its Lyapunov constraint is the cost-to-go matrix `P`.

use dataconform::linalg::max_abs_diff;
use dataconform::lmi::{build, recover_design, DesignSpec, Formulation};
use dataconform::lqr::{closed_loop_cost, solve_riccati, LqrWeights};
use dataconform::linalg::SymMat;
use dataconform::sdp::{kkt_residuals, solve_sdp, SdpOptions};
use dataconform::simulator::benchmark_model;

fn main() -> dataconform::Result<()> {
    let model = benchmark_model();
    let weights = LqrWeights::identity(2, SymMat::from_diag(&[0.5]))?;
    let (k_ric, p) = solve_riccati(&model, &weights)?;

    let spec = DesignSpec::new(model.clone(), weights.clone(), None, Formulation::Standard)?;
    let problem = build(&spec)?;
    println!("SDP: {} scalar variables, {} PSD blocks", problem.sdp.num_vars, problem.sdp.blocks.len());
    let sol = solve_sdp(&problem.sdp, &SdpOptions::default())?;
    let result = recover_design(&problem, &sol, &spec)?;

    println!("K_riccati = {k_ric}K_sdp     = {}", result.k);
    println!("max |K_sdp - K_riccati| = {:.2e}", max_abs_diff(&result.k, &k_ric));
    println!("max |Upsilon - P|       = {:.2e}", max_abs_diff(result.dual_upsilon.as_mat(), p.as_mat()));
    println!("SDP objective {:.6}, closed-loop cost {:.6}", result.objective, closed_loop_cost(&model, &result.k, &weights)?);
    let kkt = kkt_residuals(&problem.sdp, &sol);
    println!("{} iterations, KKT {kkt:?}", sol.iterations);
    Ok(())
}
