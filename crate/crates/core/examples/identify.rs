//! Simulate the benchmark plant under an exploratory law, check persistent
//! excitation and fit a linear model plus data moments.
//!
//! `cargo run --example identify -- [seed]`

use dataconform::simulator::{benchmark_initial_law, benchmark_model, simulate, Plant};
use dataconform::sysid::{check_pe, empirical_moments, least_squares_id};
use dataconform::linalg::Vector;

fn main() -> dataconform::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let truth = benchmark_model();
    let data = simulate(&Plant::linear(truth.clone()), &benchmark_initial_law(), &Vector::zeros(2), 2000, seed)?;

    let pe = check_pe(&data);
    println!("PE rank {} (need {}): {}", pe.rank, data.state_dim() + data.input_dim(), pe.satisfied);

    let model = least_squares_id(&data)?;
    println!("A_hat = {}A_true = {}", model.a, truth.a);
    println!("B_hat = {}W_hat = {}", model.b, model.w);

    let m = empirical_moments(&data)?;
    println!("Sigma_data = {}", m.sigma_data);
    println!("joint covariance of (x, u) = {}", m.gamma_data);
    Ok(())
}
