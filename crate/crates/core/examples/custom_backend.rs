//! Plug a different conic engine into the design pipeline. This backend
//! wraps the built-in solver, tightens its tolerance and reports each call.

use std::sync::atomic::{AtomicUsize, Ordering};

use dataconform::linalg::SymMat;
use dataconform::lmi::{design_with, DesignSpec, Formulation};
use dataconform::lqr::LqrWeights;
use dataconform::sdp::{InteriorPoint, SdpBackend, SdpOptions, SdpProblem, SdpSolution};
use dataconform::simulator::benchmark_model;

struct Tight {
    calls: AtomicUsize,
}

impl SdpBackend for Tight {
    fn name(&self) -> &str {
        "tight-interior-point"
    }

    fn solve(&self, problem: &SdpProblem, options: &SdpOptions) -> dataconform::Result<SdpSolution> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let opts = SdpOptions { tol: options.tol.min(1e-9), ..*options };
        let sol = InteriorPoint.solve(problem, &opts)?;
        eprintln!("[{}] {} vars, {} blocks: {:?} in {} iterations", self.name(), problem.num_vars, problem.blocks.len(), sol.status, sol.iterations);
        Ok(sol)
    }
}

fn main() -> dataconform::Result<()> {
    let backend = Tight { calls: AtomicUsize::new(0) };
    let weights = LqrWeights::identity(2, SymMat::from_diag(&[0.5]))?;
    let spec = DesignSpec::new(benchmark_model(), weights, None, Formulation::Standard)?;
    let r = design_with(&backend, &spec, &SdpOptions::default())?;
    println!("K = {}after {} solver call(s)", r.k, backend.calls.load(Ordering::Relaxed));
    Ok(())
}
