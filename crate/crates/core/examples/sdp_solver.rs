//! Use the SDP engine on its own: minimize the largest eigenvalue of an
//! affine matrix family, then read the certificate of an infeasible LMI.

use dataconform::linalg::SymMat;
use dataconform::sdp::{kkt_residuals, solve_sdp, Certificate, SdpOptions, SdpProblem};

fn main() -> dataconform::Result<()> {
    // min t  s.t.  t I - (M0 + y M1) >= 0
    let m0 = SymMat::from_rows(&[&[2.0, 1.0], &[1.0, -1.0]])?;
    let m1 = SymMat::from_rows(&[&[1.0, 0.0], &[0.0, -1.0]])?;
    let mut p = SdpProblem::new(vec![1.0, 0.0]);
    p.add_block(m0.scale(-1.0), vec![SymMat::identity(2), m1.scale(-1.0)])?;
    let sol = solve_sdp(&p, &SdpOptions::default())?;
    println!("lambda_max* = {:.8} at y = {:.8} ({:?}, {} iterations)", sol.y[0], sol.y[1], sol.status, sol.iterations);
    println!("{:?}", kkt_residuals(&p, &sol));

    // y >= 1 and y <= -1 cannot both hold
    let mut q = SdpProblem::new(vec![0.0]);
    q.add_block(SymMat::from_diag(&[-1.0]), vec![SymMat::identity(1)])?;
    q.add_block(SymMat::from_diag(&[-1.0]), vec![SymMat::identity(1).scale(-1.0)])?;
    let sol = solve_sdp(&q, &SdpOptions::default())?;
    println!("second problem: {:?}", sol.status);
    if let Some(Certificate::Infeasible(blocks)) = &sol.certificate {
        for b in blocks {
            println!("  certificate block {b}");
        }
    }
    Ok(())
}
