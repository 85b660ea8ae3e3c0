//! Distribution-matching terms between the designed closed loop and the data.
//!
//! Everything here works on zero-mean Gaussian summaries of the joint
//! state-input vector `(x, u)`. [`jeffreys_f`] is the surrogate regularizer
//! `tr(G_data^-1 G_des + G_data G_des^-1)`, which is convex in `G_des` and
//! minimized exactly at `G_des = G_data`.

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Mat, SymMat, Vector};
use crate::sysid::MAX_DATA_CONDITION;

/// Mean and covariance of a Gaussian over the joint state-input space.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: Vector,
    pub cov: SymMat,
}

impl GaussianSummary {
    pub fn new(mean: Vector, cov: SymMat) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::Dimension("mean and covariance sizes differ".into()));
        }
        guard_pd(&cov, "covariance")?;
        Ok(Self { mean, cov })
    }

    pub fn zero_mean(cov: SymMat) -> Result<Self> {
        let n = cov.dim();
        Self::new(Vector::zeros(n), cov)
    }
}

fn guard_pd(m: &SymMat, what: &str) -> Result<()> {
    let cond = m.condition_number()?;
    if !cond.is_finite() || cond > MAX_DATA_CONDITION {
        return Err(Error::DegenerateData(format!(
            "{what} is not safely positive definite (condition number {cond:.3e})"
        )));
    }
    Ok(())
}

fn same_dims(a: &SymMat, b: &SymMat) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "covariances are {}x{} and {}x{}",
            a.dim(),
            a.dim(),
            b.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Joint covariance of `(x, u)` under `u = K x + v`:
/// `[[Sigma, Sigma K^T], [K Sigma, K Sigma K^T + V]]`.
pub fn design_covariance(sigma: &SymMat, k: &Mat, v: &SymMat) -> Result<SymMat> {
    if k.ncols() != sigma.dim() || k.nrows() != v.dim() {
        return Err(Error::Dimension(format!(
            "gain is {}x{}, expected {}x{}",
            k.nrows(),
            k.ncols(),
            v.dim(),
            sigma.dim()
        )));
    }
    let cross = sigma.as_mat() * k.transpose();
    let lower = sigma.congruence(k).add(v);
    SymMat::block2(sigma, &cross, &lower)
}

/// Closed-form `KL(des || data)` of two Gaussians.
pub fn kl_gaussian(des: &GaussianSummary, data: &GaussianSummary) -> Result<f64> {
    same_dims(&des.cov, &data.cov)?;
    guard_pd(&data.cov, "data covariance")?;
    if des == data {
        return Ok(0.0);
    }
    let n = des.cov.dim() as f64;
    let tr = data.cov.solve_pd(des.cov.as_mat())?.trace();
    let dmu = &des.mean - &data.mean;
    let quad = dmu.dot(&data.cov.solve_pd(&Mat::from_column_slice(dmu.len(), 1, dmu.as_slice()))?.column(0));
    let ld = log_det_ratio(&data.cov, &des.cov)?;
    let kl = 0.5 * (tr + quad - n + ld);
    // clip rounding noise around zero only
    Ok(if kl < 0.0 && kl > -1e-12 { 0.0 } else { kl })
}

/// `log det(data) - log det(des)` through Cholesky log-determinants.
pub fn log_det_ratio(data_cov: &SymMat, des_cov: &SymMat) -> Result<f64> {
    same_dims(data_cov, des_cov)?;
    Ok(data_cov.log_det_pd()? - des_cov.log_det_pd()?)
}

/// Eigenvalues of `des^{-1/2} data des^{-1/2}`, i.e. of `data des^{-1}`.
pub fn relative_spectrum(data_cov: &SymMat, des_cov: &SymMat) -> Result<Vec<f64>> {
    same_dims(data_cov, des_cov)?;
    guard_pd(des_cov, "design covariance")?;
    let inv_sqrt = crate::linalg::sym_apply(des_cov, |l| 1.0 / l.sqrt())?;
    let e = data_cov.congruence(inv_sqrt.as_mat());
    Ok(sym_eig(&e)?.0)
}

/// `tr log(data des^{-1})` computed from the symmetrized similarity transform.
pub fn trace_log_ratio(data_cov: &SymMat, des_cov: &SymMat) -> Result<f64> {
    let spec = relative_spectrum(data_cov, des_cov)?;
    if spec[0] <= 0.0 {
        return Err(Error::NotPd("data covariance".into()));
    }
    Ok(spec.iter().map(|l| l.ln()).sum())
}

/// Surrogate `F = tr(data^{-1} des + data des^{-1})`.
pub fn jeffreys_f(des_cov: &SymMat, data_cov: &SymMat) -> Result<f64> {
    same_dims(des_cov, data_cov)?;
    guard_pd(des_cov, "design covariance")?;
    guard_pd(data_cov, "data covariance")?;
    let first = data_cov.solve_pd(des_cov.as_mat())?.trace();
    let second = des_cov.solve_pd(data_cov.as_mat())?.trace();
    Ok(first + second)
}

/// Squared Frobenius distance `||des - data||_F^2`.
pub fn frobenius_gap(des_sigma: &SymMat, data_sigma: &SymMat) -> Result<f64> {
    same_dims(des_sigma, data_sigma)?;
    let d = des_sigma.sub(data_sigma);
    Ok(d.trace_prod(&d))
}

/// `| tr log(data des^-1) - tr(data des^-1 - I) |`, the error of the first-order log truncation.
pub fn f_truncation_error(des_cov: &SymMat, data_cov: &SymMat) -> Result<f64> {
    guard_pd(data_cov, "data covariance")?;
    let spec = relative_spectrum(data_cov, des_cov)?;
    Ok(spec.iter().map(|&l| l.ln() - (l - 1.0)).sum::<f64>().abs())
}
