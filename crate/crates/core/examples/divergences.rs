//! Distances between a designed and a data covariance: Frobenius gap,
//! Gaussian KL divergences and the symmetric trace objective `F`.

use dataconform::linalg::SymMat;
use dataconform::regularizers::{frobenius_gap, jeffreys_f, kl_gaussian, relative_spectrum, GaussianSummary};

fn main() -> dataconform::Result<()> {
    let data = SymMat::from_rows(&[&[2.0, 0.3], &[0.3, 1.0]])?;
    for scale in [1.0, 1.5, 3.0] {
        let des = data.scale(scale);
        let p = GaussianSummary::zero_mean(des.clone())?;
        let q = GaussianSummary::zero_mean(data.clone())?;
        let kl = kl_gaussian(&p, &q)? + kl_gaussian(&q, &p)?;
        println!(
            "scale {scale:3.1}: frobenius {:7.4}  F {:7.4}  2n + 2(KL + KL) {:7.4}  spectrum {:?}",
            frobenius_gap(&des, &data)?,
            jeffreys_f(&des, &data)?,
            4.0 + 2.0 * kl,
            relative_spectrum(&data, &des)?
        );
    }
    Ok(())
}
