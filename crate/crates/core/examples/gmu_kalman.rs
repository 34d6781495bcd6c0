//! The Gaussian mixture update: a Kalman update per component pair with
//! reweighting, checked against the closed form in the Gaussian case.
//!
//! cargo run --release --example gmu_kalman

use mfengmf::gmu::{gaussian_mixture_update, GmuConfig, LinearMap};
use mfengmf::models::PairwiseNorm;
use mfengmf::GaussianMixture;
use nalgebra::{DMatrix, DVector};

fn main() -> mfengmf::Result<()> {
    // prior N(0, 1), observation N(1, 1) through the identity
    let prior = GaussianMixture::gaussian(DVector::from_element(1, 0.0), DMatrix::identity(1, 1))?;
    let info = GaussianMixture::gaussian(DVector::from_element(1, 1.0), DMatrix::identity(1, 1))?;
    let post = gaussian_mixture_update(&prior, &info, &LinearMap(DMatrix::identity(1, 1)), &GmuConfig::new(0.0)?)?;
    println!("Gaussian case: mean {:.6}, variance {:.6} (closed form 0.5, 0.5)", post.means()[0][0], post.covariance(0)[(0, 0)]);

    // two-component prior, range observation ‖x‖ = 1
    let prior = GaussianMixture::with_shared_covariance(
        vec![DVector::from_vec(vec![-1.5, 0.5]), DVector::from_vec(vec![0.0, 3.0])],
        DMatrix::identity(2, 2) * 0.3,
        vec![0.5, 0.5],
    )?;
    let info = GaussianMixture::gaussian(DVector::from_element(1, 1.0), DMatrix::identity(1, 1) * 0.01)?;
    for delta in [0.0, 1e-4, 1.0] {
        let post = gaussian_mixture_update(&prior, &info, &PairwiseNorm::new(2)?, &GmuConfig::new(delta)?)?;
        let m = post.mean();
        println!(
            "delta = {delta:<6} weights [{:.4}, {:.4}]  mean ({:.3}, {:.3})",
            post.weights()[0],
            post.weights()[1],
            m[0],
            m[1]
        );
    }
    Ok(())
}
