//! How the bandwidth scaling factor widens a KDE: covariance inflation and
//! tail density for a small ensemble.
//!
//! cargo run --release --example kde_trust

use mfengmf::kde::{build_localization, kde_estimate, silverman_bandwidth, KdeConfig};
use mfengmf::mixture::gm_sample;
use mfengmf::models::banana_problem;
use mfengmf::RngStream;
use nalgebra::DVector;

fn main() -> mfengmf::Result<()> {
    let prior = banana_problem()?.prior;
    let e = gm_sample(&prior, 25, &mut RngStream::new(1, 0))?;
    let (_, cov) = e.mean_cov()?;
    let h = silverman_bandwidth(e.len(), e.dim());
    let tail = DVector::from_vec(vec![-0.5, 2.0]);
    println!("N = {}, n = {}, Silverman h = {h:.5}", e.len(), e.dim());
    println!("   s   (1 + (s h)^2)   Cov(KDE)/Cov(E)   log p(tail)");
    for s in [0.5, 1.0, 2.0, 3.0] {
        let gm = kde_estimate(&e, &KdeConfig::new(s))?;
        let ratio = gm.sample_covariance()?[(0, 0)] / cov[(0, 0)];
        println!("{s:4.1}   {:13.5}   {ratio:15.5}   {:11.4}", 1.0 + (s * h).powi(2), gm.log_pdf(&tail)?);
    }

    // localized kernels on a 40-site ring
    let mut rng = RngStream::new(2, 0);
    let cols: Vec<DVector<f64>> = (0..10).map(|_| DVector::from_fn(40, |_, _| rng.standard_normal())).collect();
    let big = mfengmf::Ensemble::from_members(&cols)?;
    let loc = build_localization(40, 4.0)?;
    let plain = kde_estimate(&big, &KdeConfig::new(1.0))?;
    let tapered = kde_estimate(&big, &KdeConfig::localized(1.0, loc))?;
    println!(
        "ring n = 40, N = 10: kernel covariance entry (0, 20) {:.4} unlocalized, {:.2e} localized",
        plain.covariance(0)[(0, 20)],
        tapered.covariance(0)[(0, 20)]
    );
    Ok(())
}
