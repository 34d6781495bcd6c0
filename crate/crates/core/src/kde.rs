//! Gaussian kernel density estimation with a bandwidth scaling factor.
//!
//! The scaling factor `s` multiplies the Silverman bandwidth; a larger `s`
//! widens every kernel and expresses less trust in the ensemble.

use nalgebra::DMatrix;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;

/// Gaussian-reference optimal bandwidth `(4 / (N (n + 2)))^(1 / (n + 4))`.
pub fn silverman_bandwidth(ensemble_size: usize, dim: usize) -> f64 {
    let (big_n, n) = (ensemble_size as f64, dim as f64);
    (4.0 / (big_n * (n + 2.0))).powf(1.0 / (n + 4.0))
}

/// Cyclic Gaussian taper `ρ_ij = exp(-d(i,j)² / (2 r²))`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationMatrix {
    rho: DMatrix<f64>,
    radius: f64,
}

impl LocalizationMatrix {
    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    /// Elementwise product `ρ ∘ cov`.
    pub fn apply(&self, cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if cov.shape() != self.rho.shape() {
            return Err(Error::Argument(format!(
                "localization is {}x{}, covariance {}x{}",
                self.dim(),
                self.dim(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(cov.component_mul(&self.rho))
    }
}

/// Index distance on a ring of `n` sites.
pub fn cyclic_distance(i: usize, j: usize, n: usize) -> usize {
    let d = i.abs_diff(j);
    d.min(n - d)
}

/// `exp(−d² / (2 r²))`
pub fn gaussian_taper(d: f64, radius: f64) -> f64 {
    (-0.5 * d * d / (radius * radius)).exp()
}

/// Clip negative eigenvalues and rescale to unit diagonal. On a ring the
/// Gaussian taper is slightly indefinite, and an indefinite mask can make
/// `ρ∘Cov` indefinite.
fn nearest_correlation(rho: DMatrix<f64>) -> DMatrix<f64> {
    let eig = rho.clone().symmetric_eigen();
    if eig.eigenvalues.min() >= 0.0 {
        return rho;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let mut m = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let d = m.diagonal().map(|v| 1.0 / v.sqrt());
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] *= d[i] * d[j];
        }
    }
    crate::linalg::symmetrize(&mut m);
    m
}

pub fn build_localization(n: usize, radius: f64) -> Result<LocalizationMatrix> {
    if n == 0 || !(radius > 0.0) {
        return Err(Error::Argument(format!(
            "localization needs n >= 1 and radius > 0 (got n = {n}, radius = {radius})"
        )));
    }
    let rho = DMatrix::from_fn(n, n, |i, j| gaussian_taper(cyclic_distance(i, j, n) as f64, radius));
    Ok(LocalizationMatrix {
        rho: nearest_correlation(rho),
        radius,
    })
}

#[derive(Clone, Debug)]
pub struct KdeConfig {
    pub scaling: f64,
    pub localization: Option<LocalizationMatrix>,
}

impl KdeConfig {
    pub fn new(scaling: f64) -> Self {
        Self {
            scaling,
            localization: None,
        }
    }

    pub fn localized(scaling: f64, localization: LocalizationMatrix) -> Self {
        Self {
            scaling,
            localization: Some(localization),
        }
    }
}

/// Shared kernel covariance `(s h)² ρ∘Cov(E)`.
pub fn kernel_covariance(e: &Ensemble, cfg: &KdeConfig) -> Result<DMatrix<f64>> {
    if !(cfg.scaling > 0.0) || !cfg.scaling.is_finite() {
        return Err(Error::Argument(format!(
            "bandwidth scaling must be positive, got {}",
            cfg.scaling
        )));
    }
    let (_, mut cov) = e.mean_cov()?;
    if let Some(loc) = &cfg.localization {
        cov = loc.apply(&cov)?;
    }
    let bw = cfg.scaling * silverman_bandwidth(e.len(), e.dim());
    Ok(cov * (bw * bw))
}

/// Mixture with one component per member, all sharing the kernel covariance.
pub fn kde_estimate(e: &Ensemble, cfg: &KdeConfig) -> Result<GaussianMixture> {
    let cov = kernel_covariance(e, cfg)?;
    GaussianMixture::with_shared_covariance(e.iter().collect(), cov, e.weights().to_vec())
}
