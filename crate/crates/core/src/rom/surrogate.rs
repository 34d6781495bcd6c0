//! Reduced-space forward model: decode, advance with the full model, encode,
//! plus an empirical Gaussian residual.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::mlp::MlpAutoencoder;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::linalg::psd_sampling_factor;
use crate::models::{CouplingMap, DynamicalModel};
use crate::rng::RngStream;

/// Gaussian residual `η_U`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl ResidualStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Argument("residual mean/covariance shapes differ".into()));
        }
        let factor = psd_sampling_factor(&cov, true)?;
        Ok(Self { mean, cov, factor })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: DMatrix::zeros(dim, dim),
            factor: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn draw(&self, rng: &mut RngStream) -> DVector<f64> {
        let mut z = DVector::zeros(self.dim());
        rng.fill_standard_normal(z.as_mut_slice());
        &self.mean + &self.factor * z
    }
}

/// One-interval reduced residuals `θ(x_{k+1}) − θ(M(φ(θ(x_k))))` over
/// consecutive snapshots.
pub fn one_step_residuals(
    ae: &MlpAutoencoder,
    model: &dyn DynamicalModel,
    trajectory: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    // the full model is deterministic here; the stream is never drawn from
    let mut rng = RngStream::new(0, 0);
    trajectory
        .windows(2)
        .map(|w| {
            let u = ae.encode(&w[0]);
            let pred = ae.encode(&model.step(&ae.decode(&u), &mut rng));
            ae.encode(&w[1]) - pred
        })
        .collect()
}

pub fn residual_statistics(
    ae: &MlpAutoencoder,
    model: &dyn DynamicalModel,
    trajectory: &[DVector<f64>],
) -> Result<ResidualStats> {
    if trajectory.len() < 3 {
        return Err(Error::Argument("residual statistics need at least 3 consecutive snapshots".into()));
    }
    let res = one_step_residuals(ae, model, trajectory);
    let (mean, cov) = Ensemble::from_members(&res)?.mean_cov()?;
    ResidualStats::new(mean, cov)
}

/// `u ↦ θ(M(φ(u))) + η_U`.
#[derive(Clone)]
pub struct RomSurrogate {
    pub autoencoder: Arc<MlpAutoencoder>,
    pub model: Arc<dyn DynamicalModel + Send + Sync>,
    pub residual: ResidualStats,
}

impl std::fmt::Debug for RomSurrogate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RomSurrogate")
            .field("reduced_dim", &self.autoencoder.reduced_dim())
            .field("full_dim", &self.model.dim())
            .finish()
    }
}

impl RomSurrogate {
    pub fn new(
        autoencoder: Arc<MlpAutoencoder>,
        model: Arc<dyn DynamicalModel + Send + Sync>,
        residual: ResidualStats,
    ) -> Result<Self> {
        if autoencoder.full_dim() != model.dim() {
            return Err(Error::Argument(format!(
                "autoencoder acts on R^{}, model on R^{}",
                autoencoder.full_dim(),
                model.dim()
            )));
        }
        if residual.dim() != autoencoder.reduced_dim() {
            return Err(Error::Argument("residual dimension differs from the reduced dimension".into()));
        }
        Ok(Self {
            autoencoder,
            model,
            residual,
        })
    }
}

pub fn rom_forward(s: &RomSurrogate, u: &DVector<f64>, rng: &mut RngStream) -> DVector<f64> {
    let x = s.autoencoder.decode(u);
    let next = s.model.step(&x, rng);
    s.autoencoder.encode(&next) + s.residual.draw(rng)
}

impl DynamicalModel for RomSurrogate {
    fn dim(&self) -> usize {
        self.autoencoder.reduced_dim()
    }

    fn step(&self, u: &DVector<f64>, rng: &mut RngStream) -> DVector<f64> {
        rom_forward(self, u, rng)
    }
}
