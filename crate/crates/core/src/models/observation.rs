use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::gmu::InformationMap;
use crate::linalg::{self, Factor};
use crate::mixture::GaussianMixture;
use crate::rng::RngStream;

/// Measurement operator `h` with additive Gaussian error of covariance `R`.
#[derive(Clone)]
pub struct ObservationModel {
    operator: Arc<dyn InformationMap + Send>,
    noise_cov: DMatrix<f64>,
    noise_factor: Factor,
}

impl std::fmt::Debug for ObservationModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObservationModel")
            .field("input_dim", &self.operator.input_dim())
            .field("output_dim", &self.operator.output_dim())
            .field("noise_cov", &self.noise_cov)
            .finish()
    }
}

impl ObservationModel {
    pub fn new(operator: impl InformationMap + Send + 'static, noise_cov: DMatrix<f64>) -> Result<Self> {
        let m = operator.output_dim();
        if noise_cov.shape() != (m, m) {
            return Err(Error::Argument(format!(
                "observation noise must be {m}x{m}, got {}x{}",
                noise_cov.nrows(),
                noise_cov.ncols()
            )));
        }
        if linalg::relative_asymmetry(&noise_cov) > 1e-12 {
            return Err(Error::Argument("observation noise is not symmetric".into()));
        }
        if noise_cov.clone().cholesky().is_none() {
            return Err(Error::Argument(
                "observation noise is not positive definite".into(),
            ));
        }
        let noise_factor = Factor::new(&noise_cov)?;
        Ok(Self {
            operator: Arc::new(operator),
            noise_cov,
            noise_factor,
        })
    }

    pub fn operator(&self) -> &dyn InformationMap {
        self.operator.as_ref()
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    pub fn state_dim(&self) -> usize {
        self.operator.input_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.operator.output_dim()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.operator.apply(x)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.operator.jacobian(x)
    }

    /// `log N(y; h(x), R)`
    pub fn log_likelihood(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.noise_factor.log_normal(&(y - self.apply(x)))
    }

    /// `N(y, R)` as a one-component mixture.
    pub fn as_mixture(&self, y: &DVector<f64>) -> Result<GaussianMixture> {
        GaussianMixture::gaussian(y.clone(), self.noise_cov.clone())
    }

    /// `h(x) + η`, `η ~ N(0, R)`.
    pub fn observe(&self, x: &DVector<f64>, rng: &mut RngStream) -> DVector<f64> {
        let mut z = DVector::zeros(self.obs_dim());
        rng.fill_standard_normal(z.as_mut_slice());
        self.apply(x) + self.noise_factor.lower() * z
    }
}

/// Gaussian draws with mean `y` and covariance `R`.
pub fn perturbed_observations(
    obs: &ObservationModel,
    y: &DVector<f64>,
    count: usize,
    rng: &mut RngStream,
) -> Result<Ensemble> {
    perturbed_with_cov(obs.noise_cov(), y, count, rng, true)
}

pub(crate) fn perturbed_with_cov(
    cov: &DMatrix<f64>,
    y: &DVector<f64>,
    count: usize,
    rng: &mut RngStream,
    jitter: bool,
) -> Result<Ensemble> {
    if count == 0 {
        return Err(Error::Argument("need at least one perturbed observation".into()));
    }
    let l = linalg::psd_sampling_factor(cov, jitter)?;
    let m = y.len();
    let mut out = DMatrix::zeros(m, count);
    let mut z = DVector::zeros(m);
    for k in 0..count {
        rng.fill_standard_normal(z.as_mut_slice());
        let mut col = y.clone();
        col.gemv(1.0, &l, &z, 1.0);
        out.set_column(k, &col);
    }
    Ensemble::from_columns(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmu::LinearMap;

    fn scalar_obs(r: f64) -> ObservationModel {
        ObservationModel::new(LinearMap(DMatrix::identity(1, 1)), DMatrix::from_element(1, 1, r)).unwrap()
    }

    #[test]
    fn zero_noise_limit_returns_observation() {
        let y = DVector::from_vec(vec![0.3, -1.0]);
        let mut rng = RngStream::new(0, 0);
        let e = perturbed_with_cov(&DMatrix::zeros(2, 2), &y, 20, &mut rng, false).unwrap();
        assert!(e.iter().all(|m| m == y));
    }

    #[test]
    fn variance_matches_noise() {
        let obs = scalar_obs(0.25);
        let mut rng = RngStream::new(1, 0);
        let e = perturbed_observations(&obs, &DVector::from_vec(vec![2.0]), 100_000, &mut rng).unwrap();
        let var = e.mean_cov().unwrap().1[(0, 0)];
        assert!((0.24..=0.26).contains(&var), "variance {var}");
    }

    #[test]
    fn distinct_streams_are_independent() {
        let obs = scalar_obs(1.0);
        let y = DVector::from_vec(vec![0.0]);
        let a = perturbed_observations(&obs, &y, 10_000, &mut RngStream::new(5, 1)).unwrap();
        let b = perturbed_observations(&obs, &y, 10_000, &mut RngStream::new(5, 2)).unwrap();
        let joint = Ensemble::from_columns(nalgebra::DMatrix::from_fn(2, 10_000, |r, c| {
            if r == 0 { a.member(c)[0] } else { b.member(c)[0] }
        }))
        .unwrap();
        let c = joint.mean_cov().unwrap().1;
        let rho = c[(0, 1)] / (c[(0, 0)] * c[(1, 1)]).sqrt();
        assert!(rho.abs() < 0.02, "correlation {rho}");
    }

    #[test]
    fn rejects_bad_noise() {
        assert!(ObservationModel::new(LinearMap(DMatrix::identity(1, 1)), DMatrix::zeros(1, 1)).is_err());
        assert!(ObservationModel::new(LinearMap(DMatrix::identity(2, 2)), DMatrix::identity(1, 1)).is_err());
    }
}
