use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{inflate, localize, AnalysisResult, Diagnostics, FilterConfig};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::linalg::Factor;
use crate::models::{perturbed_observations, ObservationModel};
use crate::rng::RngStream;

/// Gain `Σ Hᵀ (H Σ Hᵀ + R)⁻¹` linearized at `x`.
pub(crate) fn member_gain(cov: &DMatrix<f64>, obs: &ObservationModel, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let h = obs.jacobian(x);
    let hs = &h * cov;
    let s = &hs * h.transpose() + obs.noise_cov();
    let f = Factor::new(&s).map_err(|_| Error::Numerical("innovation covariance is not positive definite".into()))?;
    Ok(f.solve(&hs).transpose())
}

pub(crate) fn check_obs(e: &Ensemble, obs: &ObservationModel, y: &DVector<f64>) -> Result<()> {
    if obs.state_dim() != e.dim() || obs.obs_dim() != y.len() {
        return Err(Error::Argument(format!(
            "observation model is {}→{}, ensemble dimension {}, observation length {}",
            obs.state_dim(),
            obs.obs_dim(),
            e.dim(),
            y.len()
        )));
    }
    Ok(())
}

/// Stochastic EnKF with inflation, optional localization and per-member
/// linearization of `h`.
pub fn enkf_analysis(
    e: &Ensemble,
    obs: &ObservationModel,
    y: &DVector<f64>,
    cfg: &FilterConfig,
    rng: &mut RngStream,
) -> Result<AnalysisResult> {
    check_obs(e, obs, y)?;
    if e.len() < 2 {
        return Err(Error::DegenerateEnsemble("EnKF needs at least 2 members".into()));
    }
    let ex = inflate(e, cfg.inflation_x)?;
    let (_, cov) = ex.mean_cov()?;
    let cov = localize(cov, cfg.localization.as_ref())?;
    let pert = perturbed_observations(obs, y, ex.len(), rng)?;

    let updated: Vec<(DVector<f64>, f64)> = (0..ex.len())
        .into_par_iter()
        .map(|i| {
            let x = ex.member(i).into_owned();
            let k = member_gain(&cov, obs, &x)?;
            let innov = obs.apply(&x) - pert.member(i);
            Ok((&x - &k * innov, k.norm()))
        })
        .collect::<Result<_>>()?;
    let max_gain = updated.iter().map(|(_, g)| *g).fold(0.0, f64::max);
    let cols: Vec<DVector<f64>> = updated.into_iter().map(|(x, _)| x).collect();
    let theory = Ensemble::weighted(DMatrix::from_columns(&cols), ex.weights().to_vec())?;
    let estimate = theory.mean();
    Ok(AnalysisResult {
        theory,
        reduced: None,
        posterior: None,
        estimate,
        diagnostics: Diagnostics {
            max_gain_norm: Some(max_gain),
            ..Diagnostics::default()
        },
    })
}
