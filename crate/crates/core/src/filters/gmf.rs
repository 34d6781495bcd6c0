use nalgebra::DVector;

use super::enkf::check_obs;
use super::mfenkf::check_multifidelity;
use super::{effective_components, AnalysisResult, Diagnostics, FilterConfig};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::gmu::{gmu_grouped, gmu_shared_covariance, GmuConfig, Linearization};
use crate::kde::{kde_estimate, KdeConfig, LocalizationMatrix};
use crate::mixture::{gm_sample, GaussianMixture};
use crate::models::{CouplingMap, EncoderMap, ObservationModel};
use crate::rng::RngStream;

fn kde_config(s: f64, loc: Option<&LocalizationMatrix>) -> KdeConfig {
    KdeConfig {
        scaling: s,
        localization: loc.cloned(),
    }
}

/// `p(X⁻ | s_X)`
pub fn engmf_prior(e: &Ensemble, s_x: f64, loc: Option<&LocalizationMatrix>) -> Result<GaussianMixture> {
    kde_estimate(e, &kde_config(s_x, loc))
}

/// `p(Z⁻ | s_X, s_U) = GMU_θ(p(X⁻), p(U⁻))`; the reduced KDE is never
/// localized.
#[allow(clippy::too_many_arguments)]
pub fn mfengmf_prior(
    ex: &Ensemble,
    eu: &Ensemble,
    coupling: &dyn CouplingMap,
    s_x: f64,
    s_u: f64,
    loc: Option<&LocalizationMatrix>,
    defensive: f64,
    cap: usize,
) -> Result<GaussianMixture> {
    check_multifidelity(ex, eu, coupling)?;
    let count = ex.len().saturating_mul(eu.len());
    if count > cap {
        return Err(Error::Resource(format!(
            "{} x {} = {count} mixture components exceed the cap of {cap}",
            ex.len(),
            eu.len()
        )));
    }
    let px = kde_estimate(ex, &kde_config(s_x, loc))?;
    let pu = kde_estimate(eu, &KdeConfig::new(s_u))?;
    gmu_shared_covariance(&px, &pu, &EncoderMap(coupling), &GmuConfig::new(defensive)?)
}

fn finish(
    posterior: GaussianMixture,
    theory: Ensemble,
    reduced: Option<Ensemble>,
) -> AnalysisResult {
    let estimate = posterior.mean();
    let diagnostics = Diagnostics {
        effective_components: Some(effective_components(posterior.weights())),
        components: posterior.len(),
        max_gain_norm: None,
    };
    AnalysisResult {
        theory,
        reduced,
        posterior: Some(posterior),
        estimate,
        diagnostics,
    }
}

/// KDE prior, GMU against `N(y, R)`, resample `N_X` members.
pub fn engmf_analysis(
    e: &Ensemble,
    obs: &ObservationModel,
    y: &DVector<f64>,
    cfg: &FilterConfig,
    rng: &mut RngStream,
) -> Result<AnalysisResult> {
    check_obs(e, obs, y)?;
    if e.len() < 2 {
        return Err(Error::DegenerateEnsemble("EnGMF needs at least 2 members".into()));
    }
    let prior = engmf_prior(e, cfg.scaling_x, cfg.localization.as_ref())?;
    engmf_from_prior(&prior, e.len(), obs, y, cfg.defensive, rng)
}

pub(crate) fn engmf_from_prior(
    prior: &GaussianMixture,
    count: usize,
    obs: &ObservationModel,
    y: &DVector<f64>,
    defensive: f64,
    rng: &mut RngStream,
) -> Result<AnalysisResult> {
    let post = gmu_shared_covariance(prior, &obs.as_mixture(y)?, obs.operator(), &GmuConfig::new(defensive)?)?;
    let theory = gm_sample(&post, count, rng)?;
    Ok(finish(post, theory, None))
}

/// Fuse the two KDEs through the encoder, then the observation; resample
/// `N_X + N_U` draws, the first `N_X` forming `E_{X⁺}` and the encoded rest
/// `E_{U⁺}`.
pub fn mfengmf_analysis(
    ex: &Ensemble,
    eu: &Ensemble,
    coupling: &dyn CouplingMap,
    obs: &ObservationModel,
    y: &DVector<f64>,
    cfg: &FilterConfig,
    rng: &mut RngStream,
) -> Result<AnalysisResult> {
    check_obs(ex, obs, y)?;
    let prior = mfengmf_prior(
        ex,
        eu,
        coupling,
        cfg.scaling_x,
        cfg.scaling_u,
        cfg.localization.as_ref(),
        cfg.defensive,
        cfg.component_cap,
    )?;
    mfengmf_from_prior(&prior, ex.len(), eu.len(), coupling, obs, y, cfg.defensive, cfg.linearization, rng)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn mfengmf_from_prior(
    prior: &GaussianMixture,
    n_x: usize,
    n_u: usize,
    coupling: &dyn CouplingMap,
    obs: &ObservationModel,
    y: &DVector<f64>,
    defensive: f64,
    linearization: Linearization,
    rng: &mut RngStream,
) -> Result<AnalysisResult> {
    let post = gmu_grouped(prior, &obs.as_mixture(y)?, obs.operator(), &GmuConfig::new(defensive)?, linearization)?;
    let draws = gm_sample(&post, n_x + n_u, rng)?;
    let theory = draws.slice(0, n_x)?;
    let reduced = draws.slice(n_x, n_u)?.map(|m| coupling.encode(&m.into_owned()))?;
    Ok(finish(post, theory, Some(reduced)))
}
