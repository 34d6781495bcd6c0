use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::enkf::{check_obs, member_gain};
use super::{inflate, localize, AnalysisResult, Diagnostics, FilterConfig};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::models::{perturbed_observations, CouplingMap, ObservationModel};
use crate::rng::RngStream;

/// `S = ½ Φ`, with `Φ` taken at `u`.
pub fn control_variate_gain(coupling: &dyn CouplingMap, u: &DVector<f64>) -> DMatrix<f64> {
    coupling.decode_jacobian(u) * 0.5
}

pub(crate) fn check_multifidelity(ex: &Ensemble, eu: &Ensemble, coupling: &dyn CouplingMap) -> Result<()> {
    if ex.dim() != coupling.full_dim() || eu.dim() != coupling.reduced_dim() {
        return Err(Error::Argument(format!(
            "coupling maps R^{} ↔ R^{}, ensembles live in R^{} and R^{}",
            coupling.full_dim(),
            coupling.reduced_dim(),
            ex.dim(),
            eu.dim()
        )));
    }
    if ex.len() < 2 || eu.len() < 2 {
        return Err(Error::DegenerateEnsemble(format!(
            "multifidelity analysis needs N_X, N_U >= 2 (got {}, {})",
            ex.len(),
            eu.len()
        )));
    }
    Ok(())
}


/// Linearized update of a reduced member through `φ`, with the full-space
/// gain projected by `Θ`.
fn reduced_update(
    cov: &DMatrix<f64>,
    obs: &ObservationModel,
    coupling: &dyn CouplingMap,
    u: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let x = coupling.decode(u);
    let k = member_gain(cov, obs, &x)?;
    let theta = coupling.encode_jacobian(&x);
    Ok(u - theta * (k * (obs.apply(&x) - y)))
}

/// Multifidelity EnKF on the control-variate total variate
/// `Z = X − S(Û − U)` with `Û = θ(X)`.
pub fn mfenkf_analysis(
    ex: &Ensemble,
    eu: &Ensemble,
    coupling: &dyn CouplingMap,
    obs: &ObservationModel,
    y: &DVector<f64>,
    cfg: &FilterConfig,
    rng: &mut RngStream,
) -> Result<AnalysisResult> {
    check_obs(ex, obs, y)?;
    check_multifidelity(ex, eu, coupling)?;
    let x = inflate(ex, cfg.inflation_x)?;
    let encoded = ex.map(|m| coupling.encode(&m.into_owned()))?;
    let uhat = inflate(&encoded, cfg.inflation_x)?;
    let u = inflate(eu, cfg.inflation_u)?;

    let s = control_variate_gain(coupling, &uhat.mean());
    let (_, cov_x) = x.mean_cov()?;
    let cov_xu = x.cross_cov(&uhat)?;
    let (_, cov_uhat) = uhat.mean_cov()?;
    let (_, cov_u) = u.mean_cov()?;
    let mut cov_z = cov_x - &cov_xu * s.transpose() - &s * cov_xu.transpose() + &s * (cov_uhat + cov_u) * s.transpose();
    symmetrize(&mut cov_z);
    let cov_z = localize(cov_z, cfg.localization.as_ref())?;

    let pert_x = perturbed_observations(obs, y, x.len(), rng)?;
    let pert_u = perturbed_observations(obs, y, u.len(), rng)?;
    let pert_uhat = if cfg.independent_reduced_perturbations {
        perturbed_observations(obs, y, x.len(), rng)?
    } else {
        pert_x.clone()
    };

    let x_post: Vec<(DVector<f64>, f64)> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let xi = x.member(i).into_owned();
            let k = member_gain(&cov_z, obs, &xi)?;
            let innov = obs.apply(&xi) - pert_x.member(i);
            Ok((&xi - &k * innov, k.norm()))
        })
        .collect::<Result<_>>()?;
    let uhat_post: Vec<DVector<f64>> = (0..uhat.len())
        .into_par_iter()
        .map(|i| reduced_update(&cov_z, obs, coupling, &uhat.member(i).into_owned(), &pert_uhat.member(i).into_owned()))
        .collect::<Result<_>>()?;
    let u_post: Vec<DVector<f64>> = (0..u.len())
        .into_par_iter()
        .map(|j| reduced_update(&cov_z, obs, coupling, &u.member(j).into_owned(), &pert_u.member(j).into_owned()))
        .collect::<Result<_>>()?;

    let max_gain = x_post.iter().map(|(_, g)| *g).fold(0.0, f64::max);
    let theory = Ensemble::from_members(&x_post.into_iter().map(|(v, _)| v).collect::<Vec<_>>())?;
    let uhat_post = Ensemble::from_members(&uhat_post)?;
    let reduced = Ensemble::from_members(&u_post)?;
    let estimate = theory.mean() - &s * (uhat_post.mean() - reduced.mean());
    Ok(AnalysisResult {
        theory,
        reduced: Some(reduced),
        posterior: None,
        estimate,
        diagnostics: Diagnostics {
            max_gain_norm: Some(max_gain),
            ..Diagnostics::default()
        },
    })
}
