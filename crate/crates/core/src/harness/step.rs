use nalgebra::DVector;

use super::config::FilterKind;
use crate::adapt::{adaptive_analysis, EmConfig, PriorInputs, TrustState};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::filters::{enkf_analysis, engmf_analysis, mfengmf_analysis, mfenkf_analysis, AnalysisResult, FilterConfig};
use crate::models::{CouplingMap, ObservationModel};
use crate::rng::RngStream;

/// Forecast ensembles entering one analysis.
pub struct Forecast<'a> {
    pub theory: &'a Ensemble,
    pub reduced: Option<&'a Ensemble>,
    pub coupling: Option<&'a dyn CouplingMap>,
}

/// One analysis of the configured filter. Adaptive filters update `trust`
/// in place.
#[allow(clippy::too_many_arguments)]
pub fn analysis_step(
    kind: FilterKind,
    forecast: &Forecast,
    obs: &ObservationModel,
    y: &DVector<f64>,
    cfg: &FilterConfig,
    em: &EmConfig,
    trust: &mut TrustState,
    rng: &mut RngStream,
) -> Result<AnalysisResult> {
    let multi = || -> Result<(&Ensemble, &dyn CouplingMap)> {
        match (forecast.reduced, forecast.coupling) {
            (Some(u), Some(c)) => Ok((u, c)),
            _ => Err(Error::Argument(format!("{kind} needs a reduced ensemble and a coupling"))),
        }
    };
    let x = forecast.theory;
    match kind {
        FilterKind::None => Err(Error::Argument("the free forecast has no analysis".into())),
        FilterKind::Enkf => enkf_analysis(x, obs, y, cfg, rng),
        FilterKind::Engmf => engmf_analysis(x, obs, y, cfg, rng),
        FilterKind::Mfenkf => {
            let (u, c) = multi()?;
            mfenkf_analysis(x, u, c, obs, y, cfg, rng)
        }
        FilterKind::Mfengmf => {
            let (u, c) = multi()?;
            mfengmf_analysis(x, u, c, obs, y, cfg, rng)
        }
        FilterKind::Aengmf => {
            let inputs = PriorInputs::Single { ensemble: x };
            let (a, report) = adaptive_analysis(&inputs, obs, y, *trust, cfg, em, rng)?;
            *trust = report.after;
            Ok(a)
        }
        FilterKind::Amfengmf => {
            let (u, c) = multi()?;
            let inputs = PriorInputs::Multi {
                theory: x,
                reduced: u,
                coupling: c,
            };
            let (a, report) = adaptive_analysis(&inputs, obs, y, *trust, cfg, em, rng)?;
            *trust = report.after;
            Ok(a)
        }
    }
}
