use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::{Experiment, ExperimentConfig};
use super::output::{aggregate_rows, MetricValue, ResultRow};
use super::step::{analysis_step, Forecast};
use crate::adapt::TrustState;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::filters::propagate;
use crate::metrics::spatio_temporal_rmse;
use crate::models::{attractor_state, CouplingMap, Lorenz96, ObservationModel, PairwiseNorm};
use crate::rom::{load_rom, MlpAutoencoder, RomBundle, RomSurrogate};
use crate::rng::RngStream;

pub const RMSE: &str = "rmse";
/// Time units integrated from the perturbed attractor state before step 0.
const TRUTH_SPINUP: f64 = 10.0;
const OBS_NOISE: f64 = 0.25;

/// Model, observation operator and, for multifidelity runs, the ROM.
pub struct LorenzSetup {
    pub model: Arc<Lorenz96>,
    pub obs: ObservationModel,
    pub rom: Option<(Arc<MlpAutoencoder>, RomSurrogate)>,
}

impl LorenzSetup {
    pub fn new(rom: Option<&RomBundle>) -> Result<Self> {
        let model = Arc::new(Lorenz96::default());
        let obs = lorenz96_observation(model.dim)?;
        let rom = match rom {
            Some(b) => {
                let ae = Arc::new(b.autoencoder.clone());
                let s = RomSurrogate::new(ae.clone(), model.clone(), b.residual.clone())?;
                Some((ae, s))
            }
            None => None,
        };
        Ok(Self { model, obs, rom })
    }
}

/// Pairwise norms with `R = 0.25 I`.
pub fn lorenz96_observation(dim: usize) -> Result<ObservationModel> {
    ObservationModel::new(PairwiseNorm::new(dim)?, DMatrix::identity(dim / 2, dim / 2) * OBS_NOISE)
}

/// Truth trajectory and observations of one replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct TwinTruth {
    pub initial: DVector<f64>,
    /// States at steps `1..=steps`.
    pub states: Vec<DVector<f64>>,
    pub observations: Vec<DVector<f64>>,
}

fn replicate_streams(seed: u64, replicate: usize) -> Vec<RngStream> {
    RngStream::new(seed, replicate as u64).spawn(3)
}

fn perturbed(x: &DVector<f64>, rng: &mut RngStream) -> DVector<f64> {
    x.map(|v| v + rng.standard_normal())
}

pub fn twin_truth(setup: &LorenzSetup, steps: usize, seed: u64, replicate: usize) -> TwinTruth {
    let mut rng = replicate_streams(seed, replicate).swap_remove(0);
    let model = &setup.model;
    let initial = model.integrate(&perturbed(&attractor_state(model), &mut rng), TRUTH_SPINUP);
    let mut states = Vec::with_capacity(steps);
    let mut observations = Vec::with_capacity(steps);
    let mut x = initial.clone();
    for _ in 0..steps {
        x = model.advance(&x);
        observations.push(setup.obs.observe(&x, &mut rng));
        states.push(x.clone());
    }
    TwinTruth {
        initial,
        states,
        observations,
    }
}

/// Outcome of one sequential twin experiment.
#[derive(Clone, Debug)]
pub struct LorenzReplicate {
    pub rmse: std::result::Result<f64, String>,
    /// Trust state after each cycle, adaptive filters only.
    pub trust_path: Vec<TrustState>,
    pub cycles: usize,
}

pub fn lorenz_replicate(setup: &LorenzSetup, cfg: &ExperimentConfig, replicate: usize) -> Result<LorenzReplicate> {
    let truth = twin_truth(setup, cfg.steps, cfg.seed, replicate);
    let mut streams = replicate_streams(cfg.seed, replicate);
    let n = setup.model.dim;
    let fcfg = cfg.filter_config(n)?;
    let em = cfg.em();
    let coupling: Option<&dyn CouplingMap> = setup.rom.as_ref().map(|(ae, _)| ae.as_ref() as &dyn CouplingMap);
    if cfg.filter.is_multifidelity() && coupling.is_none() {
        return Err(Error::Config(format!("{} needs a ROM", cfg.filter)));
    }

    // theory members first, extra perturbed states pad the reduced ensemble
    let count = if cfg.filter.is_multifidelity() { cfg.n_x.max(cfg.n_u) } else { cfg.n_x };
    let draws: Vec<DVector<f64>> = (0..count).map(|_| perturbed(&truth.initial, &mut streams[1])).collect();
    let mut theory = Ensemble::from_members(&draws[..cfg.n_x])?;
    let mut reduced = match coupling {
        Some(c) if cfg.filter.is_multifidelity() => {
            let u: Vec<DVector<f64>> = draws[..cfg.n_u].iter().map(|x| c.encode(x)).collect();
            Some(Ensemble::from_members(&u)?)
        }
        _ => None,
    };

    let mut trust = cfg.initial_trust();
    let mut trust_path = Vec::new();
    let mut estimates = Vec::with_capacity(cfg.steps - cfg.spinup);
    let limit = cfg.divergence_factor * cfg.no_filter_level;
    let rng = &mut streams[2];
    for k in 0..cfg.steps {
        let mut step = || -> Result<DVector<f64>> {
            theory = propagate(&theory, setup.model.as_ref(), rng)?;
            if let (Some(u), Some((_, surrogate))) = (&reduced, &setup.rom) {
                reduced = Some(propagate(u, surrogate, rng)?);
            }
            let Some(fcfg) = &fcfg else {
                return Ok(theory.mean());
            };
            let forecast = Forecast {
                theory: &theory,
                reduced: reduced.as_ref(),
                coupling,
            };
            let a = analysis_step(cfg.filter, &forecast, &setup.obs, &truth.observations[k], fcfg, &em, &mut trust, rng)?;
            theory = a.theory;
            if a.reduced.is_some() {
                reduced = a.reduced;
            }
            Ok(a.estimate)
        };
        let estimate = match step() {
            Ok(e) => e,
            Err(e) => return Ok(diverged(format!("cycle {k}: {e}"), trust_path, k)),
        };
        if cfg.filter.is_adaptive() {
            trust_path.push(trust);
        }
        let err = ((&estimate - &truth.states[k]).norm_squared() / n as f64).sqrt();
        if !(err <= limit) {
            return Ok(diverged(format!("cycle {k}: error {err} above {limit}"), trust_path, k));
        }
        if k >= cfg.spinup {
            estimates.push(estimate);
        }
    }
    let rmse = spatio_temporal_rmse(&estimates, &truth.states[cfg.spinup..])?;
    Ok(LorenzReplicate {
        rmse: Ok(rmse),
        trust_path,
        cycles: cfg.steps,
    })
}

fn diverged(reason: String, trust_path: Vec<TrustState>, cycles: usize) -> LorenzReplicate {
    LorenzReplicate {
        rmse: Err(reason),
        trust_path,
        cycles,
    }
}

/// Loads the ROM named in the config when the filter needs one.
pub fn run_lorenz96(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let bundle = load_configured_rom(cfg)?;
    let setup = LorenzSetup::new(bundle.as_ref())?;
    run_lorenz96_with(&setup, cfg)
}

pub(crate) fn load_configured_rom(cfg: &ExperimentConfig) -> Result<Option<RomBundle>> {
    if !cfg.filter.is_multifidelity() {
        return Ok(None);
    }
    let path = cfg
        .rom
        .as_deref()
        .ok_or_else(|| Error::Config(format!("{} needs --rom <file>", cfg.filter)))?;
    let bundle = load_rom(path)?;
    check_rom(&bundle, cfg, path)?;
    Ok(Some(bundle))
}

fn check_rom(bundle: &RomBundle, cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    if bundle.autoencoder.reduced_dim() != cfg.r_dim {
        return Err(Error::Config(format!(
            "{} has r_dim {}, config asks for {}",
            path.display(),
            bundle.autoencoder.reduced_dim(),
            cfg.r_dim
        )));
    }
    Ok(())
}

pub fn run_lorenz96_with(setup: &LorenzSetup, cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    if cfg.experiment != Experiment::Lorenz96 {
        return Err(Error::Config("run_lorenz96 needs experiment = lorenz96".into()));
    }
    cfg.validate()?;
    if let Some((ae, _)) = &setup.rom {
        if cfg.filter.is_multifidelity() && ae.reduced_dim() != cfg.r_dim {
            return Err(Error::Config(format!("ROM has r_dim {}, config asks for {}", ae.reduced_dim(), cfg.r_dim)));
        }
    }
    let start = Instant::now();
    let template = ResultRow::for_config(cfg);
    let per_rep: Vec<Vec<ResultRow>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<ResultRow>> {
            let t0 = Instant::now();
            let rep = lorenz_replicate(setup, cfg, r)?;
            let secs = t0.elapsed().as_secs_f64();
            let value = rep.rmse.as_ref().map_or(MetricValue::Diverged, |v| MetricValue::Value(*v));
            let mut rows = vec![template.with(Some(r), RMSE, value, secs)];
            for (k, t) in rep.trust_path.iter().enumerate() {
                rows.push(template.with(Some(r), &format!("s_x@{k}"), MetricValue::Value(t.s_x), secs));
                if let Some(s_u) = t.s_u {
                    rows.push(template.with(Some(r), &format!("s_u@{k}"), MetricValue::Value(s_u), secs));
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<ResultRow> = per_rep.into_iter().flatten().collect();
    let agg = aggregate_rows(&template, &rows, RMSE, start.elapsed().as_secs_f64());
    rows.extend(agg);
    Ok(rows)
}
