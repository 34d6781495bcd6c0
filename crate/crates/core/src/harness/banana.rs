use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Experiment, ExperimentConfig};
use super::output::{aggregate_rows, MetricValue, ResultRow};
use super::step::{analysis_step, Forecast};
use crate::adapt::TrustState;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::filters::AnalysisResult;
use crate::metrics::{banana_true_posterior, f_divergence, filter_density_with, GridDensity, GridEvaluable, GridSpec};
use crate::mixture::gm_sample;
use crate::models::{banana_problem, BananaProblem, CouplingMap};
use crate::rng::RngStream;

pub const F_DIVERGENCE: &str = "f_divergence";

/// Problem definition and quadrature posterior, shared by every replicate.
pub struct BananaSetup {
    pub problem: BananaProblem,
    pub truth: GridDensity,
}

impl BananaSetup {
    pub fn new(grid_nodes: usize) -> Result<Self> {
        Ok(Self {
            problem: banana_problem()?,
            truth: banana_true_posterior(&GridSpec::banana_with_nodes(grid_nodes))?,
        })
    }
}

/// Result of one banana replicate.
#[derive(Debug)]
pub struct BananaReplicate {
    pub theory: Ensemble,
    pub reduced: Option<Ensemble>,
    /// Error message when the analysis or metric failed.
    pub outcome: std::result::Result<(AnalysisResult, f64), String>,
    pub trust: TrustState,
}

impl BananaReplicate {
    pub fn divergence(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|(_, d)| *d)
    }
}

/// Prior draws are shared by every filter run with the same seed and
/// replicate; the reduced ensemble projects its own independent draws.
pub fn banana_replicate(setup: &BananaSetup, cfg: &ExperimentConfig, replicate: usize) -> Result<BananaReplicate> {
    let p = &setup.problem;
    let mut streams = RngStream::new(cfg.seed, replicate as u64).spawn(3);
    let theory = gm_sample(&p.prior, cfg.n_x, &mut streams[0])?;
    let reduced = if cfg.filter.is_multifidelity() {
        let draws = gm_sample(&p.prior, cfg.n_u, &mut streams[1])?;
        Some(draws.map(|m| p.coupling.encode(&m.into_owned()))?)
    } else {
        None
    };
    let mut trust = cfg.initial_trust();
    let fcfg = cfg
        .filter_config(2)?
        .ok_or_else(|| Error::Config("the banana problem needs an analysis filter".into()))?;
    let forecast = Forecast {
        theory: &theory,
        reduced: reduced.as_ref(),
        coupling: Some(&p.coupling as &dyn CouplingMap),
    };
    let outcome = analysis_step(
        cfg.filter,
        &forecast,
        &p.observation,
        &p.y,
        &fcfg,
        &cfg.em(),
        &mut trust,
        &mut streams[2],
    )
    .and_then(|a| {
        let q = filter_density_with(&a, cfg.metric_density)?;
        let d = f_divergence(&setup.truth, q.as_ref())?;
        Ok((a, d))
    })
    .map_err(|e| e.to_string());
    Ok(BananaReplicate {
        theory,
        reduced,
        outcome,
        trust,
    })
}

pub fn run_banana(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let setup = BananaSetup::new(cfg.grid_nodes)?;
    run_banana_with(&setup, cfg)
}

/// [`run_banana`] against a prepared setup.
pub fn run_banana_with(setup: &BananaSetup, cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    if cfg.experiment != Experiment::Banana {
        return Err(Error::Config("run_banana needs experiment = banana".into()));
    }
    cfg.validate()?;
    let start = Instant::now();
    let template = ResultRow::for_config(cfg);
    let per_rep: Vec<Vec<ResultRow>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<ResultRow>> {
            let t0 = Instant::now();
            let rep = banana_replicate(setup, cfg, r)?;
            if r == 0 {
                if let Some(path) = &cfg.density_dump {
                    dump_density(path, setup, cfg, &rep)?;
                }
            }
            let secs = t0.elapsed().as_secs_f64();
            let value = rep.divergence().map_or(MetricValue::Diverged, MetricValue::Value);
            let mut rows = vec![template.with(Some(r), F_DIVERGENCE, value, secs)];
            if cfg.filter.is_adaptive() {
                rows.push(template.with(Some(r), "s_x@0", MetricValue::Value(rep.trust.s_x), secs));
                if let Some(s_u) = rep.trust.s_u {
                    rows.push(template.with(Some(r), "s_u@0", MetricValue::Value(s_u), secs));
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<ResultRow> = per_rep.into_iter().flatten().collect();
    let agg = aggregate_rows(&template, &rows, F_DIVERGENCE, start.elapsed().as_secs_f64());
    rows.extend(agg);
    Ok(rows)
}

#[derive(Serialize)]
struct DensityDump<'a> {
    filter: &'a str,
    grid: &'a GridSpec,
    /// Row-major over the grid, `x` fastest.
    true_log_density: &'a [f64],
    filter_log_density: Option<Vec<f64>>,
    prior_theory: Vec<Vec<f64>>,
    prior_reduced: Option<Vec<Vec<f64>>>,
    posterior_theory: Option<Vec<Vec<f64>>>,
    f_divergence: Option<f64>,
}

fn columns(e: &Ensemble) -> Vec<Vec<f64>> {
    e.iter().map(|c| c.as_slice().to_vec()).collect()
}

fn dump_density(path: &Path, setup: &BananaSetup, cfg: &ExperimentConfig, rep: &BananaReplicate) -> Result<()> {
    let grid = &setup.truth.grid;
    let (filter_log_density, posterior) = match &rep.outcome {
        Ok((a, _)) => {
            let q = filter_density_with(a, cfg.metric_density)?;
            let all: Vec<usize> = (0..grid.len()).collect();
            let raw = q.log_density_nodes(grid, &all)?;
            let z = q.log_box_mass(grid).unwrap_or(0.0);
            (Some(raw.iter().map(|v| v - z).collect()), Some(columns(&a.theory)))
        }
        Err(_) => (None, None),
    };
    let doc = DensityDump {
        filter: cfg.filter.name(),
        grid,
        true_log_density: &setup.truth.log_density,
        filter_log_density,
        prior_theory: columns(&rep.theory),
        prior_reduced: rep.reduced.as_ref().map(columns),
        posterior_theory: posterior,
        f_divergence: rep.divergence(),
    };
    let text = serde_json::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
