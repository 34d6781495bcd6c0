use rayon::prelude::*;
use serde::Serialize;

use super::banana::{run_banana_with, BananaSetup, F_DIVERGENCE};
use super::config::{Experiment, ExperimentConfig, FilterKind};
use super::lorenz::{load_configured_rom, run_lorenz96_with, LorenzSetup, RMSE};
use super::output::ResultRow;
use crate::error::{Error, Result};

/// Lowest mean metric per (filter, N_X).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepBest {
    pub filter: String,
    pub n_x: usize,
    pub s_x: Option<f64>,
    pub s_u: Option<f64>,
    pub alpha_x: Option<f64>,
    pub alpha_u: Option<f64>,
    pub mean: f64,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<ResultRow>,
    pub best: Vec<SweepBest>,
}

fn or_single<T: Copy>(grid: &[T], value: T) -> Vec<T> {
    if grid.is_empty() {
        vec![value]
    } else {
        grid.to_vec()
    }
}

/// Cartesian product of the grids that matter for the configured filter.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let f = cfg.filter;
    let tuned = |on: bool, grid: &[f64], v: f64| if on { or_single(grid, v) } else { vec![v] };
    let fixed_mixture = matches!(f, FilterKind::Engmf | FilterKind::Mfengmf);
    let s_x = tuned(fixed_mixture, &cfg.s_x_grid, cfg.s_x);
    let s_u = tuned(f == FilterKind::Mfengmf, &cfg.s_u_grid, cfg.s_u);
    let a_x = tuned(f.is_kalman(), &cfg.alpha_x_grid, cfg.alpha_x);
    let a_u = tuned(f == FilterKind::Mfenkf, &cfg.alpha_u_grid, cfg.alpha_u);
    let mut out = Vec::new();
    for &n_x in &or_single(&cfg.n_x_grid, cfg.n_x) {
        for &sx in &s_x {
            for &su in &s_u {
                for &ax in &a_x {
                    for &au in &a_u {
                        out.push(ExperimentConfig {
                            n_x,
                            s_x: sx,
                            s_u: su,
                            alpha_x: ax,
                            alpha_u: au,
                            n_x_grid: Vec::new(),
                            s_x_grid: Vec::new(),
                            s_u_grid: Vec::new(),
                            alpha_x_grid: Vec::new(),
                            alpha_u_grid: Vec::new(),
                            density_dump: None,
                            ..cfg.clone()
                        });
                    }
                }
            }
        }
    }
    out
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let points = sweep_points(cfg);
    let (rows, metric): (Vec<Vec<ResultRow>>, &str) = match cfg.experiment {
        Experiment::Banana => {
            let setup = BananaSetup::new(cfg.grid_nodes)?;
            let rows = points.par_iter().map(|p| run_banana_with(&setup, p)).collect::<Result<_>>()?;
            (rows, F_DIVERGENCE)
        }
        Experiment::Lorenz96 => {
            let rom = load_configured_rom(cfg)?;
            let setup = LorenzSetup::new(rom.as_ref())?;
            let rows = points.par_iter().map(|p| run_lorenz96_with(&setup, p)).collect::<Result<_>>()?;
            (rows, RMSE)
        }
    };
    let best = best_per_ensemble_size(&rows, metric)?;
    Ok(SweepReport {
        rows: rows.into_iter().flatten().collect(),
        best,
    })
}

fn best_per_ensemble_size(runs: &[Vec<ResultRow>], metric: &str) -> Result<Vec<SweepBest>> {
    let mut best: Vec<SweepBest> = Vec::new();
    for run in runs {
        let Some(agg) = run.iter().find(|r| r.replicate.is_none() && r.metric == metric) else {
            return Err(Error::Numerical("sweep run produced no aggregate".into()));
        };
        let Some(mean) = agg.value.value() else {
            continue;
        };
        let cand = SweepBest {
            filter: agg.filter.clone(),
            n_x: agg.n_x,
            s_x: agg.s_x,
            s_u: agg.s_u,
            alpha_x: agg.alpha_x,
            alpha_u: agg.alpha_u,
            mean,
        };
        match best.iter_mut().find(|b| b.filter == cand.filter && b.n_x == cand.n_x) {
            Some(b) if cand.mean < b.mean => *b = cand,
            Some(_) => {}
            None => best.push(cand),
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_expand_only_where_relevant() {
        let cfg = ExperimentConfig {
            filter: FilterKind::Enkf,
            n_x_grid: vec![5, 10],
            s_x_grid: vec![0.5, 1.0, 2.0],
            alpha_x_grid: vec![1.0, 1.05, 1.1],
            alpha_u_grid: vec![1.0, 1.1],
            ..ExperimentConfig::lorenz96()
        };
        assert_eq!(sweep_points(&cfg).len(), 6);
        let mf = ExperimentConfig {
            filter: FilterKind::Mfengmf,
            s_u_grid: vec![1.0, 2.0],
            ..cfg.clone()
        };
        assert_eq!(sweep_points(&mf).len(), 12);
        let adaptive = ExperimentConfig {
            filter: FilterKind::Amfengmf,
            ..mf
        };
        assert_eq!(sweep_points(&adaptive).len(), 2);
    }

    #[test]
    fn single_point_sweep_matches_a_plain_run() {
        let cfg = ExperimentConfig {
            replicates: 4,
            grid_nodes: 121,
            ..ExperimentConfig::banana()
        };
        let plain = super::super::run_banana(&cfg).unwrap();
        let swept = run_sweep(&cfg).unwrap();
        let strip = |rows: &[ResultRow]| -> Vec<ResultRow> { rows.iter().map(|r| ResultRow { runtime_s: 0.0, ..r.clone() }).collect() };
        assert_eq!(strip(&plain), strip(&swept.rows));
        assert_eq!(swept.best.len(), 1);
    }
}
