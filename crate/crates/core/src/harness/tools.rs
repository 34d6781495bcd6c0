use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::config::{Experiment, ExperimentConfig};
use super::lorenz::{twin_truth, LorenzSetup};
use super::output::{MetricValue, ResultRow};
use crate::error::{Error, Result};
use crate::models::Lorenz96;
use crate::rom::{
    collect_training_data, residual_statistics, save_rom, train_autoencoder, RomBundle, TrainConfig, TrainingInfo,
    TrainingOutcome,
};
use crate::rng::RngStream;

/// Collect attractor snapshots, train the autoencoder, fit the residual
/// noise on the same trajectory.
pub fn train_rom(cfg: &ExperimentConfig) -> Result<(RomBundle, TrainingOutcome)> {
    if cfg.r_dim == 0 || cfg.r_dim >= 40 {
        return Err(Error::Config(format!("r_dim {} must lie in 1..40", cfg.r_dim)));
    }
    let model = Arc::new(Lorenz96::default());
    let mut streams = RngStream::new(cfg.seed, u64::MAX).spawn(2);
    let data = collect_training_data(&model, cfg.rom_samples, &mut streams[0])?;
    let tc = TrainConfig {
        hidden: cfg.rom_hidden,
        epochs: cfg.rom_epochs,
        lambda: cfg.rom_lambda,
        ..TrainConfig::default()
    };
    let outcome = train_autoencoder(&data, cfg.r_dim, &tc, &mut streams[1])?;
    let residual = residual_statistics(&outcome.autoencoder, model.as_ref(), &data)?;
    let training = TrainingInfo {
        seed: cfg.seed,
        samples: cfg.rom_samples,
        epochs: cfg.rom_epochs,
        lambda: cfg.rom_lambda,
        initial_loss: outcome.initial_loss,
        final_loss: outcome.final_loss,
    };
    let bundle = RomBundle {
        autoencoder: outcome.autoencoder.clone(),
        residual,
        training: Some(training),
    };
    Ok((bundle, outcome))
}

pub fn write_rom(bundle: &RomBundle, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_rom(path, &bundle.autoencoder, &bundle.residual, bundle.training.as_ref())
}

/// Loss summary of a training run as result rows.
pub fn training_rows(cfg: &ExperimentConfig, outcome: &TrainingOutcome, runtime_s: f64) -> Vec<ResultRow> {
    let mut t = ResultRow::for_config(cfg);
    t.experiment = Experiment::Lorenz96.name().into();
    t.filter = "rom".into();
    t.r_dim = Some(cfg.r_dim);
    t.s_x = None;
    t.s_u = None;
    t.alpha_x = None;
    t.alpha_u = None;
    [
        ("initial_loss", outcome.initial_loss),
        ("final_loss", outcome.final_loss),
        ("loss_ratio", outcome.loss_ratio()),
    ]
    .into_iter()
    .map(|(m, v)| t.with(None, m, MetricValue::Value(v), runtime_s))
    .collect()
}

/// Truth and observations of every replicate as CSV: one row per step and
/// kind, coordinates in columns `v0, v1, ...`.
pub fn make_truth(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let setup = LorenzSetup::new(None)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let csv_err = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        k => Error::Format {
            path: path.to_path_buf(),
            msg: format!("{k:?}"),
        },
    })?;
    let n = setup.model.dim;
    let mut header = vec!["replicate".to_string(), "step".into(), "kind".into()];
    header.extend((0..n).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in 0..cfg.replicates {
        let t = twin_truth(&setup, cfg.steps, cfg.seed, r);
        let mut emit = |step: usize, kind: &str, v: &[f64]| -> Result<()> {
            let mut rec = vec![r.to_string(), step.to_string(), kind.to_string()];
            rec.extend(v.iter().map(|x| x.to_string()));
            rec.resize(3 + n, String::new());
            w.write_record(&rec).map_err(csv_err)
        };
        emit(0, "truth", t.initial.as_slice())?;
        for (k, (x, y)) in t.states.iter().zip(&t.observations).enumerate() {
            emit(k + 1, "truth", x.as_slice())?;
            emit(k + 1, "obs", y.as_slice())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
