//! Attractor snapshots and full-batch autoencoder training.

use nalgebra::{DMatrix, DVector};

use super::adam::{AdamState, TriangularSchedule};
use super::mlp::MlpAutoencoder;
use crate::error::{Error, Result};
use crate::models::{attractor_state, Lorenz96};
use crate::rng::RngStream;

/// Time units integrated after the random nudge before the first snapshot.
pub const TRAINING_SPINUP: f64 = 10.0;

/// `count` consecutive states one assimilation interval apart, starting from
/// a randomly nudged attractor state after a spinup.
pub fn collect_training_data(model: &Lorenz96, count: usize, rng: &mut RngStream) -> Result<Vec<DVector<f64>>> {
    if count == 0 {
        return Err(Error::Argument("need at least one snapshot".into()));
    }
    let mut x = attractor_state(model);
    for v in x.iter_mut() {
        *v += rng.standard_normal();
    }
    x = model.integrate(&x, TRAINING_SPINUP);
    let mut out = Vec::with_capacity(count);
    out.push(x.clone());
    for _ in 1..count {
        x = model.advance(&x);
        out.push(x.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    /// Weight of the right-invertibility penalty.
    pub lambda: f64,
    pub schedule: TriangularSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            epochs: 5000,
            lambda: 10.0,
            schedule: TriangularSchedule::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub autoencoder: MlpAutoencoder,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Loss before each epoch's update.
    pub history: Vec<f64>,
}

impl TrainingOutcome {
    pub fn loss_ratio(&self) -> f64 {
        self.initial_loss / self.final_loss
    }
}

/// Per-coordinate mean and sample standard deviation (1 where constant).
pub fn standardization(data: &[DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
    let n = data[0].len();
    let count = data.len() as f64;
    let mut mean = DVector::zeros(n);
    for x in data {
        mean += x;
    }
    mean /= count;
    let mut var = DVector::zeros(n);
    for x in data {
        let d = x - &mean;
        var += d.component_mul(&d);
    }
    let denom = (count - 1.0).max(1.0);
    let std = var.map(|v| {
        let s = (v / denom).sqrt();
        if s > 1e-12 { s } else { 1.0 }
    });
    (mean, std)
}

pub fn train_autoencoder(
    data: &[DVector<f64>],
    r_dim: usize,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<TrainingOutcome> {
    if data.is_empty() {
        return Err(Error::Argument("training data is empty".into()));
    }
    let n = data[0].len();
    if data.iter().any(|x| x.len() != n) {
        return Err(Error::Argument("training snapshots differ in dimension".into()));
    }
    if r_dim == 0 || r_dim >= n {
        return Err(Error::Argument(format!("reduced dimension {r_dim} must lie in 1..{n}")));
    }
    if cfg.hidden == 0 {
        return Err(Error::Argument("hidden width must be positive".into()));
    }

    let mut ae = MlpAutoencoder::init(n, cfg.hidden, r_dim, rng);
    let (mean, std) = standardization(data);
    ae.x_mean = mean;
    ae.x_std = std;
    let batch = ae.standardize_batch(&DMatrix::from_columns(data));

    let initial_loss = ae.loss(&batch, cfg.lambda);
    if !initial_loss.is_finite() {
        return Err(Error::Training("non-finite loss at initialization".into()));
    }
    let shapes: Vec<usize> = {
        let mut probe = ae.clone();
        let mut s: Vec<usize> = probe.encoder.tensors_mut().iter().map(|t| t.len()).collect();
        s.extend(probe.decoder.tensors_mut().iter().map(|t| t.len()));
        s
    };
    let mut adam = AdamState::new(&shapes);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let eval = ae.loss_and_grads(&batch, cfg.lambda);
        if !eval.loss.is_finite() {
            return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
        }
        history.push(eval.loss);
        let grads: Vec<&[f64]> = eval
            .encoder
            .tensors()
            .into_iter()
            .chain(eval.decoder.tensors())
            .collect();
        let lr = cfg.schedule.rate(epoch);
        let MlpAutoencoder { encoder, decoder, .. } = &mut ae;
        let mut params: Vec<&mut [f64]> = encoder
            .tensors_mut()
            .into_iter()
            .chain(decoder.tensors_mut())
            .collect();
        adam.update(&mut params, &grads, lr);
    }

    let final_loss = ae.loss(&batch, cfg.lambda);
    if !final_loss.is_finite() || !ae.is_finite() {
        return Err(Error::Training("non-finite parameters after training".into()));
    }
    Ok(TrainingOutcome {
        autoencoder: ae,
        initial_loss,
        final_loss,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::CouplingMap;

    #[test]
    fn snapshots_shape_and_bounds() {
        let model = Lorenz96::default();
        let mut rng = RngStream::new(5, 1);
        let data = collect_training_data(&model, 200, &mut rng).unwrap();
        assert_eq!(data.len(), 200);
        assert!(data.iter().all(|x| x.len() == 40));
        assert!(data.iter().flat_map(|x| x.iter()).all(|v| (-20.0..=25.0).contains(v)));
        let one = collect_training_data(&model, 1, &mut RngStream::new(5, 1)).unwrap();
        assert_eq!(one[0], data[0]);
        assert!(collect_training_data(&model, 0, &mut rng).is_err());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let model = Lorenz96::default();
        let data = collect_training_data(&model, 20, &mut RngStream::new(1, 0)).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let out = train_autoencoder(&data, 5, &cfg, &mut RngStream::new(9, 0)).unwrap();
        let mut init = MlpAutoencoder::init(40, 100, 5, &mut RngStream::new(9, 0));
        let (m, s) = standardization(&data);
        init.x_mean = m;
        init.x_std = s;
        assert_eq!(out.autoencoder, init);
        assert_eq!(out.initial_loss, out.final_loss);
        assert!(out.history.is_empty());
    }

    #[test]
    fn short_training_reduces_loss_and_is_deterministic() {
        let model = Lorenz96::default();
        let data = collect_training_data(&model, 100, &mut RngStream::new(2, 0)).unwrap();
        let cfg = TrainConfig { hidden: 20, epochs: 200, ..TrainConfig::default() };
        let a = train_autoencoder(&data, 10, &cfg, &mut RngStream::new(3, 0)).unwrap();
        let b = train_autoencoder(&data, 10, &cfg, &mut RngStream::new(3, 0)).unwrap();
        assert_eq!(a.autoencoder, b.autoencoder);
        assert!(a.final_loss < a.initial_loss);
        assert_eq!(a.autoencoder.reduced_dim(), 10);
    }

    #[test]
    fn rejects_bad_arguments() {
        let data = vec![DVector::zeros(4); 3];
        let cfg = TrainConfig::default();
        let mut rng = RngStream::new(0, 0);
        assert!(train_autoencoder(&[], 2, &cfg, &mut rng).is_err());
        assert!(train_autoencoder(&data, 0, &cfg, &mut rng).is_err());
        assert!(train_autoencoder(&data, 4, &cfg, &mut rng).is_err());
    }

    #[test]
    fn diverging_loss_is_reported() {
        let data = vec![DVector::from_vec(vec![1.0, 2.0, 3.0]), DVector::from_vec(vec![0.0, 1.0, -1.0])];
        let cfg = TrainConfig {
            hidden: 4,
            epochs: 5,
            lambda: f64::INFINITY,
            schedule: TriangularSchedule::default(),
        };
        assert!(matches!(
            train_autoencoder(&data, 1, &cfg, &mut RngStream::new(0, 0)),
            Err(Error::Training(_))
        ));
    }
}
