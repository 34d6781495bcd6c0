//! Dynamical models, observation operators and full/reduced coupling maps.

mod banana;
mod coupling;
mod lorenz96;
mod observation;

pub use banana::{banana_problem, BananaProblem, BANANA_PRIOR_COV, BANANA_PRIOR_MEAN};
pub use coupling::{CouplingMap, DecoderMap, EncoderMap, LinearProjection};
pub use lorenz96::{
    attractor_state, lorenz96_observe, lorenz96_rhs, rk4_step, Lorenz96, PairwiseNorm,
};
pub use observation::{perturbed_observations, ObservationModel};

use nalgebra::DVector;

use crate::rng::RngStream;

/// Advances a state by one assimilation interval.
pub trait DynamicalModel: Sync {
    fn dim(&self) -> usize;
    /// Deterministic given the stream state; stochastic models draw their
    /// process noise from `rng`.
    fn step(&self, x: &DVector<f64>, rng: &mut RngStream) -> DVector<f64>;
}

/// `x ↦ x`, handy for tests of the analysis steps.
#[derive(Clone, Copy, Debug)]
pub struct Stationary(pub usize);

impl DynamicalModel for Stationary {
    fn dim(&self) -> usize {
        self.0
    }

    fn step(&self, x: &DVector<f64>, _rng: &mut RngStream) -> DVector<f64> {
        x.clone()
    }
}
