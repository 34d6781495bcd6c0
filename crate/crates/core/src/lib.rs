pub mod adapt;
pub mod ensemble;
pub mod error;
pub mod filters;
pub mod gmu;
pub mod harness;
pub mod kde;
pub mod linalg;
pub mod metrics;
pub mod mixture;
pub mod models;
pub mod rng;
pub mod rom;

pub use ensemble::{ensemble_mean_cov, Ensemble};
pub use error::{Error, Result};
pub use gmu::{gaussian_mixture_update, gmu_shared_covariance, GmuConfig, InformationMap};
pub use kde::{build_localization, kde_estimate, silverman_bandwidth, KdeConfig, LocalizationMatrix};
pub use mixture::{discrete_sample, gm_logpdf, gm_sample, GaussianMixture};
pub use rng::RngStream;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
