//! Autoencoder reduced-order model for Lorenz '96.

mod adam;
mod io;
mod mlp;
mod surrogate;
mod train;

pub use adam::{AdamState, TriangularSchedule};
pub use io::{load_rom, rom_from_json, rom_to_json, save_rom, RomBundle, TrainingInfo, ROM_FORMAT, ROM_FORMAT_VERSION};
pub use mlp::{LossEval, Mlp, MlpAutoencoder, MlpGrads};
pub use surrogate::{one_step_residuals, residual_statistics, rom_forward, ResidualStats, RomSurrogate};
pub use train::{collect_training_data, standardization, train_autoencoder, TrainConfig, TrainingOutcome, TRAINING_SPINUP};
