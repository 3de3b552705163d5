//! Adversarial training of the generator against the critic.

pub mod adam;
pub mod config;
pub mod losses;
pub mod run;
pub mod state;

pub use adam::Adam;
pub use config::TrainConfig;
pub use losses::{
    drift_penalty, gradient_penalty, interpolation_weights, profile, profile_loss, root_power,
    wasserstein_loss, ProfileAxis, GP_NORM_EPS, PROFILE_FLOOR, ROOT_POWER_EPS,
};
pub use run::{
    checkpoint_path, read_loss_log, resume, run, train, training_batches, TrainOutcome,
    CHECKPOINT_DIR, CONFIG_FILE, LOSS_LOG, LOSS_LOG_HEADER,
};
pub use state::{step_noise, train_step, LossRecord, LossTotals, TrainState, LOSS_COLUMNS};
