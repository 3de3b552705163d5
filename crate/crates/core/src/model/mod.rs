//! Generator and critic networks.

pub mod arch;
pub mod checkpoint;
pub mod forward;
pub mod inference;
pub mod params;

pub use arch::{
    critic_specs, generator_specs, layer_table, receptive_radius, ArchConfig, LayerKind, LayerSpec,
    Nonlinearity, CRITIC_GROUPS, TABLE_HEADER,
};
pub use checkpoint::{checkpoint_id, load_model, Checkpoint, TrainingBlob};
pub use forward::{
    bands_from_filters, critic_forward, critic_forward_traced, critic_scores, critic_value,
    critic_views, filters_from_bands, frequency_aggregate, gated_conv, generator_forward,
    generator_forward_traced, prelu, root_magnitude, self_gate, ShapeTrace, TimeMode,
};
pub use inference::{restore_audio, restore_spectrogram, sample_noise, DEFAULT_CHUNK};
pub use params::{he_init, param_slots, Init, ModelParams, NetworkDesc, ParamSlot, Role, Weights};
