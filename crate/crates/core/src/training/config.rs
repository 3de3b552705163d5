//! Training hyperparameters, read from and written to flat TOML files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::segment::{DEFAULT_BATCH, DEFAULT_OVERLAP, SEGMENT_FRAMES};
use crate::dataset::Bitrate;
use crate::error::{Error, Result};
use crate::model::{ArchConfig, NetworkDesc};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub gp_coeff: f64,
    pub drift_coeff: f64,
    /// Strength of the profile regularizer.
    pub theta: f64,
    pub p_freq: f64,
    pub p_rhyt: f64,
    pub critic_steps: usize,
    pub seed: u64,
    pub stochastic: bool,
    pub bitrate: Bitrate,
    /// Architecture preset: `full`, `small` or `tiny`.
    pub arch: String,
    /// Frames per training excerpt.
    pub segment_frames: usize,
    pub overlap: f64,
    /// Save a checkpoint every this many steps (0: only first and last).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.0,
            beta2: 0.9,
            adam_eps: 1e-8,
            batch_size: DEFAULT_BATCH,
            iterations: 40_000,
            gp_coeff: 10.0,
            drift_coeff: 1e-3,
            theta: 1.0,
            p_freq: 1.3,
            p_rhyt: 1.6,
            critic_steps: 1,
            seed: 0,
            stochastic: true,
            bitrate: Bitrate::K16,
            arch: "full".into(),
            segment_frames: SEGMENT_FRAMES,
            overlap: DEFAULT_OVERLAP,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("lr", self.lr),
            ("adam_eps", self.adam_eps),
            ("gp_coeff", self.gp_coeff),
            ("drift_coeff", self.drift_coeff),
            ("theta", self.theta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                problems.push(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                problems.push(format!("{name} must be in [0, 1), got {v}"));
            }
        }
        for (name, v) in [("p_freq", self.p_freq), ("p_rhyt", self.p_rhyt)] {
            if !(v.is_finite() && v > 1.0) {
                problems.push(format!("{name} must be > 1, got {v}"));
            }
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".into());
        }
        if self.critic_steps == 0 {
            problems.push("critic_steps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.overlap) {
            problems.push(format!("overlap must be in [0, 1), got {}", self.overlap));
        }
        match ArchConfig::preset(&self.arch) {
            Err(e) => problems.push(e.to_string()),
            Ok(arch) => {
                if self.segment_frames <= arch.train_shrink() {
                    problems.push(format!(
                        "segment_frames {} must exceed the generator's shrink of {} frames",
                        self.segment_frames,
                        arch.train_shrink()
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn arch_config(&self) -> Result<ArchConfig> {
        ArchConfig::preset(&self.arch)
    }

    pub fn generator_desc(&self) -> Result<NetworkDesc> {
        Ok(NetworkDesc::generator(self.arch_config()?, self.stochastic))
    }

    pub fn critic_desc(&self) -> Result<NetworkDesc> {
        Ok(NetworkDesc::critic(self.arch_config()?))
    }

    /// Output frames of the generator in training mode.
    pub fn output_frames(&self) -> Result<usize> {
        Ok(self.segment_frames - self.arch_config()?.train_shrink())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(format!("training config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    /// True when two configs describe the same trajectory; the run length
    /// and checkpoint cadence may differ.
    pub fn same_trajectory(&self, other: &Self) -> bool {
        let strip = |c: &Self| Self {
            iterations: 0,
            checkpoint_every: 0,
            ..c.clone()
        };
        strip(self) == strip(other)
    }
}
