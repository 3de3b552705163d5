//! Settings shared by all commands, read from a TOML file and overridden by
//! flags. The effective settings are written to the output directory before
//! a command runs.

use std::collections::BTreeMap;
use std::path::Path;

use mp3gan::dataset::codec::{Bitrate, CodecConfig, DECODER_ENV, ENCODER_ENV};
use mp3gan::dataset::split::{Split, DEFAULT_RATIOS};
use mp3gan::evaluation::{PeaqConfig, Protocol, System};
use mp3gan::hashing::sha256_hex;
use mp3gan::training::TrainConfig;
use mp3gan::{Error, Result};
use serde::{Deserialize, Serialize};

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareSection {
    pub seed: u64,
    pub bitrates: Vec<Bitrate>,
    pub ratios: [f64; 3],
    pub resample: bool,
}

impl Default for PrepareSection {
    fn default() -> Self {
        Self {
            seed: 0,
            bitrates: Bitrate::ALL.to_vec(),
            ratios: DEFAULT_RATIOS,
            resample: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub split: Split,
    pub systems: Vec<System>,
    pub bitrates: Vec<Bitrate>,
    pub protocol: Protocol,
    pub peaq: PeaqConfig,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            split: Split::Test,
            systems: vec![System::Mp3],
            bitrates: vec![Bitrate::K16],
            protocol: Protocol::default(),
            peaq: PeaqConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestoreSection {
    pub seed: u64,
    pub n_samples: usize,
    /// Frames per forward pass.
    pub chunk: usize,
}

impl Default for RestoreSection {
    fn default() -> Self {
        Self {
            seed: 0,
            n_samples: 1,
            chunk: mp3gan::model::DEFAULT_CHUNK,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    pub seed: u64,
    pub split: Split,
    pub bitrate: Bitrate,
    pub z_count: usize,
    pub excerpt_count: usize,
    /// 344 frames are four seconds.
    pub excerpt_frames: usize,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            seed: 0,
            split: Split::Test,
            bitrate: Bitrate::K16,
            z_count: 8,
            excerpt_count: 50,
            excerpt_frames: 344,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Command that wrote this file; ignored when loading.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    /// Input and output locations; ignored when loading and when hashing.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub paths: BTreeMap<String, String>,
    pub prepare: PrepareSection,
    pub codec: CodecConfig,
    pub train: TrainConfig,
    pub evaluate: EvaluateSection,
    pub restore: RestoreSection,
    pub profile: ProfileSection,
}

impl RunConfig {
    /// Defaults, with codec executables taken from the environment.
    pub fn with_env() -> Self {
        Self {
            codec: CodecConfig::from_env(),
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut c: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if !text.contains("[codec]") {
            c.codec = CodecConfig::from_env();
        }
        for (var, slot) in [(ENCODER_ENV, &mut c.codec.encoder), (DECODER_ENV, &mut c.codec.decoder)] {
            if let Some(p) = std::env::var_os(var) {
                *slot = p.into();
            }
        }
        c.command = None;
        c.paths.clear();
        Ok(c)
    }

    /// Set every seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.prepare.seed = seed;
        self.train.seed = seed;
        self.evaluate.protocol.seed = seed;
        self.restore.seed = seed;
        self.profile.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.evaluate.protocol.validate()?;
        if self.restore.n_samples == 0 || self.restore.chunk == 0 {
            return Err(Error::Config("restore n_samples and chunk must be positive".into()));
        }
        if self.profile.z_count == 0 || self.profile.excerpt_count == 0 || self.profile.excerpt_frames == 0 {
            return Err(Error::Config("profile counts must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Hex SHA-256 of the settings, without command name and paths.
    pub fn settings_hash(&self) -> String {
        let mut s = self.clone();
        s.command = None;
        s.paths.clear();
        sha256_hex(s.to_toml().as_bytes())
    }

    /// Write the effective settings for `command` to `out_dir`.
    pub fn write_effective(&self, command: &str, paths: &[(&str, &Path)], out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
        let mut c = self.clone();
        c.command = Some(command.to_string());
        c.paths = paths
            .iter()
            .map(|(k, p)| (k.to_string(), p.display().to_string()))
            .collect();
        let path = out_dir.join(EFFECTIVE_CONFIG);
        std::fs::write(&path, c.to_toml()).map_err(|e| io(&path, e))
    }
}

pub fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
