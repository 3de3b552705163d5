//! Versioned checkpoint container.
//!
//! Layout: the magic `MP3GANCK`, a little-endian `u32` format version, a
//! `u64` header length, a JSON header, then the raw little-endian `f64`
//! values of every tensor in header order. The header stores the layer
//! table of each network, which must match the table rebuilt by this
//! build before any weights are accepted.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use mp3gan_autodiff::Tensor;
use serde::{Deserialize, Serialize};
use crate::hashing::sha256_hex;

use crate::error::{Error, Result};
use crate::model::params::{ModelParams, NetworkDesc, Role};

pub const MAGIC: &[u8; 8] = b"MP3GANCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct NetworkMeta {
    #[serde(flatten)]
    desc: NetworkDesc,
    layer_table: String,
    prefix: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    models: BTreeMap<String, NetworkMeta>,
    #[serde(default)]
    training: Option<serde_json::Value>,
    tensors: Vec<TensorEntry>,
}

/// Optimizer and loop state stored alongside the networks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingBlob {
    pub meta: serde_json::Value,
    pub tensors: BTreeMap<String, Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub generator: ModelParams,
    pub critic: Option<ModelParams>,
    pub training: Option<TrainingBlob>,
}

fn prefix(role: Role) -> &'static str {
    match role {
        Role::Generator => "G/",
        Role::Critic => "D/",
    }
}

const TRAINING_PREFIX: &str = "T/";

impl Checkpoint {
    pub fn new(generator: ModelParams) -> Self {
        Self {
            generator,
            critic: None,
            training: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut models = BTreeMap::new();
        let mut entries = Vec::new();
        let mut payload: Vec<&Tensor> = Vec::new();
        for m in std::iter::once(&self.generator).chain(self.critic.as_ref()) {
            let p = prefix(m.role());
            models.insert(
                m.role().to_string(),
                NetworkMeta {
                    desc: m.desc().clone(),
                    layer_table: m.desc().layer_table(),
                    prefix: p.into(),
                },
            );
            for (name, t) in m.tensors() {
                entries.push(TensorEntry {
                    name: format!("{p}{name}"),
                    shape: t.shape().to_vec(),
                });
                payload.push(t);
            }
        }
        if let Some(tr) = &self.training {
            for (name, t) in &tr.tensors {
                entries.push(TensorEntry {
                    name: format!("{TRAINING_PREFIX}{name}"),
                    shape: t.shape().to_vec(),
                });
                payload.push(t);
            }
        }
        let header = Header {
            version: FORMAT_VERSION,
            models,
            training: self.training.as_ref().map(|t| t.meta.clone()),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let values: usize = payload.iter().map(|t| t.numel()).sum();
        let mut out = Vec::with_capacity(20 + json.len() + 8 * values);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in payload {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..20usize.saturating_add(hlen)).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        if header.version != version {
            return Err(bad("header version differs from container version"));
        }
        for (key, m) in &header.models {
            if *key != m.desc.role.to_string() || m.prefix != prefix(m.desc.role) {
                return Err(Error::Checkpoint(format!("inconsistent entry for {key}")));
            }
            if m.layer_table != m.desc.layer_table() {
                return Err(Error::Checkpoint(format!(
                    "{key} layer table in the checkpoint does not match this build's architecture"
                )));
            }
        }

        let mut data = &bytes[20 + hlen..];
        let mut groups: BTreeMap<&str, BTreeMap<String, Tensor>> = BTreeMap::new();
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            if data.len() < 8 * n {
                return Err(Error::Checkpoint(format!("tensor {} is truncated", e.name)));
            }
            let values = data[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            data = &data[8 * n..];
            let (p, name) = e.name.split_at(e.name.find('/').map_or(0, |i| i + 1));
            let key = match p {
                "G/" => "generator",
                "D/" => "critic",
                TRAINING_PREFIX => "training",
                _ => return Err(Error::Checkpoint(format!("tensor {} has no known prefix", e.name))),
            };
            groups
                .entry(key)
                .or_default()
                .insert(name.to_string(), Tensor::new(&e.shape, values));
        }
        if !data.is_empty() {
            return Err(bad("trailing bytes after the last tensor"));
        }
        let mut take = |role: &str| -> Result<Option<ModelParams>> {
            match header.models.get(role) {
                None => Ok(None),
                Some(m) => {
                    let tensors = groups.remove(role).unwrap_or_default();
                    ModelParams::from_tensors(m.desc.clone(), tensors).map(Some)
                }
            }
        };
        let generator = take("generator")?.ok_or_else(|| bad("checkpoint holds no generator"))?;
        let critic = take("critic")?;
        let training = match (header.training, groups.remove("training")) {
            (None, None) => None,
            (meta, tensors) => Some(TrainingBlob {
                meta: meta.unwrap_or(serde_json::Value::Null),
                tensors: tensors.unwrap_or_default(),
            }),
        };
        if let Some(k) = groups.keys().next() {
            return Err(Error::Checkpoint(format!("tensors for undeclared network {k}")));
        }
        Ok(Self {
            generator,
            critic,
            training,
        })
    }

    /// Write via a temporary file in the same directory and rename, so an
    /// interrupted save never leaves a partial checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        tmp.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Load one network from a checkpoint.
pub fn load_model(path: &Path, role: Role) -> Result<ModelParams> {
    let ck = Checkpoint::load(path)?;
    match role {
        Role::Generator => Ok(ck.generator),
        Role::Critic => ck
            .critic
            .ok_or_else(|| Error::Checkpoint(format!("{}: no critic stored", path.display()))),
    }
}

/// Hex SHA-256 of a checkpoint file, used to identify it in reports.
pub fn checkpoint_id(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
