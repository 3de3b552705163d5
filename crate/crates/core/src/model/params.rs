//! Learnable weights of the generator or the critic.

use std::collections::BTreeMap;
use std::fmt;

use mp3gan_autodiff::{Tensor, Var};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::arch::{critic_specs, generator_specs, layer_table, ArchConfig, LayerKind, LayerSpec, Nonlinearity};
use crate::rng::{stream, Purpose};

pub const PRELU_INIT: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Generator,
    Critic,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Generator => "generator",
            Role::Critic => "critic",
        })
    }
}

/// Everything needed to rebuild a network's layer table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDesc {
    pub role: Role,
    pub arch: ArchConfig,
    /// Generator takes a noise input; always false for the critic.
    pub stochastic: bool,
}

impl NetworkDesc {
    pub fn generator(arch: ArchConfig, stochastic: bool) -> Self {
        Self {
            role: Role::Generator,
            arch,
            stochastic,
        }
    }

    pub fn critic(arch: ArchConfig) -> Self {
        Self {
            role: Role::Critic,
            arch,
            stochastic: false,
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        match self.role {
            Role::Generator => generator_specs(&self.arch, self.stochastic),
            Role::Critic => critic_specs(&self.arch),
        }
    }

    pub fn layer_table(&self) -> String {
        layer_table(&self.specs())
    }
}

/// One parameter tensor of a layer, with the fan-in used to initialise it.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    He { fan_in: usize },
    Constant(f64),
}

/// Parameter slots in layer order. Fan-in counts the inputs that reach one
/// output unit; for a transposed convolution only kernel taps that overlap
/// the input contribute.
pub fn param_slots(specs: &[LayerSpec], freq_bins: usize) -> Vec<ParamSlot> {
    let mut slots = Vec::new();
    let mut height = freq_bins;
    for s in specs {
        let (kh, kw) = s.kernel;
        let in_height = height;
        height = match s.kind {
            LayerKind::Conv | LayerKind::GatedConv => in_height + 2 * s.freq_pad - s.dilation * (kh - 1),
            LayerKind::DeConv => in_height + s.dilation * (kh - 1) - 2 * s.freq_pad,
            LayerKind::Reshape1 => s.in_maps / s.out_maps,
            LayerKind::Reshape2 => 1,
            _ => in_height,
        };
        if !s.kind.has_params() {
            continue;
        }
        let p = s.param_prefix();
        let (weight_shape, fan_in, raw_out) = match s.kind {
            LayerKind::DeConv => (
                vec![s.in_maps, s.out_maps / s.groups, kh, kw],
                s.in_maps / s.groups * kh.min(in_height) * kw,
                s.out_maps,
            ),
            _ => (
                vec![s.out_maps, s.in_maps / s.groups, kh, kw],
                s.in_maps / s.groups * kh * kw,
                s.out_maps,
            ),
        };
        slots.push(ParamSlot {
            name: format!("{p}.weight"),
            shape: weight_shape,
            init: Init::He { fan_in },
        });
        slots.push(ParamSlot {
            name: format!("{p}.bias"),
            shape: vec![raw_out],
            init: Init::Constant(0.0),
        });
        if s.nonlinearity == Nonlinearity::PRelu {
            let maps = if s.kind == LayerKind::GatedConv { raw_out / 2 } else { raw_out };
            slots.push(ParamSlot {
                name: format!("{p}.prelu"),
                shape: vec![maps],
                init: Init::Constant(PRELU_INIT),
            });
        }
    }
    slots
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    desc: NetworkDesc,
    tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    /// Accepts exactly the tensors the layer table calls for, with matching
    /// shapes and finite values.
    pub fn from_tensors(desc: NetworkDesc, mut tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        desc.arch.validate()?;
        let slots = param_slots(&desc.specs(), desc.arch.freq_bins);
        let mut out = BTreeMap::new();
        for slot in &slots {
            let t = tensors
                .remove(&slot.name)
                .ok_or_else(|| Error::Checkpoint(format!("{} tensor {} missing", desc.role, slot.name)))?;
            if t.shape() != slot.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "{} tensor {} has shape {:?}, expected {:?}",
                    desc.role,
                    slot.name,
                    t.shape(),
                    slot.shape
                )));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("{} tensor {}", desc.role, slot.name)));
            }
            out.insert(slot.name.clone(), t);
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected {} tensor {extra}", desc.role)));
        }
        Ok(Self { desc, tensors: out })
    }

    pub fn desc(&self) -> &NetworkDesc {
        &self.desc
    }

    pub fn role(&self) -> Role {
        self.desc.role
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.desc.arch
    }

    pub fn stochastic(&self) -> bool {
        self.desc.stochastic
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.desc.specs()
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn num_params(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// In-place access to one tensor's values.
    pub fn values_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        self.tensors
            .get_mut(name)
            .map(|t| t.data_mut())
            .ok_or_else(|| Error::Checkpoint(format!("no parameter {name}")))
    }

    /// Replace one tensor, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| Error::Checkpoint(format!("no parameter {name}")))?;
        if slot.shape() != value.shape() {
            return Err(Error::Shape(format!(
                "parameter {name}: shape {:?}, got {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    /// Graph leaves (`trainable`) or constants for a forward pass.
    pub fn weights(&self, trainable: bool) -> Weights {
        let vars = self
            .tensors
            .iter()
            .map(|(k, t)| {
                let v = if trainable { Var::leaf(t.clone()) } else { Var::constant(t.clone()) };
                (k.clone(), v)
            })
            .collect();
        Weights {
            desc: self.desc.clone(),
            specs: self.specs(),
            vars,
        }
    }
}

impl ModelParams {
    /// Like [`ModelParams::weights`] with constants, without copying the
    /// tensors.
    pub fn into_weights(self) -> Weights {
        let specs = self.desc.specs();
        let vars = self
            .tensors
            .into_iter()
            .map(|(k, t)| (k, Var::constant(t)))
            .collect();
        Weights {
            desc: self.desc,
            specs,
            vars,
        }
    }

    /// Zero tensors of the right shapes.
    pub fn zeros(desc: NetworkDesc) -> Result<Self> {
        desc.arch.validate()?;
        let tensors = param_slots(&desc.specs(), desc.arch.freq_bins)
            .into_iter()
            .map(|s| {
                let t = Tensor::zeros(&s.shape);
                (s.name, t)
            })
            .collect();
        Self::from_tensors(desc, tensors)
    }
}

/// Parameters wrapped for a forward pass.
#[derive(Clone, Debug)]
pub struct Weights {
    pub desc: NetworkDesc,
    pub specs: Vec<LayerSpec>,
    vars: BTreeMap<String, Var>,
}

impl Weights {
    pub fn get(&self, name: &str) -> Result<&Var> {
        self.vars
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("{} has no parameter {name}", self.desc.role)))
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }
}

/// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases and PReLU
/// slopes of 0.25. Each layer draws from its own seeded stream.
pub fn he_init(desc: NetworkDesc, seed: u64) -> Result<ModelParams> {
    desc.arch.validate()?;
    let slots = param_slots(&desc.specs(), desc.arch.freq_bins);
    let role_tag = match desc.role {
        Role::Generator => 0u64,
        Role::Critic => 1u64 << 32,
    };
    let mut tensors = BTreeMap::new();
    for (i, slot) in slots.iter().enumerate() {
        let t = match slot.init {
            Init::He { fan_in } => {
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                let mut rng = stream(seed, Purpose::Init, role_tag | i as u64);
                Tensor::from_fn(&slot.shape, |_| normal.sample(&mut rng))
            }
            Init::Constant(c) => Tensor::full(&slot.shape, c),
        };
        tensors.insert(slot.name.clone(), t);
    }
    ModelParams::from_tensors(desc, tensors)
}
