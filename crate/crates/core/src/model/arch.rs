//! Layer tables of the generator and the critic.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sizes of one instance of the architecture.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Frequency bins of the input spectrogram.
    pub freq_bins: usize,
    /// Output maps of Conv1 and of Conv2/Conv3.
    pub front_maps: [usize; 2],
    pub front_dilations: [usize; 3],
    /// Responses of the full-height aggregation filters (Conv4).
    pub agg_filters: usize,
    /// Bands after regrouping the aggregation responses.
    pub bands: usize,
    /// Maps after ReMap and Conv5.
    pub remap: usize,
    /// Maps after each self-gating step (half the raw conv maps).
    pub gated: usize,
    /// Dilations of the gated layers Conv6 onwards.
    pub dilations: Vec<usize>,
    pub noise_dim: usize,
    /// Maps of the critic's Conv15.
    pub critic_maps: usize,
}

pub const CRITIC_GROUPS: usize = 2;

impl ArchConfig {
    pub fn full() -> Self {
        Self {
            freq_bins: 1024,
            front_maps: [18, 38],
            front_dilations: [1, 2, 4],
            agg_filters: 4096,
            bands: 32,
            remap: 256,
            gated: 128,
            dilations: vec![2, 4, 8, 16, 1, 2, 4, 8, 16],
            noise_dim: 64,
            critic_maps: 256,
        }
    }

    /// Full-resolution input with far fewer maps and a shorter dilation
    /// schedule; trains on a CPU in minutes.
    pub fn small() -> Self {
        Self {
            freq_bins: 1024,
            front_maps: [4, 6],
            front_dilations: [1, 2, 4],
            agg_filters: 128,
            bands: 16,
            remap: 16,
            gated: 8,
            dilations: vec![2, 4, 1, 2],
            noise_dim: 8,
            critic_maps: 16,
        }
    }

    /// The same layer graph on a 16-bin input, for gradient checks.
    pub fn tiny() -> Self {
        Self {
            freq_bins: 16,
            front_maps: [4, 4],
            front_dilations: [1, 2, 1],
            agg_filters: 16,
            bands: 4,
            remap: 6,
            gated: 4,
            dilations: vec![1, 2],
            noise_dim: 2,
            critic_maps: 4,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "small" => Ok(Self::small()),
            "tiny" => Ok(Self::tiny()),
            _ => Err(Error::Config(format!(
                "unknown architecture preset {name:?} (full, small, tiny)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = CRITIC_GROUPS;
        let mut problems = Vec::new();
        if self.freq_bins == 0 || self.bands == 0 || self.dilations.is_empty() {
            problems.push("sizes must be positive and at least one gated layer is required".to_string());
        }
        if self.agg_filters % (self.bands * g) != 0 {
            problems.push(format!(
                "agg_filters {} must be divisible by {g} x bands {}",
                self.agg_filters, self.bands
            ));
        }
        for (what, v) in [
            ("front_maps[0]", self.front_maps[0]),
            ("front_maps[1]", self.front_maps[1]),
            ("remap", self.remap),
            ("gated", self.gated),
            ("critic_maps", self.critic_maps),
        ] {
            if v == 0 || v % g != 0 {
                problems.push(format!("{what} = {v} must be a positive multiple of {g}"));
            }
        }
        if self.agg_filters != self.bands * self.gated {
            problems.push(format!(
                "agg_filters {} must equal bands {} x gated {} so that Reshape2 inverts Reshape1",
                self.agg_filters, self.bands, self.gated
            ));
        }
        if self.front_dilations.contains(&0) || self.dilations.contains(&0) {
            problems.push("dilations must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Maps per band after regrouping.
    pub fn band_maps(&self) -> usize {
        self.agg_filters / self.bands
    }

    /// Frames lost by the generator in training mode.
    pub fn train_shrink(&self) -> usize {
        2 + 2 * self.dilations.iter().sum::<usize>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Input,
    /// The critic's stacked candidate / conditioning views.
    Views,
    Conv,
    /// Convolution whose raw maps feed the following `SelfGating` row.
    GatedConv,
    SelfGating,
    /// Regroup full-height filter responses into maps x bands.
    Reshape1,
    /// Inverse of `Reshape1`.
    Reshape2,
    NoiseConcat,
    DeConv,
    Output,
}

impl LayerKind {
    fn tag(self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Views => "views",
            LayerKind::Conv => "conv",
            LayerKind::GatedConv => "gated-conv",
            LayerKind::SelfGating => "self-gating",
            LayerKind::Reshape1 => "reshape",
            LayerKind::Reshape2 => "reshape-inverse",
            LayerKind::NoiseConcat => "noise-concat",
            LayerKind::DeConv => "deconv",
            LayerKind::Output => "output",
        }
    }

    pub fn has_params(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::GatedConv | LayerKind::DeConv)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Nonlinearity {
    PRelu,
    Sigmoid,
    None,
}

impl Nonlinearity {
    fn tag(self) -> &'static str {
        match self {
            Nonlinearity::PRelu => "PReLU",
            Nonlinearity::Sigmoid => "sigmoid",
            Nonlinearity::None => "-",
        }
    }
}

/// One row of a layer table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub in_maps: usize,
    pub out_maps: usize,
    /// `(freq, time)` extent.
    pub kernel: (usize, usize),
    pub dilation: usize,
    pub freq_pad: usize,
    /// Time padding when the time axis is preserved.
    pub time_pad: usize,
    /// Time padding of the generator in training mode.
    pub train_time_pad: usize,
    pub nonlinearity: Nonlinearity,
    pub groups: usize,
    /// Identity skip connection around the gated layer.
    pub residual: bool,
}

impl LayerSpec {
    fn plain(name: &str, kind: LayerKind, in_maps: usize, out_maps: usize) -> Self {
        Self {
            name: name.into(),
            kind,
            in_maps,
            out_maps,
            kernel: (0, 0),
            dilation: 0,
            freq_pad: 0,
            time_pad: 0,
            train_time_pad: 0,
            nonlinearity: Nonlinearity::None,
            groups: 1,
            residual: false,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(
        name: &str,
        kind: LayerKind,
        in_maps: usize,
        out_maps: usize,
        kernel: (usize, usize),
        dilation: usize,
        pad: (usize, usize),
        groups: usize,
    ) -> Self {
        Self {
            name: name.into(),
            kind,
            in_maps,
            out_maps,
            kernel,
            dilation,
            freq_pad: pad.0,
            time_pad: pad.1,
            train_time_pad: pad.1,
            nonlinearity: Nonlinearity::PRelu,
            groups,
            residual: false,
        }
    }

    /// Parameter name prefix, e.g. `conv6`.
    pub fn param_prefix(&self) -> String {
        self.name.to_lowercase()
    }

    fn padding_cell(&self) -> String {
        if !self.kind.has_params() {
            "-".into()
        } else if self.train_time_pad == self.time_pad {
            format!("{},{}", self.freq_pad, self.time_pad)
        } else {
            format!("{},({})[{}]", self.freq_pad, self.train_time_pad, self.time_pad)
        }
    }

    fn table_row(&self) -> String {
        let conv = self.kind.has_params();
        let dash = |b: bool, s: String| if b { s } else { "-".to_string() };
        [
            self.name.clone(),
            self.kind.tag().into(),
            self.in_maps.to_string(),
            self.out_maps.to_string(),
            dash(conv, format!("{}x{}", self.kernel.0, self.kernel.1)),
            dash(conv, self.dilation.to_string()),
            self.padding_cell(),
            if self.kind == LayerKind::SelfGating {
                "PReLU*sigmoid".into()
            } else {
                self.nonlinearity.tag().into()
            },
            self.groups.to_string(),
            if self.residual { "add" } else { "-" }.into(),
        ]
        .join("\t")
    }
}

pub const TABLE_HEADER: &str =
    "layer\tkind\tin_maps\tout_maps\tkernel\tdilation\tpadding\tnonlinearity\tgroups\tskip";

/// Tab-separated rendering of a layer table; the padding column reads
/// `freq,time`, or `freq,(train)[padded]` where the generator's training
/// mode drops time padding.
pub fn layer_table(specs: &[LayerSpec]) -> String {
    let mut s = String::new();
    writeln!(s, "{TABLE_HEADER}").unwrap();
    for spec in specs {
        writeln!(s, "{}", spec.table_row()).unwrap();
    }
    s
}

/// Shared front part: Conv1-Conv5 including frequency aggregation.
fn trunk(arch: &ArchConfig, in_maps: usize, groups: usize, shrink: bool) -> Vec<LayerSpec> {
    use LayerKind::*;
    let [m1, m2] = arch.front_maps;
    let [d1, d2, d3] = arch.front_dilations;
    let band_maps = arch.band_maps();
    let mut v = vec![
        LayerSpec::conv("Conv1", Conv, in_maps, m1, (3, 3), d1, (d1, d1), groups),
        LayerSpec::conv("Conv2", Conv, m1, m2, (3, 3), d2, (d2, d2), groups),
        LayerSpec::conv("Conv3", Conv, m2, m2, (3, 3), d3, (d3, d3), groups),
        LayerSpec::conv("Conv4", Conv, m2, arch.agg_filters, (arch.freq_bins, 1), 1, (0, 0), groups),
        LayerSpec {
            groups,
            ..LayerSpec::plain("Reshape1", Reshape1, arch.agg_filters, band_maps)
        },
        LayerSpec::conv("ReMap", Conv, band_maps, arch.remap, (1, 1), 1, (0, 0), groups),
        LayerSpec::conv("Conv5", Conv, arch.remap, arch.remap, (3, 3), 1, (1, 1), groups),
    ];
    if shrink {
        v.last_mut().unwrap().train_time_pad = 0;
    }
    v
}

/// Gated dilated stack Conv6 onwards.
fn gated_stack(arch: &ArchConfig, first_in: usize, groups: usize, shrink: bool, residual: bool) -> Vec<LayerSpec> {
    let mut v = Vec::new();
    for (i, &d) in arch.dilations.iter().enumerate() {
        let name = format!("Conv{}", i + 6);
        let in_maps = if i == 0 { first_in } else { arch.gated };
        let mut conv = LayerSpec::conv(&name, LayerKind::GatedConv, in_maps, 2 * arch.gated, (3, 3), d, (d, d), groups);
        if shrink {
            conv.train_time_pad = 0;
        }
        v.push(conv);
        v.push(LayerSpec {
            groups,
            residual: residual && i > 0,
            ..LayerSpec::plain("SelfGating", LayerKind::SelfGating, 2 * arch.gated, arch.gated)
        });
    }
    v
}

/// Generator rows; `stochastic` adds the noise concatenation after Conv5.
pub fn generator_specs(arch: &ArchConfig, stochastic: bool) -> Vec<LayerSpec> {
    use LayerKind::*;
    let [m1, m2] = arch.front_maps;
    let [d1, d2, d3] = arch.front_dilations;
    let mut v = vec![LayerSpec::plain("Input", Input, 2, 2)];
    v.extend(trunk(arch, 2, 1, true));
    let mut first_in = arch.remap;
    if stochastic {
        first_in += arch.noise_dim;
        v.push(LayerSpec::plain("NoiseConcat", NoiseConcat, arch.remap, first_in));
    }
    v.extend(gated_stack(arch, first_in, 1, true, false));
    v.push(LayerSpec::plain("Reshape2", Reshape2, arch.gated, arch.agg_filters));
    v.extend([
        LayerSpec::conv("DeConv4", DeConv, arch.agg_filters, m2, (arch.freq_bins, 1), 1, (0, 0), 1),
        LayerSpec::conv("DeConv3", DeConv, m2, m2, (3, 3), d3, (d3, d3), 1),
        LayerSpec::conv("DeConv2", DeConv, m2, m1, (3, 3), d2, (d2, d2), 1),
        LayerSpec::conv("DeConv1", DeConv, m1, 2, (3, 3), d1, (d1, d1), 1),
        LayerSpec::plain("Output", Output, 2, 2),
    ]);
    v
}

/// Critic rows: two independent groups up to Conv15, joined by Conv16.
pub fn critic_specs(arch: &ArchConfig) -> Vec<LayerSpec> {
    use LayerKind::*;
    let g = CRITIC_GROUPS;
    let mut v = vec![
        LayerSpec::plain("Input", Input, 2, 2),
        LayerSpec::plain("Views", Views, 2, 8),
    ];
    v.extend(trunk(arch, 8, g, false));
    v.extend(gated_stack(arch, arch.remap, g, false, true));
    v.push(LayerSpec::conv("Conv15", Conv, arch.gated, arch.critic_maps, (3, 3), 1, (1, 1), g));
    v.push(LayerSpec {
        nonlinearity: Nonlinearity::None,
        ..LayerSpec::conv("Conv16", Conv, arch.critic_maps, 1, (arch.bands, 1), 1, (0, 0), 1)
    });
    v
}

/// Frames of context on each side that influence one output frame of the
/// generator in padded mode.
pub fn receptive_radius(specs: &[LayerSpec]) -> usize {
    specs
        .iter()
        .filter(|s| s.kind.has_params())
        .map(|s| s.dilation * (s.kernel.1 - 1) / 2)
        .sum()
}
