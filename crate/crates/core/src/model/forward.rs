//! Forward passes of the generator and the critic.
//!
//! Activations are `[N, maps, freq, time]`. Both networks are run by walking
//! their layer tables, so the tables are the single description of the
//! architecture.

use mp3gan_autodiff::{ConvGeom, Tensor, Var};

use crate::error::{Error, Result};
use crate::model::arch::{LayerKind, LayerSpec, Nonlinearity};
use crate::model::params::{Role, Weights};
use crate::spectral::{ComplexSpectrogram, Scaling};

/// Floor inside the root-magnitude view so its derivatives stay finite.
pub const ROOT_MAG_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeMode {
    /// No time padding in the generator's Conv5 onwards; output shrinks.
    Train,
    /// Symmetric time padding everywhere; output length equals input length.
    Padded,
}

/// Per-row output sizes (without the batch axis).
pub type ShapeTrace = Vec<(String, Vec<usize>)>;

pub fn prelu(x: &Var, slopes: &Var) -> Var {
    x.prelu(slopes)
}

/// Split raw conv maps into a PReLU path and a sigmoid gate and multiply.
/// Within each group the first half of the maps is the path, the second half
/// the gate.
pub fn self_gate(raw: &Var, slopes: &Var, groups: usize) -> Result<Var> {
    let &[n, c, h, t] = raw.shape() else {
        return Err(Error::Shape(format!("self-gating needs rank 4, got {:?}", raw.shape())));
    };
    if c % (2 * groups) != 0 {
        return Err(Error::Shape(format!(
            "self-gating needs an even number of raw maps per group, got {c} in {groups} groups"
        )));
    }
    let s = c / 2;
    let r = raw.reshape(&[n, groups, 2, s / groups, h, t]);
    let path = r.narrow(2, 0, 1).reshape(&[n, s, h, t]).prelu(slopes);
    let gate = r.narrow(2, 1, 1).reshape(&[n, s, h, t]).sigmoid();
    Ok(path * gate)
}

/// `PReLU(x * W + a) . sigmoid(x * V + b)` with `W`/`V` and `a`/`b` stacked
/// per group in `weight` and `bias`.
pub fn gated_conv(x: &Var, weight: &Var, bias: &Var, slopes: &Var, geom: ConvGeom) -> Result<Var> {
    if weight.shape()[0] % (2 * geom.groups) != 0 {
        return Err(Error::Shape(format!(
            "gated convolution needs an even number of raw maps per group, got {}",
            weight.shape()[0]
        )));
    }
    self_gate(&x.conv2d(weight, geom).add_channel(bias), slopes, geom.groups)
}

/// `[N, G*B*M, 1, T]` filter responses to `[N, G*M, B, T]`: within group
/// `g`, response `c` becomes map `g*M + c mod M` of band `c / M`.
pub fn bands_from_filters(x: &Var, bands: usize, groups: usize) -> Result<Var> {
    let &[n, c, h, t] = x.shape() else {
        return Err(Error::Shape(format!("expected rank 4, got {:?}", x.shape())));
    };
    if h != 1 || c % (bands * groups) != 0 {
        return Err(Error::Shape(format!(
            "cannot regroup {c} x {h} responses into {bands} bands and {groups} groups"
        )));
    }
    let m = c / (bands * groups);
    Ok(x.reshape(&[n, groups, bands, m, t])
        .permute(&[0, 1, 3, 2, 4])
        .reshape(&[n, groups * m, bands, t]))
}

/// Inverse of [`bands_from_filters`].
pub fn filters_from_bands(x: &Var, groups: usize) -> Result<Var> {
    let &[n, c, b, t] = x.shape() else {
        return Err(Error::Shape(format!("expected rank 4, got {:?}", x.shape())));
    };
    if c % groups != 0 {
        return Err(Error::Shape(format!("{c} maps do not split into {groups} groups")));
    }
    let m = c / groups;
    Ok(x.reshape(&[n, groups, m, b, t])
        .permute(&[0, 1, 3, 2, 4])
        .reshape(&[n, groups * b * m, 1, t]))
}

fn geom(spec: &LayerSpec, mode: TimeMode) -> ConvGeom {
    let time_pad = match mode {
        TimeMode::Train => spec.train_time_pad,
        TimeMode::Padded => spec.time_pad,
    };
    ConvGeom::new((spec.dilation, spec.dilation), (spec.freq_pad, time_pad), spec.groups)
}

fn check_maps(spec: &LayerSpec, x: &Var) -> Result<()> {
    if x.shape()[1] != spec.in_maps {
        return Err(Error::Shape(format!(
            "{} expects {} input maps, got {}",
            spec.name,
            spec.in_maps,
            x.shape()[1]
        )));
    }
    Ok(())
}

/// Conv4, Reshape1 and ReMap: full-height filters, regrouping into bands,
/// and the 1x1 remapping.
pub fn frequency_aggregate(w: &Weights, x: &Var) -> Result<Var> {
    let freq = w.desc.arch.freq_bins;
    if x.shape().len() != 4 || x.shape()[2] != freq {
        return Err(Error::Shape(format!(
            "frequency aggregation needs {freq} bins, got shape {:?}",
            x.shape()
        )));
    }
    let start = w
        .specs
        .iter()
        .position(|s| s.name == "Conv4")
        .expect("every table has Conv4");
    run_rows(w, &w.specs[start..start + 3], x.clone(), None, TimeMode::Padded, &mut None)
}

fn run_rows(
    w: &Weights,
    rows: &[LayerSpec],
    mut h: Var,
    z: Option<&Var>,
    mode: TimeMode,
    trace: &mut Option<&mut ShapeTrace>,
) -> Result<Var> {
    let mut gated_input: Option<Var> = None;
    let mut pending_slopes: Option<String> = None;
    for spec in rows {
        let p = spec.param_prefix();
        h = match spec.kind {
            LayerKind::Input | LayerKind::Output | LayerKind::Views => {
                check_maps(spec, &h)?;
                h
            }
            LayerKind::Conv => {
                check_maps(spec, &h)?;
                let y = h
                    .conv2d(w.get(&format!("{p}.weight"))?, geom(spec, mode))
                    .add_channel(w.get(&format!("{p}.bias"))?);
                match spec.nonlinearity {
                    Nonlinearity::PRelu => y.prelu(w.get(&format!("{p}.prelu"))?),
                    Nonlinearity::Sigmoid => y.sigmoid(),
                    Nonlinearity::None => y,
                }
            }
            LayerKind::GatedConv => {
                check_maps(spec, &h)?;
                gated_input = Some(h.clone());
                pending_slopes = Some(format!("{p}.prelu"));
                h.conv2d(w.get(&format!("{p}.weight"))?, geom(spec, mode))
                    .add_channel(w.get(&format!("{p}.bias"))?)
            }
            LayerKind::SelfGating => {
                let slopes = pending_slopes
                    .take()
                    .ok_or_else(|| Error::Shape("self-gating row without a gated conv".into()))?;
                let y = self_gate(&h, w.get(&slopes)?, spec.groups)?;
                let skip = gated_input.take().expect("set with the slopes");
                if spec.residual {
                    if skip.shape() != y.shape() {
                        return Err(Error::Shape(format!(
                            "skip connection shape {:?} does not match {:?}",
                            skip.shape(),
                            y.shape()
                        )));
                    }
                    y + skip
                } else {
                    y
                }
            }
            LayerKind::Reshape1 => {
                bands_from_filters(&h, spec.in_maps / spec.out_maps, spec.groups)?
            }
            LayerKind::Reshape2 => filters_from_bands(&h, spec.groups)?,
            LayerKind::NoiseConcat => {
                let z = z.ok_or_else(|| Error::Config("stochastic generator needs a noise input".into()))?;
                let &[n, _, fb, t] = h.shape() else { unreachable!("rank checked on input") };
                let nd = spec.out_maps - spec.in_maps;
                let tiled = z.reshape(&[n, nd, 1, 1]).expand_to(&[n, nd, fb, t]);
                Var::concat(&[h, tiled], 1)
            }
            LayerKind::DeConv => {
                check_maps(spec, &h)?;
                h.conv_transpose2d(w.get(&format!("{p}.weight"))?, geom(spec, mode))
                    .add_channel(w.get(&format!("{p}.bias"))?)
                    .prelu(w.get(&format!("{p}.prelu"))?)
            }
        };
        if let Some(t) = trace.as_deref_mut() {
            t.push((spec.name.clone(), h.shape()[1..].to_vec()));
        }
    }
    Ok(h)
}

fn generator_run(
    w: &Weights,
    y: &Var,
    z: Option<&Var>,
    mode: TimeMode,
    trace: &mut Option<&mut ShapeTrace>,
) -> Result<Var> {
    if w.desc.role != Role::Generator {
        return Err(Error::Config("generator forward needs generator weights".into()));
    }
    let arch = &w.desc.arch;
    let &[n, c, f, t] = y.shape() else {
        return Err(Error::Shape(format!("generator input must be N x 2 x F x T, got {:?}", y.shape())));
    };
    if c != 2 || f != arch.freq_bins {
        return Err(Error::Shape(format!(
            "generator input must be N x 2 x {} x T, got {:?}",
            arch.freq_bins,
            y.shape()
        )));
    }
    if mode == TimeMode::Train && t <= arch.train_shrink() {
        return Err(Error::Shape(format!(
            "training mode needs more than {} frames, got {t}",
            arch.train_shrink()
        )));
    }
    match (w.desc.stochastic, z) {
        (false, Some(_)) => {
            return Err(Error::Config("deterministic generator takes no noise input".into()))
        }
        (true, None) => return Err(Error::Config("stochastic generator needs a noise input".into())),
        (true, Some(z)) if z.shape() != [n, arch.noise_dim] => {
            return Err(Error::Shape(format!(
                "noise must be {n} x {}, got {:?}",
                arch.noise_dim,
                z.shape()
            )))
        }
        _ => {}
    }
    run_rows(w, &w.specs, y.clone(), z, mode, trace)
}

/// `y`: `[N, 2, F, T]` MP3 excerpt in signed-sqrt scaling; `z`: `[N, noise]`
/// for a stochastic generator. Returns `[N, 2, F, T']` with
/// `T' = T - train_shrink` in training mode and `T' = T` when padded.
pub fn generator_forward(w: &Weights, y: &Var, z: Option<&Var>, mode: TimeMode) -> Result<Var> {
    generator_run(w, y, z, mode, &mut None)
}

/// Like [`generator_forward`], also recording every row's output size.
pub fn generator_forward_traced(
    w: &Weights,
    y: &Var,
    z: Option<&Var>,
    mode: TimeMode,
) -> Result<(Var, ShapeTrace)> {
    let mut trace = ShapeTrace::new();
    let out = generator_run(w, y, z, mode, &mut Some(&mut trace))?;
    Ok((out, trace))
}

/// `(p^4 + q^4 + eps)^(1/4)` for signed-sqrt components `p`, `q`: the square
/// root of the linear magnitude. `[N, 2, F, T]` to `[N, 1, F, T]`.
pub fn root_magnitude(h: &Var) -> Var {
    let p = h.narrow(1, 0, 1);
    let q = h.narrow(1, 1, 1);
    (p.square().square() + q.square().square())
        .add_scalar(ROOT_MAG_EPS)
        .powf(0.25)
}

/// Critic input: group A sees the signed-sqrt candidate and MP3 excerpt,
/// group B their root magnitudes plus two zero maps.
pub fn critic_views(candidate: &Var, mp3: &Var) -> Var {
    let &[n, _, f, t] = candidate.shape() else { panic!("rank 4 expected") };
    let zeros = Var::constant(Tensor::zeros(&[n, 2, f, t]));
    Var::concat(
        &[
            candidate.clone(),
            mp3.clone(),
            root_magnitude(candidate),
            root_magnitude(mp3),
            zeros,
        ],
        1,
    )
}

fn critic_run(w: &Weights, candidate: &Var, mp3: &Var, trace: &mut Option<&mut ShapeTrace>) -> Result<Var> {
    if w.desc.role != Role::Critic {
        return Err(Error::Config("critic forward needs critic weights".into()));
    }
    let f = w.desc.arch.freq_bins;
    if candidate.shape() != mp3.shape() {
        return Err(Error::Shape(format!(
            "candidate {:?} and MP3 {:?} differ in shape",
            candidate.shape(),
            mp3.shape()
        )));
    }
    if candidate.shape().len() != 4 || candidate.shape()[1] != 2 || candidate.shape()[2] != f {
        return Err(Error::Shape(format!(
            "critic input must be N x 2 x {f} x T, got {:?}",
            candidate.shape()
        )));
    }
    if let Some(t) = trace.as_deref_mut() {
        t.push(("Input".into(), candidate.shape()[1..].to_vec()));
    }
    let views = critic_views(candidate, mp3);
    if let Some(t) = trace.as_deref_mut() {
        t.push(("Views".into(), views.shape()[1..].to_vec()));
    }
    run_rows(w, &w.specs[2..], views, None, TimeMode::Padded, trace)
}

/// Per-frame scores `[N, 1, 1, T]` for signed-sqrt inputs `[N, 2, F, T]`.
pub fn critic_forward(w: &Weights, candidate: &Var, mp3: &Var) -> Result<Var> {
    critic_run(w, candidate, mp3, &mut None)
}

pub fn critic_forward_traced(w: &Weights, candidate: &Var, mp3: &Var) -> Result<(Var, ShapeTrace)> {
    let mut trace = ShapeTrace::new();
    let out = critic_run(w, candidate, mp3, &mut Some(&mut trace))?;
    Ok((out, trace))
}

/// Critic value per excerpt: the mean of its per-frame scores, `[N]`.
pub fn critic_value(scores: &Var) -> Var {
    let t = scores.shape()[3] as f64;
    scores.sum_per_item().scale(1.0 / t)
}

/// Critic scores for single spectrograms, checking their scaling.
pub fn critic_scores(w: &Weights, candidate: &ComplexSpectrogram, mp3: &ComplexSpectrogram) -> Result<Tensor> {
    for (what, s) in [("candidate", candidate), ("MP3", mp3)] {
        if s.scaling() != Scaling::SignedSqrt {
            return Err(Error::ScalingMismatch(format!("{what} spectrogram is not in signed-sqrt scaling")));
        }
    }
    let batch = |s: &ComplexSpectrogram| {
        let d = s.data();
        Var::constant(d.reshape(&[1, d.shape()[0], d.shape()[1], d.shape()[2]]))
    };
    let scores = mp3gan_autodiff::no_grad(|| critic_forward(w, &batch(candidate), &batch(mp3)))?;
    let t = scores.shape()[3];
    Ok(scores.value().reshape(&[t]))
}
