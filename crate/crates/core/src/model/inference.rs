//! Restoration of whole songs with the generator in padded mode.

use mp3gan_autodiff::{no_grad, Tensor, Var};
use rand_distr::{Distribution, StandardNormal};

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::model::arch::receptive_radius;
use crate::model::forward::{generator_forward, TimeMode};
use crate::model::params::{ModelParams, Role};
use crate::rng::{stream, Purpose};
use crate::spectral::{istft, stft, ComplexSpectrogram, Scaling, HOP, WIN};

/// Frames restored per forward pass, excluding context.
pub const DEFAULT_CHUNK: usize = 64;

/// Standard normal noise vector number `index` for `seed`.
pub fn sample_noise(dim: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Sampling, index);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn check_generator(g: &ModelParams, z: Option<&[f64]>) -> Result<()> {
    if g.role() != Role::Generator {
        return Err(Error::Config("restoration needs a generator checkpoint".into()));
    }
    match (g.stochastic(), z) {
        (true, None) => Err(Error::Config("stochastic generator needs a noise vector".into())),
        (false, Some(_)) => Err(Error::Config("deterministic generator takes no noise vector".into())),
        (true, Some(z)) if z.len() != g.arch().noise_dim => Err(Error::Shape(format!(
            "noise vector has {} entries, expected {}",
            z.len(),
            g.arch().noise_dim
        ))),
        _ => Ok(()),
    }
}

/// Run the generator over a signed-sqrt spectrogram of any length in chunks
/// of `chunk` frames. Each chunk carries the generator's receptive radius of
/// context on both sides, so the result equals a single pass over the whole
/// spectrogram.
pub fn restore_spectrogram(
    g: &ModelParams,
    mp3: &ComplexSpectrogram,
    z: Option<&[f64]>,
    chunk: usize,
) -> Result<ComplexSpectrogram> {
    check_generator(g, z)?;
    if mp3.scaling() != Scaling::SignedSqrt {
        return Err(Error::ScalingMismatch("generator input must be in signed-sqrt scaling".into()));
    }
    if chunk == 0 {
        return Err(Error::Config("chunk length must be positive".into()));
    }
    let (f, t) = (mp3.bins(), mp3.frames());
    let w = g.weights(false);
    let radius = receptive_radius(&w.specs);
    let zv = z.map(|z| Var::constant(Tensor::new(&[1, z.len()], z.to_vec())));
    let mut out = vec![0.0; 2 * f * t];
    let mut start = 0;
    while start < t {
        let len = chunk.min(t - start);
        let lo = start.saturating_sub(radius);
        let hi = (start + len + radius).min(t);
        let input = mp3.data().narrow(2, lo, hi - lo);
        let y = Var::constant(input.reshape(&[1, 2, f, hi - lo]));
        let restored = no_grad(|| generator_forward(&w, &y, zv.as_ref(), TimeMode::Padded))?;
        let r = restored.value();
        let rd = r.data();
        let span = hi - lo;
        for row in 0..2 * f {
            let src = &rd[row * span + (start - lo)..row * span + (start - lo) + len];
            out[row * t + start..row * t + start + len].copy_from_slice(src);
        }
        start += len;
    }
    let data = Tensor::new(&[2, f, t], out);
    if !data.is_finite() {
        return Err(Error::NonFinite("generator output".into()));
    }
    ComplexSpectrogram::new(data, Scaling::SignedSqrt)
}

/// Restore a decoded MP3 signal. The signal is zero-padded so that every
/// sample is covered by the full window overlap, then trimmed back to its
/// original length.
pub fn restore_audio(
    g: &ModelParams,
    mp3: &AudioSignal,
    z: Option<&[f64]>,
    chunk: usize,
) -> Result<AudioSignal> {
    check_generator(g, z)?;
    let lead = WIN - HOP;
    let tail = lead + (HOP - mp3.len() % HOP) % HOP;
    let mut padded = vec![0.0; lead];
    padded.extend_from_slice(mp3.samples());
    padded.resize(lead + mp3.len() + tail, 0.0);
    let spec = stft(&AudioSignal::new(padded)?)?.to_signed_sqrt()?;
    let restored = restore_spectrogram(g, &spec, z, chunk)?.to_linear();
    let audio = istft(&restored)?;
    AudioSignal::new(audio.samples()[lead..lead + mp3.len()].to_vec())
}
