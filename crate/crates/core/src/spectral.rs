//! Short-time Fourier analysis/synthesis and the signed square-root scaling.
//!
//! Frames are not centre-padded: frame `t` covers samples
//! `[t * hop, t * hop + win)` and a signal of `len` samples yields
//! `(len - win) / hop + 1` frames.
//!
//! A `win`-point real FFT has `win / 2 + 1` bins, but the model works with
//! exactly `win / 2`. Both the DC and the Nyquist coefficient of a real
//! frame are purely real, so the Nyquist value is carried in the otherwise
//! always-zero imaginary part of bin 0. Analysis and synthesis are therefore
//! exact inverses on the frame-covered interior.

use std::f64::consts::PI;
use std::sync::Arc;

use mp3gan_autodiff::Tensor;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::audio::AudioSignal;
use crate::error::{Error, Result};

pub const WIN: usize = 2048;
pub const HOP: usize = 512;
pub const BINS: usize = WIN / 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scaling {
    Linear,
    SignedSqrt,
}

/// Complex STFT coefficients as a `2 x F x T` tensor (real, imaginary).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    data: Tensor,
    scaling: Scaling,
    win: usize,
    hop: usize,
}

impl ComplexSpectrogram {
    pub fn new(data: Tensor, scaling: Scaling) -> Result<Self> {
        if data.rank() != 3 || data.shape()[0] != 2 {
            return Err(Error::Shape(format!(
                "complex spectrogram must be 2 x F x T, got {:?}",
                data.shape()
            )));
        }
        if !data.is_finite() {
            return Err(Error::NonFinite("complex spectrogram".into()));
        }
        Ok(Self {
            win: 2 * data.shape()[1],
            hop: HOP,
            data,
            scaling,
        })
    }

    pub fn zeros(bins: usize, frames: usize, scaling: Scaling) -> Self {
        Self {
            data: Tensor::zeros(&[2, bins, frames]),
            scaling,
            win: 2 * bins,
            hop: HOP,
        }
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn into_data(self) -> Tensor {
        self.data
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    pub fn bins(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn win(&self) -> usize {
        self.win
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    /// Real and imaginary parts at (bin, frame).
    pub fn get(&self, bin: usize, frame: usize) -> (f64, f64) {
        (self.data.at(&[0, bin, frame]), self.data.at(&[1, bin, frame]))
    }

    pub fn frame_range(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames() || len == 0 {
            return Err(Error::Shape(format!(
                "frames {start}..{} outside 0..{}",
                start + len,
                self.frames()
            )));
        }
        Ok(Self {
            data: self.data.narrow(2, start, len),
            ..self.clone()
        })
    }

    /// Apply the signed square root to every real and imaginary component.
    pub fn to_signed_sqrt(&self) -> Result<Self> {
        if self.scaling == Scaling::SignedSqrt {
            return Err(Error::AlreadySignedSqrt);
        }
        Ok(Self {
            data: self.data.map(signed_sqrt),
            scaling: Scaling::SignedSqrt,
            ..self.clone()
        })
    }

    /// Undo the signed square root. A no-op on linear spectrograms.
    pub fn to_linear(&self) -> Self {
        match self.scaling {
            Scaling::Linear => self.clone(),
            Scaling::SignedSqrt => Self {
                data: self.data.map(signed_square),
                scaling: Scaling::Linear,
                ..self.clone()
            },
        }
    }
}

/// Non-negative `F x T` power values.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSpectrogram {
    data: Tensor,
}

impl PowerSpectrogram {
    pub fn new(data: Tensor) -> Result<Self> {
        if data.rank() != 2 {
            return Err(Error::Shape(format!(
                "power spectrogram must be F x T, got {:?}",
                data.shape()
            )));
        }
        if data.data().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Data("power spectrogram entries must be finite and >= 0".into()));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn bins(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn at(&self, bin: usize, frame: usize) -> f64 {
        self.data.at(&[bin, frame])
    }
}

pub fn signed_sqrt(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().sqrt()
    }
}

pub fn signed_square(y: f64) -> f64 {
    y * y.abs()
}

/// Periodic Hann window; at 75 % overlap its square sums to a constant.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

pub fn frame_count(len: usize, win: usize, hop: usize) -> usize {
    if len < win {
        0
    } else {
        (len - win) / hop + 1
    }
}

/// Number of samples covered by `frames` frames.
pub fn covered_len(frames: usize, win: usize, hop: usize) -> usize {
    if frames == 0 {
        0
    } else {
        (frames - 1) * hop + win
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl Plans {
    fn new(win: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(win),
            inverse: planner.plan_fft_inverse(win),
            window: hann(win),
        }
    }
}

pub fn stft(signal: &AudioSignal) -> Result<ComplexSpectrogram> {
    stft_with(signal.samples(), WIN, HOP)
}

/// STFT with explicit window and hop; `win` must be even.
pub fn stft_with(samples: &[f64], win: usize, hop: usize) -> Result<ComplexSpectrogram> {
    assert!(win % 2 == 0 && hop > 0 && hop <= win);
    if samples.len() < win {
        return Err(Error::InsufficientSamples {
            needed: win,
            got: samples.len(),
        });
    }
    let frames = frame_count(samples.len(), win, hop);
    let bins = win / 2;
    let plans = Plans::new(win);
    let mut data = vec![0.0; 2 * bins * frames];
    let mut buf = vec![Complex::new(0.0, 0.0); win];
    for t in 0..frames {
        let frame = &samples[t * hop..t * hop + win];
        for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&plans.window) {
            *b = Complex::new(x * w, 0.0);
        }
        plans.forward.process(&mut buf);
        data[t] = buf[0].re;
        data[bins * frames + t] = buf[bins].re;
        for f in 1..bins {
            data[f * frames + t] = buf[f].re;
            data[(bins + f) * frames + t] = buf[f].im;
        }
    }
    Ok(ComplexSpectrogram {
        data: Tensor::new(&[2, bins, frames], data),
        scaling: Scaling::Linear,
        win,
        hop,
    })
}

/// Weighted overlap-add synthesis. The output covers
/// `(T - 1) * hop + win` samples.
pub fn istft(spec: &ComplexSpectrogram) -> Result<AudioSignal> {
    if spec.scaling == Scaling::SignedSqrt {
        return Err(Error::SignedSqrtScaling);
    }
    let (bins, frames, win, hop) = (spec.bins(), spec.frames(), spec.win, spec.hop);
    let plans = Plans::new(win);
    let len = covered_len(frames, win, hop);
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let d = spec.data.data();
    let mut buf = vec![Complex::new(0.0, 0.0); win];
    for t in 0..frames {
        buf[0] = Complex::new(d[t], 0.0);
        buf[bins] = Complex::new(d[bins * frames + t], 0.0);
        for f in 1..bins {
            let c = Complex::new(d[f * frames + t], d[(bins + f) * frames + t]);
            buf[f] = c;
            buf[win - f] = c.conj();
        }
        plans.inverse.process(&mut buf);
        let base = t * hop;
        for n in 0..win {
            let w = plans.window[n];
            out[base + n] += buf[n].re / win as f64 * w;
            norm[base + n] += w * w;
        }
    }
    for (o, &z) in out.iter_mut().zip(&norm) {
        *o = if z > 1e-10 { *o / z } else { 0.0 };
    }
    AudioSignal::new(out)
}

/// `|h|^2` per bin and frame.
pub fn power_spectrogram(spec: &ComplexSpectrogram) -> Result<PowerSpectrogram> {
    if spec.scaling == Scaling::SignedSqrt {
        return Err(Error::SignedSqrtScaling);
    }
    let (bins, frames) = (spec.bins(), spec.frames());
    let d = spec.data.data();
    let (re, im) = d.split_at(bins * frames);
    let power = re.iter().zip(im).map(|(a, b)| a * a + b * b).collect();
    PowerSpectrogram::new(Tensor::new(&[bins, frames], power))
}
