//! Spectral distances and the time-domain signal-to-noise ratio.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::spectral::{power_spectrogram, stft, PowerSpectrogram};

/// Powers are floored here before taking logarithms.
pub const LSD_FLOOR: f64 = 1e-10;

fn check_shapes(p: &PowerSpectrogram, p_hat: &PowerSpectrogram) -> Result<()> {
    if p.data().shape() != p_hat.data().shape() {
        return Err(Error::Shape(format!(
            "power spectrograms differ in shape: {:?} vs {:?}",
            p.data().shape(),
            p_hat.data().shape()
        )));
    }
    if p.frames() == 0 || p.bins() == 0 {
        return Err(Error::Shape("empty power spectrogram".into()));
    }
    Ok(())
}

/// Log-spectral distance: the mean over frames of the RMS over bins of
/// `10 log10(P / P_hat)`.
pub fn lsd(p: &PowerSpectrogram, p_hat: &PowerSpectrogram) -> Result<f64> {
    check_shapes(p, p_hat)?;
    let (w, l) = (p.bins(), p.frames());
    let mut total = 0.0;
    for frame in 0..l {
        let mut acc = 0.0;
        for bin in 0..w {
            let a = p.at(bin, frame).max(LSD_FLOOR);
            let b = p_hat.at(bin, frame).max(LSD_FLOOR);
            let d = 10.0 * (a / b).log10();
            acc += d * d;
        }
        total += (acc / w as f64).sqrt();
    }
    Ok(total / l as f64)
}

/// Mean squared difference of the square roots of the powers.
pub fn mse_root_power(p: &PowerSpectrogram, p_hat: &PowerSpectrogram) -> Result<f64> {
    check_shapes(p, p_hat)?;
    let n = p.data().numel() as f64;
    Ok(p.data()
        .data()
        .iter()
        .zip(p_hat.data().data())
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum::<f64>()
        / n)
}

/// `10 log10(|s|^2 / |s - s_hat|^2)` in dB; `+inf` when the signals are
/// identical.
pub fn snr(s: &AudioSignal, s_hat: &AudioSignal) -> Result<f64> {
    if s.len() != s_hat.len() {
        return Err(Error::Shape(format!(
            "signals differ in length: {} vs {}",
            s.len(),
            s_hat.len()
        )));
    }
    let energy: f64 = s.samples().iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::Data("SNR is undefined for an all-zero reference".into()));
    }
    let residual: f64 = s
        .samples()
        .iter()
        .zip(s_hat.samples())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if residual == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (energy / residual).log10())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Lsd,
    Mse,
    Snr,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Lsd, Metric::Mse, Metric::Snr];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Lsd => "lsd",
            Metric::Mse => "mse",
            Metric::Snr => "snr",
        }
    }

    /// Lower is better for LSD and MSE, higher for SNR.
    pub fn lower_is_better(self) -> bool {
        !matches!(self, Metric::Snr)
    }

    /// Whether `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.lower_is_better() {
            a < b
        } else {
            a > b
        }
    }

    pub fn of(self, m: &Metrics) -> f64 {
        match self {
            Metric::Lsd => m.lsd,
            Metric::Mse => m.mse,
            Metric::Snr => m.snr,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lsd" => Ok(Metric::Lsd),
            "mse" => Ok(Metric::Mse),
            "snr" => Ok(Metric::Snr),
            _ => Err(Error::Config(format!("unknown metric {s:?} (lsd, mse, snr)"))),
        }
    }
}

/// The three cheap metrics of one approximation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub lsd: f64,
    pub mse: f64,
    pub snr: f64,
}

/// All cheap metrics of `approx` against `reference`, with power spectra
/// taken from the STFT of both signals.
pub fn excerpt_metrics(reference: &AudioSignal, approx: &AudioSignal) -> Result<Metrics> {
    let p = power_spectrogram(&stft(reference)?)?;
    let p_hat = power_spectrogram(&stft(approx)?)?;
    Ok(Metrics {
        lsd: lsd(&p, &p_hat)?,
        mse: mse_root_power(&p, &p_hat)?,
        snr: snr(reference, approx)?,
    })
}
