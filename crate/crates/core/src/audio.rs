//! Mono PCM signals and WAV file I/O.

use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 44_100;

/// Mono signal at 44.1 kHz with finite samples.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("audio sample {i} is {}", samples[i])));
        }
        Ok(Self { samples })
    }

    pub fn silence(len: usize) -> Self {
        Self {
            samples: vec![0.0; len],
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Samples `[start, start + len)`, zero-filled past the end.
    pub fn excerpt(&self, start: usize, len: usize) -> AudioSignal {
        let mut out = vec![0.0; len];
        if start < self.samples.len() {
            let n = len.min(self.samples.len() - start);
            out[..n].copy_from_slice(&self.samples[start..start + n]);
        }
        AudioSignal { samples: out }
    }

    /// Truncate or zero-pad to exactly `len` samples.
    pub fn fit_to(mut self, len: usize) -> AudioSignal {
        self.samples.resize(len, 0.0);
        self
    }
}

/// Sample encoding used when writing WAV files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WavFormat {
    Int16,
    Float32,
}

/// Samples of a mono WAV file at whatever rate it was stored.
#[derive(Clone, Debug)]
pub struct RawWav {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Read a mono 16-bit integer or 32-bit float WAV file at any rate.
pub fn read_wav_raw(path: &Path) -> Result<RawWav> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Data(format!(
            "{}: expected mono audio, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (format, bits) => {
            return Err(Error::Data(format!(
                "{}: unsupported sample format {format:?} with {bits} bits",
                path.display()
            )))
        }
    };
    Ok(RawWav {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Load a mono WAV file as a 44.1 kHz signal. Files at other rates are
/// rejected unless `resample` is set.
pub fn load_wav(path: &Path, resample: bool) -> Result<AudioSignal> {
    let raw = read_wav_raw(path)?;
    if raw.sample_rate == SAMPLE_RATE {
        return AudioSignal::new(raw.samples);
    }
    if !resample {
        return Err(Error::Data(format!(
            "{}: sample rate {} Hz, expected {SAMPLE_RATE} Hz (pass --resample to convert)",
            path.display(),
            raw.sample_rate
        )));
    }
    AudioSignal::new(resample_fft(&raw.samples, raw.sample_rate, SAMPLE_RATE))
}

pub fn save_wav(path: &Path, signal: &AudioSignal, format: WavFormat) -> Result<()> {
    write_wav_samples(path, signal.samples(), SAMPLE_RATE, format)
}

pub fn write_wav_samples(
    path: &Path,
    samples: &[f64],
    sample_rate: u32,
    format: WavFormat,
) -> Result<()> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: match format {
            WavFormat::Int16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Int16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in samples {
        match format {
            WavFormat::Int16 => {
                let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(v).map_err(wav_err)?;
            }
            WavFormat::Float32 => writer.write_sample(s as f32).map_err(wav_err)?,
        }
    }
    writer.finalize().map_err(wav_err)
}

/// Band-limited resampling of a whole signal by zero-padding or truncating
/// its spectrum. Output length is `round(len * to / from)`.
pub fn resample_fft(samples: &[f64], from: u32, to: u32) -> Vec<f64> {
    let n = samples.len();
    if from == to || n == 0 {
        return samples.to_vec();
    }
    let m = ((n as u128 * to as u128 + from as u128 / 2) / from as u128) as usize;
    if m == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut spec: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);

    let mut out = vec![Complex::new(0.0, 0.0); m];
    let shared = n.min(m);
    let half = (shared - 1) / 2;
    out[0] = spec[0];
    for k in 1..=half {
        out[k] = spec[k];
        out[m - k] = spec[n - k];
    }
    if shared % 2 == 0 {
        let k = shared / 2;
        if n < m {
            // split the source Nyquist bin between the two new bins
            out[k] = spec[k] * 0.5;
            out[m - k] += spec[k] * 0.5;
        } else {
            // fold both source bins onto the new Nyquist bin
            out[k] = spec[k] + spec[n - k];
        }
    }
    planner.plan_fft_inverse(m).process(&mut out);
    let scale = 1.0 / n as f64;
    out.iter().map(|c| c.re * scale).collect()
}
