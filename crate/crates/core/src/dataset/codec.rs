//! External MP3 codec adapter.
//!
//! Any program following the `lame` command line works:
//! `<encoder> -b <kbps> -m m <in.wav> <out.mp3>` and
//! `<decoder> --decode <in.mp3> <out.wav>`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::{read_wav_raw, resample_fft, write_wav_samples, AudioSignal, WavFormat, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::spectral::HOP;

pub const ENCODER_ENV: &str = "MP3GAN_ENCODER";
pub const DECODER_ENV: &str = "MP3GAN_DECODER";

/// Length of the reference window used to estimate the codec delay.
pub const ALIGN_WINDOW: usize = 4096;
/// Largest codec delay searched, in samples.
pub const MAX_DELAY: usize = 8192;
/// Largest tolerated length difference after delay compensation.
pub const LENGTH_TOLERANCE: usize = HOP;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Bitrate {
    K16,
    K32,
    K64,
}

impl Bitrate {
    pub const ALL: [Bitrate; 3] = [Bitrate::K16, Bitrate::K32, Bitrate::K64];

    pub fn kbps(self) -> u32 {
        match self {
            Bitrate::K16 => 16,
            Bitrate::K32 => 32,
            Bitrate::K64 => 64,
        }
    }

    pub fn bits_per_second(self) -> u32 {
        self.kbps() * 1000
    }
}

impl fmt::Display for Bitrate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}k", self.kbps())
    }
}

impl FromStr for Bitrate {
    type Err = Error;

    /// Accepts `16k`, `16` or `16000`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_end_matches(['k', 'K']);
        match t.parse::<u32>() {
            Ok(16) | Ok(16000) => Ok(Bitrate::K16),
            Ok(32) | Ok(32000) => Ok(Bitrate::K32),
            Ok(64) | Ok(64000) => Ok(Bitrate::K64),
            _ => Err(Error::Config(format!(
                "unsupported bitrate {s:?} (expected 16k, 32k or 64k)"
            ))),
        }
    }
}

impl TryFrom<String> for Bitrate {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Bitrate> for String {
    fn from(b: Bitrate) -> String {
        b.to_string()
    }
}

/// Paths or names of the encoder and decoder executables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub encoder: PathBuf,
    pub decoder: PathBuf,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            encoder: "lame".into(),
            decoder: "lame".into(),
        }
    }
}

impl CodecConfig {
    pub fn new(encoder: impl Into<PathBuf>, decoder: impl Into<PathBuf>) -> Self {
        Self {
            encoder: encoder.into(),
            decoder: decoder.into(),
        }
    }

    /// `lame` for both, overridden by `MP3GAN_ENCODER` / `MP3GAN_DECODER`.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        if let Some(p) = std::env::var_os(ENCODER_ENV) {
            c.encoder = p.into();
        }
        if let Some(p) = std::env::var_os(DECODER_ENV) {
            c.decoder = p.into();
        }
        c
    }

    /// Fails with a configuration error unless both executables exist.
    pub fn check(&self) -> Result<()> {
        find_executable(&self.encoder)?;
        find_executable(&self.decoder)?;
        Ok(())
    }
}

pub(crate) fn find_executable(program: &Path) -> Result<PathBuf> {
    let missing = || {
        Error::Config(format!(
            "codec executable {} not found (set {ENCODER_ENV} / {DECODER_ENV} or the codec section of the config)",
            program.display()
        ))
    };
    if program.components().count() > 1 {
        return if program.is_file() { Ok(program.to_path_buf()) } else { Err(missing()) };
    }
    let path = std::env::var_os("PATH").ok_or_else(missing)?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(program))
        .find(|p| p.is_file())
        .ok_or_else(missing)
}

fn run_tool(program: &Path, args: &[&std::ffi::OsStr]) -> Result<()> {
    let exe = find_executable(program)?;
    let out = Command::new(&exe)
        .args(args)
        .output()
        .map_err(|e| Error::ExternalTool(format!("{}: {e}", exe.display())))?;
    if !out.status.success() {
        return Err(Error::ExternalTool(format!(
            "{} exited with {}: {}",
            exe.display(),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(())
}

/// Encode `wav_in` to `mp3_out` and decode it again into `wav_out`.
pub fn encode_decode_files(
    codec: &CodecConfig,
    wav_in: &Path,
    bitrate: Bitrate,
    mp3_out: &Path,
    wav_out: &Path,
) -> Result<()> {
    let kbps = bitrate.kbps().to_string();
    run_tool(
        &codec.encoder,
        &["-b".as_ref(), kbps.as_ref(), "-m".as_ref(), "m".as_ref(), wav_in.as_os_str(), mp3_out.as_os_str()],
    )?;
    run_tool(
        &codec.decoder,
        &["--decode".as_ref(), mp3_out.as_os_str(), wav_out.as_os_str()],
    )
}

/// Read a decoder output file, converting to 44.1 kHz if the codec changed
/// the rate.
pub fn read_decoded(path: &Path) -> Result<AudioSignal> {
    let raw = read_wav_raw(path)?;
    AudioSignal::new(resample_fft(&raw.samples, raw.sample_rate, SAMPLE_RATE))
}

/// Codec delay of `decoded` relative to `hq`: the lag in `0..=MAX_DELAY`
/// maximising the normalised cross-correlation of the first `ALIGN_WINDOW`
/// samples of `hq`.
pub fn estimate_offset(hq: &[f64], decoded: &[f64]) -> Result<usize> {
    let win = ALIGN_WINDOW.min(hq.len());
    let reference = &hq[..win];
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if win == 0 || ref_energy == 0.0 {
        return Ok(0);
    }
    let max_lag = MAX_DELAY.min(decoded.len().saturating_sub(win));
    let mut best = (0, f64::NEG_INFINITY);
    for lag in 0..=max_lag {
        let seg = &decoded[lag..lag + win];
        let (mut dot, mut energy) = (0.0, 0.0);
        for (a, b) in reference.iter().zip(seg) {
            dot += a * b;
            energy += b * b;
        }
        if energy > 0.0 {
            let r = dot / (ref_energy * energy).sqrt();
            if r > best.1 {
                best = (lag, r);
            }
        }
    }
    Ok(best.0)
}

/// Apply a codec delay and check the remaining length against `hq_len`.
/// The result has exactly `hq_len` samples.
pub fn compensate(decoded: &AudioSignal, offset: usize, hq_len: usize) -> Result<AudioSignal> {
    let rest = decoded.len().saturating_sub(offset);
    if rest.abs_diff(hq_len) > LENGTH_TOLERANCE {
        return Err(Error::Data(format!(
            "pair rejected: decoded length {rest} after removing {offset} samples of delay \
             differs from the original {hq_len} by more than {LENGTH_TOLERANCE}"
        )));
    }
    Ok(decoded.excerpt(offset, hq_len))
}

/// Decoded MP3 version of a signal, delay compensated.
#[derive(Clone, Debug)]
pub struct CodedSignal {
    pub decoded: AudioSignal,
    pub offset: usize,
}

/// Round trip `hq` through the external codec at `bitrate`.
pub fn encode_decode_mp3(codec: &CodecConfig, hq: &AudioSignal, bitrate: Bitrate) -> Result<CodedSignal> {
    codec.check()?;
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let wav_in = dir.path().join("in.wav");
    let mp3 = dir.path().join("out.mp3");
    let wav_out = dir.path().join("out.wav");
    write_wav_samples(&wav_in, hq.samples(), SAMPLE_RATE, WavFormat::Int16)?;
    encode_decode_files(codec, &wav_in, bitrate, &mp3, &wav_out)?;
    let raw = read_decoded(&wav_out)?;
    let offset = estimate_offset(hq.samples(), raw.samples())?;
    Ok(CodedSignal {
        decoded: compensate(&raw, offset, hq.len())?,
        offset,
    })
}
