//! Frequency profiles of generator outputs.

use serde::{Deserialize, Serialize};

use crate::audio::AudioSignal;
use crate::error::Result;
use crate::model::{restore_spectrogram, ModelParams, DEFAULT_CHUNK};
use crate::spectral::{stft, ComplexSpectrogram};

/// Mean magnitude per frequency bin over time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    pub values: Vec<f64>,
    /// Noise vector that produced the output, if any.
    pub z: Option<Vec<f64>>,
}

/// `mean_t sqrt(a^2 + b^2)` per bin, after undoing the signed-sqrt scaling.
pub fn frequency_profile(spec: &ComplexSpectrogram) -> FrequencyProfile {
    let lin = spec.to_linear();
    let (f, t) = (lin.bins(), lin.frames());
    let d = lin.data().data();
    let (re, im) = d.split_at(f * t);
    let values = (0..f)
        .map(|bin| {
            let row = bin * t..(bin + 1) * t;
            re[row.clone()]
                .iter()
                .zip(&im[row])
                .map(|(a, b)| a.hypot(*b))
                .sum::<f64>()
                / t.max(1) as f64
        })
        .collect();
    FrequencyProfile { values, z: None }
}

/// Summary of how strongly profiles depend on `z` rather than on the
/// excerpt, over the top quarter of the bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileConsistency {
    /// Variance across excerpts for a fixed `z`, averaged over `z` and bins.
    pub across_excerpts: f64,
    /// Variance across `z` for a fixed excerpt, averaged over excerpts and bins.
    pub across_z: f64,
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
}

/// `profiles[e][k]` is the profile of excerpt `e` restored with noise `k`.
pub fn profile_consistency(profiles: &[Vec<FrequencyProfile>]) -> Option<ProfileConsistency> {
    let excerpts = profiles.len();
    let zs = profiles.first()?.len();
    if excerpts < 2 || zs < 2 || profiles.iter().any(|p| p.len() != zs) {
        return None;
    }
    let bins = profiles[0][0].values.len();
    let top = bins - bins / 4..bins;
    let mut across_excerpts = 0.0;
    let mut across_z = 0.0;
    for bin in top.clone() {
        for k in 0..zs {
            let v: Vec<f64> = (0..excerpts).map(|e| profiles[e][k].values[bin]).collect();
            across_excerpts += variance(&v);
        }
        for row in profiles {
            let v: Vec<f64> = row.iter().map(|p| p.values[bin]).collect();
            across_z += variance(&v);
        }
    }
    let n = top.len() as f64;
    Some(ProfileConsistency {
        across_excerpts: across_excerpts / (n * zs as f64),
        across_z: across_z / (n * excerpts as f64),
    })
}

/// Profile of the generator output for one excerpt of decoded MP3 audio.
pub fn restored_profile(
    g: &ModelParams,
    mp3: &AudioSignal,
    z: Option<&[f64]>,
) -> Result<FrequencyProfile> {
    let spec = stft(mp3)?.to_signed_sqrt()?;
    let out = restore_spectrogram(g, &spec, z, DEFAULT_CHUNK)?;
    let mut p = frequency_profile(&out);
    p.z = z.map(<[f64]>::to_vec);
    Ok(p)
}

/// Profile of an unprocessed signal.
pub fn signal_profile(signal: &AudioSignal) -> Result<FrequencyProfile> {
    Ok(frequency_profile(&stft(signal)?))
}

/// Mean absolute difference between two profiles.
pub fn profile_distance(a: &FrequencyProfile, b: &FrequencyProfile) -> f64 {
    let n = a.values.len().max(1) as f64;
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum::<f64>() / n
}
