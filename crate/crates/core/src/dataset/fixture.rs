//! Synthetic music-like test songs: harmonic chords, a kick drum and bright
//! hi-hat noise with energy up to the Nyquist frequency.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::{save_wav, AudioSignal, WavFormat, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

pub const FIXTURE_SONGS: usize = 6;
pub const FIXTURE_SECONDS: f64 = 6.0;
pub const FIXTURE_SEED: u64 = 2021;

const SCALE: [f64; 7] = [0.0, 2.0, 4.0, 5.0, 7.0, 9.0, 11.0];

/// One deterministic synthetic song.
pub fn synth_song(index: usize, seconds: f64, seed: u64) -> AudioSignal {
    let sr = SAMPLE_RATE as f64;
    let len = (seconds * sr).round() as usize;
    let mut rng = stream(seed, Purpose::Fixture, index as u64);
    let beat = (sr * rng.random_range(0.35..0.6)) as usize;
    let root = 110.0 * 2f64.powf(rng.random_range(0..12) as f64 / 12.0);
    let mut out = vec![0.0; len];

    for (b, start) in (0..len).step_by(beat).enumerate() {
        let degree = rng.random_range(0..SCALE.len());
        for voice in [0, 2, 4] {
            let step = SCALE[(degree + voice) % 7] + 12.0 * ((degree + voice) / 7) as f64;
            let f0 = root * 2f64.powf(step / 12.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            for n in 0..beat.min(len - start) {
                let t = n as f64 / sr;
                let env = (-3.0 * t).exp() * 0.12;
                let mut v = 0.0;
                for h in 1..=8 {
                    let f = f0 * h as f64;
                    if f < sr / 2.0 {
                        v += (2.0 * PI * f * t + phase * h as f64).sin() / h as f64;
                    }
                }
                out[start + n] += env * v;
            }
        }
        if b % 2 == 0 {
            for n in 0..(0.15 * sr) as usize {
                if start + n >= len {
                    break;
                }
                let t = n as f64 / sr;
                let f = 50.0 + 60.0 * (-30.0 * t).exp();
                out[start + n] += 0.4 * (-20.0 * t).exp() * (2.0 * PI * f * t).sin();
            }
        }
        for half in [0, beat / 2] {
            let s = start + half;
            let burst = (0.06 * sr) as usize;
            let (mut p1, mut p2) = (0.0, 0.0);
            for n in 0..burst {
                if s + n >= len {
                    break;
                }
                let w: f64 = StandardNormal.sample(&mut rng);
                // second difference pushes the noise towards high frequencies
                let hp = w - 2.0 * p1 + p2;
                p2 = p1;
                p1 = w;
                let t = n as f64 / sr;
                out[s + n] += 0.05 * (-60.0 * t).exp() * hp;
            }
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { 0.5 / peak } else { 1.0 };
    AudioSignal::new(out.into_iter().map(|v| v * gain).collect()).expect("finite synthesis")
}

/// Write `songs` synthetic songs as 16-bit WAV files `song_00.wav`, ...
pub fn write_fixture_corpus(dir: &Path, songs: usize, seconds: f64, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..songs)
        .map(|i| {
            let path = dir.join(format!("song_{i:02}.wav"));
            save_wav(&path, &synth_song(i, seconds, seed), WavFormat::Int16)?;
            Ok(path)
        })
        .collect()
}
