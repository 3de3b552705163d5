#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mp3gan::audio::{resample_fft, save_wav, AudioSignal, WavFormat};
use mp3gan::dataset::codec::Bitrate;
use mp3gan::dataset::fixture::synth_song;
use mp3gan::dataset::manifest::{Manifest, ManifestRecord};
use mp3gan::dataset::split::{Split, SplitManifest};

/// Band-limited copy of `x`, standing in for a low-bitrate decode.
pub fn lowpass(x: &AudioSignal, rate: u32) -> AudioSignal {
    let n = x.len();
    let down = resample_fft(x.samples(), 44_100, rate);
    let mut up = resample_fft(&down, rate, 44_100);
    up.resize(n, 0.0);
    AudioSignal::new(up).unwrap()
}

/// Songs `0..songs` written to `dir/corpus`, with low-passed "decodes" at
/// 16k in `dir/codec`. The last `test` songs form the test split, the rest
/// the training split.
pub fn toy_manifest(dir: &Path, songs: usize, test: usize, seconds: f64, seed: u64) -> Manifest {
    toy_manifest_with(dir, songs, test, seconds, seed, Some(11_025))
}

/// As [`toy_manifest`]; `None` stores the originals unchanged as decodes.
pub fn toy_manifest_with(
    dir: &Path,
    songs: usize,
    test: usize,
    seconds: f64,
    seed: u64,
    cutoff_rate: Option<u32>,
) -> Manifest {
    let corpus = dir.join("corpus");
    let codec = dir.join("codec");
    std::fs::create_dir_all(&corpus).unwrap();
    std::fs::create_dir_all(&codec).unwrap();
    let mut splits = SplitManifest {
        train: vec![],
        eval: vec![],
        test: vec![],
        seed,
        ratios: [0.8, 0.1, 0.1],
    };
    let mut records = Vec::new();
    for i in 0..songs {
        let id = format!("song{i:02}");
        let hq = synth_song(i, seconds, seed);
        let mp3 = cutoff_rate.map_or_else(|| hq.clone(), |r| lowpass(&hq, r));
        let hq_name = PathBuf::from(format!("{id}.wav"));
        let dec_name = PathBuf::from(format!("codec/{id}.16k.wav"));
        save_wav(&corpus.join(&hq_name), &hq, WavFormat::Float32).unwrap();
        save_wav(&dir.join(&dec_name), &mp3, WavFormat::Float32).unwrap();
        let split = if i + test >= songs { Split::Test } else { Split::Train };
        match split {
            Split::Train => splits.train.push(id.clone()),
            _ => splits.test.push(id.clone()),
        }
        records.push(ManifestRecord {
            song_id: id,
            split,
            bitrate: Bitrate::K16,
            offset: 0,
            hq_path: hq_name,
            mp3_path: PathBuf::from(format!("codec/{i}.mp3")),
            decoded_path: dec_name,
        });
    }
    Manifest {
        splits,
        corpus_dir: corpus,
        resample: false,
        records,
        base_dir: dir.to_path_buf(),
    }
}
