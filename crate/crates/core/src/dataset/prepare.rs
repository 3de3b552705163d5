//! Corpus preparation: encode every song at every bitrate, align, split and
//! write the manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::audio::{load_wav, write_wav_samples, WavFormat, SAMPLE_RATE};
use crate::dataset::codec::{compensate, encode_decode_files, estimate_offset, read_decoded, Bitrate, CodecConfig};
use crate::dataset::manifest::{Manifest, ManifestRecord, MANIFEST_FILE};
use crate::dataset::segment::{segment_starts, stride_for, DEFAULT_OVERLAP, SEGMENT_FRAMES};
use crate::dataset::split::{split_dataset, Split};
use crate::error::{Error, Result};
use crate::spectral::{frame_count, HOP, WIN};

#[derive(Clone, Debug)]
pub struct PrepareConfig {
    pub corpus_dir: PathBuf,
    pub out_dir: PathBuf,
    pub bitrates: Vec<Bitrate>,
    pub seed: u64,
    pub ratios: [f64; 3],
    pub codec: CodecConfig,
    pub resample: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitStats {
    pub songs: usize,
    pub segments: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrepareSummary {
    pub songs: usize,
    pub per_split: BTreeMap<Split, SplitStats>,
    /// `(song_id, bitrate, reason)` of every pair left out of the manifest.
    pub rejected: Vec<(String, Bitrate, String)>,
    pub manifest_path: PathBuf,
}

impl fmt::Display for PrepareSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "songs: {}", self.songs)?;
        for (split, s) in &self.per_split {
            writeln!(f, "{split}: {} songs, {} segments", s.songs, s.segments)?;
        }
        for (id, b, why) in &self.rejected {
            writeln!(f, "rejected {id} at {b}: {why}")?;
        }
        write!(f, "manifest: {}", self.manifest_path.display())
    }
}

/// Mono WAV files directly inside `dir`, sorted by name.
pub fn list_corpus(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no WAV files in {}", dir.display())));
    }
    Ok(files)
}

fn song_id(path: &Path) -> Result<String> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Data(format!("{}: file name is not UTF-8", path.display())))?;
    if id.is_empty() || id.contains(char::is_whitespace) {
        return Err(Error::Data(format!("{}: song ids may not contain whitespace", path.display())));
    }
    Ok(id.to_string())
}

pub fn prepare(cfg: &PrepareConfig) -> Result<(Manifest, PrepareSummary)> {
    if cfg.bitrates.is_empty() {
        return Err(Error::Config("no bitrates requested".into()));
    }
    let corpus_dir = cfg
        .corpus_dir
        .canonicalize()
        .map_err(|e| Error::io(&cfg.corpus_dir, e))?;
    let files = list_corpus(&corpus_dir)?;
    let ids = files.iter().map(|f| song_id(f)).collect::<Result<Vec<_>>>()?;
    let splits = split_dataset(&ids, cfg.ratios, cfg.seed)?;
    cfg.codec.check()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let scratch = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;

    let mut summary = PrepareSummary {
        songs: ids.len(),
        manifest_path: cfg.out_dir.join(MANIFEST_FILE),
        ..Default::default()
    };
    let stride = stride_for(SEGMENT_FRAMES, DEFAULT_OVERLAP)?;
    let mut records = Vec::new();
    for (file, id) in files.iter().zip(&ids) {
        let split = splits.split_of(id).expect("every id is assigned a split");
        let hq = load_wav(file, cfg.resample)?;
        let stats = summary.per_split.entry(split).or_default();
        stats.songs += 1;
        stats.segments += segment_starts(frame_count(hq.len(), WIN, HOP), SEGMENT_FRAMES, stride).len();

        let wav_in = scratch.path().join("in.wav");
        write_wav_samples(&wav_in, hq.samples(), SAMPLE_RATE, WavFormat::Int16)?;
        for &bitrate in &cfg.bitrates {
            let rel_dir = PathBuf::from("audio").join(bitrate.to_string());
            let abs_dir = cfg.out_dir.join(&rel_dir);
            std::fs::create_dir_all(&abs_dir).map_err(|e| Error::io(&abs_dir, e))?;
            let mp3_rel = rel_dir.join(format!("{id}.mp3"));
            let dec_rel = rel_dir.join(format!("{id}.wav"));
            let mp3_abs = cfg.out_dir.join(&mp3_rel);
            let dec_abs = cfg.out_dir.join(&dec_rel);
            encode_decode_files(&cfg.codec, &wav_in, bitrate, &mp3_abs, &dec_abs)?;
            let decoded = read_decoded(&dec_abs)?;
            // Keep the codec output at 44.1 kHz so loading needs no resampling.
            write_wav_samples(&dec_abs, decoded.samples(), SAMPLE_RATE, WavFormat::Float32)?;
            let offset = estimate_offset(hq.samples(), decoded.samples())?;
            if let Err(e) = compensate(&decoded, offset, hq.len()) {
                log::warn!("{id} at {bitrate}: {e}");
                summary.rejected.push((id.clone(), bitrate, e.to_string()));
                continue;
            }
            records.push(ManifestRecord {
                song_id: id.clone(),
                split,
                bitrate,
                offset,
                hq_path: file.file_name().expect("listed files have names").into(),
                mp3_path: mp3_rel,
                decoded_path: dec_rel,
            });
        }
    }
    for split in Split::ALL {
        summary.per_split.entry(split).or_default();
    }
    let manifest = Manifest {
        splits,
        corpus_dir,
        resample: cfg.resample,
        records,
        base_dir: cfg.out_dir.clone(),
    };
    manifest.save(&summary.manifest_path)?;
    Ok((manifest, summary))
}
