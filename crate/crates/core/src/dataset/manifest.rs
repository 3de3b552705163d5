//! Tab-separated manifest of prepared (original, MP3) song pairs.
//!
//! ```text
//! # mp3gan-manifest v1
//! # seed <u64>
//! # ratios <train> <eval> <test>
//! # corpus <dir>
//! # resample <true|false>
//! song_id	split	bitrate	offset	hq_path	mp3_path	decoded_path
//! ...
//! ```
//!
//! `hq_path` is relative to the corpus directory; `mp3_path` and
//! `decoded_path` are relative to the directory holding the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::audio::{load_wav, AudioSignal};
use crate::dataset::codec::{compensate, read_decoded, Bitrate};
use crate::dataset::split::{Split, SplitManifest};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "# mp3gan-manifest v1";
pub const MANIFEST_FILE: &str = "manifest.tsv";
const COLUMNS: [&str; 7] = ["song_id", "split", "bitrate", "offset", "hq_path", "mp3_path", "decoded_path"];

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub song_id: String,
    pub split: Split,
    pub bitrate: Bitrate,
    pub offset: usize,
    pub hq_path: PathBuf,
    pub mp3_path: PathBuf,
    pub decoded_path: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub splits: SplitManifest,
    pub corpus_dir: PathBuf,
    pub resample: bool,
    pub records: Vec<ManifestRecord>,
    /// Directory the relative codec paths are resolved against.
    pub base_dir: PathBuf,
}

/// One song at one bitrate with resolved file paths.
#[derive(Clone, Debug, PartialEq)]
pub struct SongPair {
    pub song_id: String,
    pub hq_path: PathBuf,
    pub mp3_decoded_path: PathBuf,
    pub bitrate: Bitrate,
    pub alignment_offset: usize,
    pub resample: bool,
}

impl SongPair {
    /// The original and the delay-compensated decoded signal, equal length.
    pub fn load(&self) -> Result<(AudioSignal, AudioSignal)> {
        let hq = load_wav(&self.hq_path, self.resample)?;
        let decoded = read_decoded(&self.mp3_decoded_path)?;
        let mp3 = compensate(&decoded, self.alignment_offset, hq.len()).map_err(|e| {
            Error::Data(format!("{} at {}: {e}", self.song_id, self.bitrate))
        })?;
        Ok((hq, mp3))
    }
}

impl Manifest {
    pub fn pairs(&self, split: Split, bitrate: Bitrate) -> Vec<SongPair> {
        self.records
            .iter()
            .filter(|r| r.split == split && r.bitrate == bitrate)
            .map(|r| SongPair {
                song_id: r.song_id.clone(),
                hq_path: self.corpus_dir.join(&r.hq_path),
                mp3_decoded_path: self.base_dir.join(&r.decoded_path),
                bitrate: r.bitrate,
                alignment_offset: r.offset,
                resample: self.resample,
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let r = self.splits.ratios;
        writeln!(s, "{MANIFEST_HEADER}").unwrap();
        writeln!(s, "# seed {}", self.splits.seed).unwrap();
        writeln!(s, "# ratios {} {} {}", r[0], r[1], r[2]).unwrap();
        writeln!(s, "# corpus {}", self.corpus_dir.display()).unwrap();
        writeln!(s, "# resample {}", self.resample).unwrap();
        writeln!(s, "# songs {}", song_list(&self.splits)).unwrap();
        writeln!(s, "{}", COLUMNS.join("\t")).unwrap();
        for rec in &self.records {
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                rec.song_id,
                rec.split,
                rec.bitrate,
                rec.offset,
                rec.hq_path.display(),
                rec.mp3_path.display(),
                rec.decoded_path.display()
            )
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Manifest> {
        let bad = |line: usize, msg: &str| Error::Data(format!("manifest line {line}: {msg}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l == MANIFEST_HEADER => {}
            _ => return Err(bad(1, &format!("expected header {MANIFEST_HEADER:?}"))),
        }
        let mut seed = None;
        let mut ratios = None;
        let mut corpus = None;
        let mut resample = false;
        let mut songs: Vec<(String, Split)> = Vec::new();
        let mut records = Vec::new();
        let mut seen_columns = false;
        for (n, line) in lines {
            if let Some(meta) = line.strip_prefix("# ") {
                let (key, value) = meta.split_once(' ').unwrap_or((meta, ""));
                match key {
                    "seed" => seed = Some(value.parse().map_err(|_| bad(n, "bad seed"))?),
                    "ratios" => {
                        let v: Vec<f64> = value
                            .split(' ')
                            .map(str::parse)
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| bad(n, "bad ratios"))?;
                        ratios = Some(<[f64; 3]>::try_from(v).map_err(|_| bad(n, "need 3 ratios"))?);
                    }
                    "corpus" => corpus = Some(PathBuf::from(value)),
                    "resample" => resample = value == "true",
                    "songs" => {
                        for item in value.split(' ').filter(|s| !s.is_empty()) {
                            let (id, split) = item.rsplit_once(':').ok_or_else(|| bad(n, "bad song entry"))?;
                            songs.push((id.to_string(), split.parse()?));
                        }
                    }
                    _ => return Err(bad(n, &format!("unknown key {key:?}"))),
                }
                continue;
            }
            if !seen_columns {
                if line.split('\t').ne(COLUMNS) {
                    return Err(bad(n, "unexpected column header"));
                }
                seen_columns = true;
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != COLUMNS.len() {
                return Err(bad(n, &format!("expected {} fields, found {}", COLUMNS.len(), f.len())));
            }
            records.push(ManifestRecord {
                song_id: f[0].to_string(),
                split: f[1].parse()?,
                bitrate: f[2].parse()?,
                offset: f[3].parse().map_err(|_| bad(n, "bad offset"))?,
                hq_path: f[4].into(),
                mp3_path: f[5].into(),
                decoded_path: f[6].into(),
            });
        }
        let mut splits = SplitManifest {
            train: vec![],
            eval: vec![],
            test: vec![],
            seed: seed.ok_or_else(|| bad(0, "missing seed"))?,
            ratios: ratios.ok_or_else(|| bad(0, "missing ratios"))?,
        };
        for (id, split) in songs {
            match split {
                Split::Train => splits.train.push(id),
                Split::Eval => splits.eval.push(id),
                Split::Test => splits.test.push(id),
            }
        }
        for rec in &records {
            if splits.split_of(&rec.song_id) != Some(rec.split) {
                return Err(Error::Data(format!(
                    "manifest record {} is not listed under split {}",
                    rec.song_id, rec.split
                )));
            }
        }
        Ok(Manifest {
            splits,
            corpus_dir: corpus.ok_or_else(|| bad(0, "missing corpus"))?,
            resample,
            records,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Manifest::parse(&text, base)
    }
}

fn song_list(splits: &SplitManifest) -> String {
    let mut items: Vec<String> = Split::ALL
        .into_iter()
        .flat_map(|s| splits.ids(s).iter().map(move |id| format!("{id}:{s}")))
        .collect();
    items.sort();
    items.join(" ")
}
