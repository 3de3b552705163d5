//! Evaluation of a system over the excerpts of one split.

use sha2::{Digest, Sha256};

use crate::audio::{save_wav, AudioSignal, WavFormat};
use crate::dataset::codec::Bitrate;
use crate::dataset::manifest::Manifest;
use crate::dataset::split::Split;
use crate::error::{Error, Result};
use crate::evaluation::best_of_n::{sample_candidates, select_candidate};
use crate::evaluation::metrics::{excerpt_metrics, Metric};
use crate::evaluation::peaq::{run_peaq, PeaqConfig, PeaqScores};
use crate::evaluation::report::{ExcerptRecord, MetricReport, Protocol, System};
use crate::model::{restore_audio, ModelParams, DEFAULT_CHUNK};
use crate::spectral::{covered_len, HOP, WIN};

/// Aligned original and decoded excerpts of one song.
#[derive(Clone, Debug)]
pub struct Excerpt {
    pub song_id: String,
    pub start_frame: usize,
    pub hq: AudioSignal,
    pub mp3: AudioSignal,
}

/// Non-overlapping excerpts of `protocol.excerpt_frames` frames from every
/// song of `split`, in manifest order.
pub fn excerpts(manifest: &Manifest, split: Split, bitrate: Bitrate, protocol: &Protocol) -> Result<Vec<Excerpt>> {
    protocol.validate()?;
    let len = covered_len(protocol.excerpt_frames, WIN, HOP);
    let mut out = Vec::new();
    for pair in manifest.pairs(split, bitrate) {
        let (hq, mp3) = pair.load()?;
        let mut start = 0;
        let mut taken = 0;
        while start * HOP + len <= hq.len() && protocol.excerpts_per_song.is_none_or(|n| taken < n) {
            out.push(Excerpt {
                song_id: pair.song_id.clone(),
                start_frame: start,
                hq: hq.excerpt(start * HOP, len),
                mp3: mp3.excerpt(start * HOP, len),
            });
            start += protocol.excerpt_frames;
            taken += 1;
        }
        if taken == 0 {
            log::warn!("{} is shorter than one excerpt and is skipped", pair.song_id);
        }
    }
    if out.is_empty() {
        return Err(Error::Data(format!(
            "no {}-frame excerpts in the {} split at {bitrate}",
            protocol.excerpt_frames,
            split.name()
        )));
    }
    Ok(out)
}

/// Noise seed of one excerpt, independent of which other excerpts exist.
pub fn excerpt_seed(seed: u64, song_id: &str, start_frame: usize) -> u64 {
    let digest = Sha256::digest(format!("{seed}/{song_id}/{start_frame}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

struct Peaq {
    config: PeaqConfig,
    exe: Option<std::path::PathBuf>,
    dir: Option<tempfile::TempDir>,
}

impl Peaq {
    fn new(config: &PeaqConfig) -> Result<Self> {
        let exe = config.resolve();
        let dir = match exe {
            Some(_) => Some(tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?),
            None => None,
        };
        Ok(Self {
            config: config.clone(),
            exe,
            dir,
        })
    }

    fn score(&self, reference: &AudioSignal, test: &AudioSignal) -> Result<Option<PeaqScores>> {
        let (Some(exe), Some(dir)) = (&self.exe, &self.dir) else {
            return Ok(None);
        };
        let r = dir.path().join("ref.wav");
        let t = dir.path().join("test.wav");
        save_wav(&r, reference, WavFormat::Float32)?;
        save_wav(&t, test, WavFormat::Float32)?;
        run_peaq(&self.config, exe, &r, &t).map(Some)
    }
}

/// Score one system on the excerpts of `split`. `model` is required for
/// `det` and `sto` and ignored for `mp3`. Stochastic systems report the
/// best of `n_samples` draws per metric; PEAQ runs on the draw selected by
/// `selection_metric`.
pub fn evaluate_system(
    manifest: &Manifest,
    split: Split,
    system: System,
    model: Option<&ModelParams>,
    bitrate: Bitrate,
    protocol: &Protocol,
    peaq: &PeaqConfig,
) -> Result<MetricReport> {
    protocol.validate()?;
    match (system, model) {
        (System::Mp3, _) => {}
        (_, None) => return Err(Error::Config(format!("system {system} needs a checkpoint"))),
        (System::Det, Some(g)) if g.stochastic() => {
            return Err(Error::Config("system det needs a deterministic generator".into()))
        }
        (System::Sto, Some(g)) if !g.stochastic() => {
            return Err(Error::Config("best-of-n requires stochastic generator".into()))
        }
        _ => {}
    }
    let peaq = Peaq::new(peaq)?;
    let mut report = MetricReport::new(protocol.clone());
    for ex in excerpts(manifest, split, bitrate, protocol)? {
        let record = |lsd, mse, snr, grades: Option<PeaqScores>| ExcerptRecord {
            song_id: ex.song_id.clone(),
            start_frame: ex.start_frame,
            bitrate,
            system,
            lsd,
            mse,
            snr,
            odg: grades.map(|g| g.odg),
            di: grades.map(|g| g.di),
        };
        let rec = match (system, model) {
            (System::Sto, Some(g)) => {
                let seed = excerpt_seed(protocol.seed, &ex.song_id, ex.start_frame);
                let candidates = sample_candidates(g, &ex.mp3, &ex.hq, protocol.n_samples, seed)?;
                let best = |m: Metric| select_candidate(&candidates, m);
                let chosen = best(protocol.selection_metric)?;
                let grades = peaq.score(&ex.hq, &chosen.output)?;
                record(best(Metric::Lsd)?.value, best(Metric::Mse)?.value, best(Metric::Snr)?.value, grades)
            }
            (System::Det, Some(g)) => {
                let out = restore_audio(g, &ex.mp3, None, DEFAULT_CHUNK)?;
                let m = excerpt_metrics(&ex.hq, &out)?;
                record(m.lsd, m.mse, m.snr, peaq.score(&ex.hq, &out)?)
            }
            _ => {
                let m = excerpt_metrics(&ex.hq, &ex.mp3)?;
                record(m.lsd, m.mse, m.snr, peaq.score(&ex.hq, &ex.mp3)?)
            }
        };
        log::info!(
            "{} {} frame {}: lsd {:.3} mse {:.4} snr {:.2}",
            system,
            rec.song_id,
            rec.start_frame,
            rec.lsd,
            rec.mse,
            rec.snr
        );
        report.records.push(rec);
    }
    Ok(report)
}
