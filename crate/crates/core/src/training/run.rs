//! The training loop: checkpoints, loss log and resumption.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::dataset::segment::{BatchIter, SegmentSource};
use crate::dataset::{Manifest, Split};
use crate::error::{Error, Result};
use crate::model::Checkpoint;
use crate::training::config::TrainConfig;
use crate::training::state::{train_step, LossRecord, TrainState, LOSS_COLUMNS};

pub const LOSS_LOG: &str = "losses.tsv";
pub const LOSS_LOG_HEADER: &str = "# mp3gan-losses v1";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const CONFIG_FILE: &str = "train_config.toml";

pub fn checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(CHECKPOINT_DIR).join(format!("step_{step:08}.ckpt"))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// Checkpoints written by this run, in order.
    pub checkpoints: Vec<PathBuf>,
    pub loss_log: PathBuf,
}

impl TrainOutcome {
    pub fn last_checkpoint(&self) -> Option<&Path> {
        self.checkpoints.last().map(PathBuf::as_path)
    }
}

/// Batches from the training split of `manifest`.
pub fn training_batches(config: &TrainConfig, manifest: &Manifest) -> Result<BatchIter> {
    let pairs = manifest.pairs(Split::Train, config.bitrate);
    if pairs.is_empty() {
        return Err(Error::Data(format!(
            "training split has no songs at {}; nothing to train on",
            config.bitrate
        )));
    }
    let source = SegmentSource::from_pairs(&pairs, config.segment_frames, config.overlap)?;
    BatchIter::new(source, config.batch_size, config.seed)
}

pub fn read_loss_log(path: &Path) -> Result<Vec<LossRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    if lines.next() != Some(LOSS_COLUMNS) {
        return Err(Error::Data(format!("{}: missing loss log column header", path.display())));
    }
    lines.filter(|l| !l.is_empty()).map(LossRecord::parse_row).collect()
}

fn open_log(path: &Path, keep: &[LossRecord]) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{LOSS_LOG_HEADER}").map_err(|e| Error::io(path, e))?;
    writeln!(w, "# kernels: single-threaded, deterministic").map_err(|e| Error::io(path, e))?;
    writeln!(w, "{LOSS_COLUMNS}").map_err(|e| Error::io(path, e))?;
    for r in keep {
        writeln!(w, "{}", r.to_row()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(w)
}

/// Train from freshly initialised networks.
pub fn train(config: &TrainConfig, manifest: &Manifest, out_dir: &Path) -> Result<TrainOutcome> {
    config.validate()?;
    let batches = training_batches(config, manifest)?;
    run(TrainState::new(config.clone())?, &batches, out_dir)
}

/// Continue from a checkpoint written by [`train`]. Only the number of
/// iterations and the checkpoint cadence may differ from the original run.
pub fn resume(
    checkpoint: &Path,
    config: &TrainConfig,
    manifest: &Manifest,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut state = TrainState::from_checkpoint(Checkpoint::load(checkpoint)?)?;
    if !state.config.same_trajectory(config) {
        return Err(Error::Config(format!(
            "{} was trained with a different configuration; only iterations and checkpoint_every may change",
            checkpoint.display()
        )));
    }
    state.config = config.clone();
    let batches = training_batches(config, manifest)?;
    run(state, &batches, out_dir)
}

/// Run `state` up to `state.config.iterations` steps, drawing batch `k`
/// for step `k`.
pub fn run(mut state: TrainState, batches: &BatchIter, out_dir: &Path) -> Result<TrainOutcome> {
    fs::create_dir_all(out_dir.join(CHECKPOINT_DIR)).map_err(|e| Error::io(out_dir, e))?;
    let config_path = out_dir.join(CONFIG_FILE);
    fs::write(&config_path, state.config.to_toml()).map_err(|e| Error::io(&config_path, e))?;

    let log_path = out_dir.join(LOSS_LOG);
    let kept = if state.step == 0 {
        Vec::new()
    } else if log_path.exists() {
        let mut rows = read_loss_log(&log_path)?;
        rows.retain(|r| r.step < state.step);
        rows
    } else {
        log::warn!("resuming at step {} without an earlier loss log", state.step);
        Vec::new()
    };
    let mut log = open_log(&log_path, &kept)?;

    let mut checkpoints = Vec::new();
    let mut last_good: Option<PathBuf> = None;
    let save = |state: &TrainState, list: &mut Vec<PathBuf>| -> Result<PathBuf> {
        let p = checkpoint_path(out_dir, state.step);
        state.to_checkpoint().save(&p)?;
        log::info!("saved {}", p.display());
        list.push(p.clone());
        Ok(p)
    };
    if state.step == 0 {
        last_good = Some(save(&state, &mut checkpoints)?);
    }

    let total = state.config.iterations;
    let every = state.config.checkpoint_every;
    while state.step < total {
        let batch = batches.batch(state.step)?;
        let record = match train_step(&mut state, &batch) {
            Ok(r) => r,
            Err(Error::NonFinite(m)) => {
                let reference = last_good
                    .as_ref()
                    .map_or("none written by this run".to_string(), |p| p.display().to_string());
                return Err(Error::NonFinite(format!(
                    "{m} at step {}; last good checkpoint: {reference}",
                    state.step
                )));
            }
            Err(e) => return Err(e),
        };
        writeln!(log, "{}", record.to_row()).map_err(|e| Error::io(&log_path, e))?;
        log.flush().map_err(|e| Error::io(&log_path, e))?;
        if record.step % 10 == 0 || state.step == total {
            log::info!(
                "step {} gamma {:.4} gp {:.4} l_freq {:.4} l_rhyt {:.4} ({} ms)",
                record.step,
                record.gamma,
                record.gp,
                record.l_freq,
                record.l_rhyt,
                record.wall_ms
            );
        }
        if (every > 0 && state.step % every == 0) || state.step == total {
            last_good = Some(save(&state, &mut checkpoints)?);
        }
    }
    Ok(TrainOutcome {
        state,
        checkpoints,
        loss_log: log_path,
    })
}
