//! Cutting aligned songs into fixed-length spectrogram excerpts.

use mp3gan_autodiff::Tensor;
use rand::Rng;

use crate::audio::AudioSignal;
use crate::dataset::manifest::{Manifest, SongPair};
use crate::dataset::split::Split;
use crate::dataset::codec::Bitrate;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::spectral::{covered_len, frame_count, stft_with, ComplexSpectrogram, HOP, WIN};

/// Frames per training excerpt.
pub const SEGMENT_FRAMES: usize = 336;
/// Frames per excerpt of the listening export.
pub const EXPORT_FRAMES: usize = 672;
pub const DEFAULT_OVERLAP: f64 = 0.5;
pub const DEFAULT_BATCH: usize = 12;

/// Aligned original (`x`) and MP3 (`y`) excerpts in signed-sqrt scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentPair {
    pub x: ComplexSpectrogram,
    pub y: ComplexSpectrogram,
    pub song_id: String,
    pub start_frame: usize,
}

/// Distance in frames between consecutive excerpts.
pub fn stride_for(frames: usize, overlap: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&overlap) || frames == 0 {
        return Err(Error::Config(format!(
            "overlap must be in [0, 1) and frames > 0, got {overlap} and {frames}"
        )));
    }
    Ok((frames - (frames as f64 * overlap).round() as usize).max(1))
}

/// Start frames of every complete excerpt.
pub fn segment_starts(total_frames: usize, frames: usize, stride: usize) -> Vec<usize> {
    if total_frames < frames {
        return Vec::new();
    }
    (0..=(total_frames - frames) / stride).map(|k| k * stride).collect()
}

/// The excerpt of `frames` frames starting at `start` from equal-length
/// signals.
pub fn segment_at(
    song_id: &str,
    hq: &AudioSignal,
    mp3: &AudioSignal,
    start: usize,
    frames: usize,
) -> Result<SegmentPair> {
    let range = start * HOP..start * HOP + covered_len(frames, WIN, HOP);
    let cut = |s: &AudioSignal| -> Result<ComplexSpectrogram> {
        let samples = s.samples().get(range.clone()).ok_or(Error::InsufficientSamples {
            needed: range.end,
            got: s.len(),
        })?;
        stft_with(samples, WIN, HOP)?.to_signed_sqrt()
    };
    Ok(SegmentPair {
        x: cut(hq)?,
        y: cut(mp3)?,
        song_id: song_id.to_string(),
        start_frame: start,
    })
}

/// All excerpts of one aligned song. Songs shorter than one excerpt yield
/// nothing (with a warning).
pub fn segment_signals(
    song_id: &str,
    hq: &AudioSignal,
    mp3: &AudioSignal,
    frames: usize,
    overlap: f64,
) -> Result<Vec<SegmentPair>> {
    if hq.len() != mp3.len() {
        return Err(Error::Data(format!(
            "{song_id}: original has {} samples, MP3 has {}",
            hq.len(),
            mp3.len()
        )));
    }
    let total = frame_count(hq.len(), WIN, HOP);
    let starts = segment_starts(total, frames, stride_for(frames, overlap)?);
    if starts.is_empty() {
        log::warn!("{song_id}: {total} frames is shorter than one {frames}-frame segment");
    }
    starts
        .into_iter()
        .map(|s| segment_at(song_id, hq, mp3, s, frames))
        .collect()
}

pub fn segment_pairs(pair: &SongPair, frames: usize, overlap: f64) -> Result<Vec<SegmentPair>> {
    let (hq, mp3) = pair.load()?;
    segment_signals(&pair.song_id, &hq, &mp3, frames, overlap)
}

/// A batch of excerpts stacked as `[B, 2, F, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub y: Tensor,
    pub song_ids: Vec<String>,
    pub start_frames: Vec<usize>,
}

impl Batch {
    pub fn from_segments(segments: &[SegmentPair]) -> Result<Batch> {
        let first = segments
            .first()
            .ok_or_else(|| Error::Data("empty batch".into()))?;
        let shape = first.x.data().shape().to_vec();
        let mut x = Vec::with_capacity(segments.len() * first.x.data().numel());
        let mut y = Vec::with_capacity(x.capacity());
        for s in segments {
            if s.x.data().shape() != shape.as_slice() || s.y.data().shape() != shape.as_slice() {
                return Err(Error::Shape("segments in a batch differ in shape".into()));
            }
            x.extend_from_slice(s.x.data().data());
            y.extend_from_slice(s.y.data().data());
        }
        let full = [&[segments.len()][..], &shape].concat();
        Ok(Batch {
            x: Tensor::new(&full, x),
            y: Tensor::new(&full, y),
            song_ids: segments.iter().map(|s| s.song_id.clone()).collect(),
            start_frames: segments.iter().map(|s| s.start_frame).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.song_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.song_ids.is_empty()
    }
}

/// Loaded songs of one split plus the positions of all their excerpts.
/// Spectrograms are computed on demand.
#[derive(Clone, Debug)]
pub struct SegmentSource {
    songs: Vec<(String, AudioSignal, AudioSignal)>,
    positions: Vec<(usize, usize)>,
    frames: usize,
}

impl SegmentSource {
    pub fn from_signals(
        songs: Vec<(String, AudioSignal, AudioSignal)>,
        frames: usize,
        overlap: f64,
    ) -> Result<Self> {
        let stride = stride_for(frames, overlap)?;
        let mut positions = Vec::new();
        for (i, (id, hq, mp3)) in songs.iter().enumerate() {
            if hq.len() != mp3.len() {
                return Err(Error::Data(format!("{id}: original and MP3 lengths differ")));
            }
            let total = frame_count(hq.len(), WIN, HOP);
            let starts = segment_starts(total, frames, stride);
            if starts.is_empty() {
                log::warn!("{id}: {total} frames is shorter than one {frames}-frame segment");
            }
            positions.extend(starts.into_iter().map(|s| (i, s)));
        }
        Ok(Self {
            songs,
            positions,
            frames,
        })
    }

    pub fn from_pairs(pairs: &[SongPair], frames: usize, overlap: f64) -> Result<Self> {
        let songs = pairs
            .iter()
            .map(|p| p.load().map(|(hq, mp3)| (p.song_id.clone(), hq, mp3)))
            .collect::<Result<_>>()?;
        Self::from_signals(songs, frames, overlap)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// `(song_id, start_frame)` of every excerpt, in order.
    pub fn positions(&self) -> impl Iterator<Item = (&str, usize)> {
        self.positions
            .iter()
            .map(|&(s, f)| (self.songs[s].0.as_str(), f))
    }

    pub fn segment(&self, index: usize) -> Result<SegmentPair> {
        let (song, start) = self.positions[index];
        let (id, hq, mp3) = &self.songs[song];
        segment_at(id, hq, mp3, start, self.frames)
    }
}

/// Endless stream of uniformly sampled batches; batch `k` depends only on
/// the seed and `k`.
#[derive(Clone, Debug)]
pub struct BatchIter {
    source: SegmentSource,
    batch_size: usize,
    seed: u64,
    step: u64,
}

impl BatchIter {
    pub fn new(source: SegmentSource, batch_size: usize, seed: u64) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::Data("split has no segments to sample from".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(Self {
            source,
            batch_size,
            seed,
            step: 0,
        })
    }

    pub fn source(&self) -> &SegmentSource {
        &self.source
    }

    /// Segment indices drawn for `step`.
    pub fn indices(&self, step: u64) -> Vec<usize> {
        let mut rng = stream(self.seed, Purpose::Batch, step);
        (0..self.batch_size)
            .map(|_| rng.random_range(0..self.source.len()))
            .collect()
    }

    pub fn batch(&self, step: u64) -> Result<Batch> {
        let segs: Vec<SegmentPair> = self
            .indices(step)
            .into_iter()
            .map(|i| self.source.segment(i))
            .collect::<Result<_>>()?;
        Batch::from_segments(&segs)
    }

    pub fn seek(&mut self, step: u64) {
        self.step = step;
    }
}

impl Iterator for BatchIter {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        let b = self.batch(self.step);
        self.step += 1;
        Some(b)
    }
}

/// Batches of training-length excerpts from one split and bitrate.
pub fn batch_iterator(
    manifest: &Manifest,
    split: Split,
    bitrate: Bitrate,
    batch_size: usize,
    seed: u64,
) -> Result<BatchIter> {
    let pairs = manifest.pairs(split, bitrate);
    if pairs.is_empty() {
        return Err(Error::Data(format!("split {split} has no songs at {bitrate}")));
    }
    let source = SegmentSource::from_pairs(&pairs, SEGMENT_FRAMES, DEFAULT_OVERLAP)?;
    BatchIter::new(source, batch_size, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_enumeration() {
        assert_eq!(segment_starts(336, 336, 168), vec![0]);
        assert_eq!(segment_starts(504, 336, 168), vec![0, 168]);
        assert_eq!(segment_starts(1000, 336, 168), vec![0, 168, 336, 504]);
        assert_eq!(segment_starts(335, 336, 168), Vec::<usize>::new());
        assert_eq!(stride_for(336, 0.5).unwrap(), 168);
        assert_eq!(stride_for(672, 0.0).unwrap(), 672);
        assert!(stride_for(336, 1.0).is_err());
    }
}
