//! Best-of-N selection over stochastic restorations.

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::evaluation::metrics::{excerpt_metrics, Metric, Metrics};
use crate::model::{restore_audio, sample_noise, ModelParams, DEFAULT_CHUNK};

/// One stochastic restoration and its metrics against the reference.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub z: Vec<f64>,
    pub output: AudioSignal,
    pub metrics: Metrics,
}

#[derive(Clone, Debug)]
pub struct Selection {
    pub index: usize,
    pub output: AudioSignal,
    pub value: f64,
    /// Metric value of every sample, in draw order.
    pub values: Vec<f64>,
}

/// Restore `y` with noise vectors `0..n` of `seed` and score each output
/// against `reference`. Vector `k` does not depend on `n`, so smaller sets
/// are prefixes of larger ones.
pub fn sample_candidates(
    g: &ModelParams,
    y: &AudioSignal,
    reference: &AudioSignal,
    n: usize,
    seed: u64,
) -> Result<Vec<Candidate>> {
    if !g.stochastic() {
        return Err(Error::Config("best-of-n requires stochastic generator".into()));
    }
    if n == 0 {
        return Err(Error::Config("best-of-n needs at least one sample".into()));
    }
    if y.len() != reference.len() {
        return Err(Error::Shape(format!(
            "input has {} samples, reference {}",
            y.len(),
            reference.len()
        )));
    }
    (0..n)
        .map(|k| {
            let z = sample_noise(g.arch().noise_dim, seed, k as u64);
            let output = restore_audio(g, y, Some(&z), DEFAULT_CHUNK)?;
            let metrics = excerpt_metrics(reference, &output)?;
            Ok(Candidate { z, output, metrics })
        })
        .collect()
}

/// Index of the best value; ties go to the earliest sample.
pub fn select(values: &[f64], metric: Metric) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if !metric.better(v, values[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

pub fn select_candidate(candidates: &[Candidate], metric: Metric) -> Result<Selection> {
    let values: Vec<f64> = candidates.iter().map(|c| metric.of(&c.metrics)).collect();
    let index = select(&values, metric)
        .ok_or_else(|| Error::NonFinite(format!("no usable {metric} value among the samples")))?;
    Ok(Selection {
        index,
        output: candidates[index].output.clone(),
        value: values[index],
        values,
    })
}

/// Draw `n` restorations of `y` and keep the one that scores best on
/// `metric` against `reference`.
pub fn best_of_n(
    g: &ModelParams,
    y: &AudioSignal,
    n: usize,
    metric: Metric,
    reference: &AudioSignal,
    seed: u64,
) -> Result<Selection> {
    select_candidate(&sample_candidates(g, y, reference, n, seed)?, metric)
}
