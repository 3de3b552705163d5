//! Optimizer state and one alternating critic / generator update.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use mp3gan_autodiff::{grad_tensors, no_grad, Tensor, Var};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::segment::Batch;
use crate::error::{Error, Result};
use crate::model::{
    critic_forward, critic_value, generator_forward, he_init, Checkpoint, ModelParams, TimeMode,
    TrainingBlob, Weights,
};
use crate::rng::{stream, Purpose};
use crate::training::adam::Adam;
use crate::training::config::TrainConfig;
use crate::training::losses::{
    drift_penalty, gradient_penalty, interpolation_weights, profile_loss, wasserstein_loss,
    ProfileAxis,
};

/// One line of the loss log.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    /// Wasserstein estimate of the last critic update.
    pub gamma: f64,
    /// Unscaled gradient penalty of the last critic update.
    pub gp: f64,
    /// Scaled drift penalty of the last critic update.
    pub drift: f64,
    pub l_freq: f64,
    pub l_rhyt: f64,
    pub wall_ms: u64,
}

pub const LOSS_COLUMNS: &str = "step\tgamma\tgp\tdrift\tl_freq\tl_rhyt\twall_ms";

impl LossRecord {
    /// Tab-separated row; floats use the shortest representation that
    /// reads back to the same value.
    pub fn to_row(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{}",
            self.step, self.gamma, self.gp, self.drift, self.l_freq, self.l_rhyt, self.wall_ms
        )
        .unwrap();
        s
    }

    pub fn parse_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || Error::Data(format!("malformed loss log row: {line:?}"));
        if f.len() != 7 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(Self {
            step: f[0].parse().map_err(|_| bad())?,
            gamma: num(f[1])?,
            gp: num(f[2])?,
            drift: num(f[3])?,
            l_freq: num(f[4])?,
            l_rhyt: num(f[5])?,
            wall_ms: f[6].parse().map_err(|_| bad())?,
        })
    }

    fn values(&self) -> [f64; 5] {
        [self.gamma, self.gp, self.drift, self.l_freq, self.l_rhyt]
    }
}

/// Running sums of the logged losses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTotals {
    pub steps: u64,
    pub sums: [f64; 5],
}

impl LossTotals {
    pub fn add(&mut self, r: &LossRecord) {
        self.steps += 1;
        for (s, v) in self.sums.iter_mut().zip(r.values()) {
            *s += v;
        }
    }

    pub fn means(&self) -> [f64; 5] {
        let n = self.steps.max(1) as f64;
        self.sums.map(|s| s / n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    /// Completed steps.
    pub step: u64,
    pub generator: ModelParams,
    pub critic: ModelParams,
    pub opt_g: Adam,
    pub opt_d: Adam,
    pub totals: LossTotals,
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    config: TrainConfig,
    step: u64,
    adam_g_t: u64,
    adam_d_t: u64,
    totals: LossTotals,
}

impl TrainState {
    /// Freshly initialised networks for `config`.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = he_init(config.generator_desc()?, config.seed)?;
        let critic = he_init(config.critic_desc()?, config.seed)?;
        let adam = |p: &ModelParams| Adam::new(config.lr, config.beta1, config.beta2, config.adam_eps, p);
        Ok(Self {
            opt_g: adam(&generator),
            opt_d: adam(&critic),
            generator,
            critic,
            config,
            step: 0,
            totals: LossTotals::default(),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = StateMeta {
            config: self.config.clone(),
            step: self.step,
            adam_g_t: self.opt_g.t,
            adam_d_t: self.opt_d.t,
            totals: self.totals.clone(),
        };
        let mut tensors = BTreeMap::new();
        for (tag, opt) in [("adam_g", &self.opt_g), ("adam_d", &self.opt_d)] {
            for (kind, map) in [("m", &opt.m), ("v", &opt.v)] {
                for (name, t) in map {
                    tensors.insert(format!("{tag}.{kind}/{name}"), t.clone());
                }
            }
        }
        Checkpoint {
            generator: self.generator.clone(),
            critic: Some(self.critic.clone()),
            training: Some(TrainingBlob {
                meta: serde_json::to_value(meta).expect("state metadata serializes"),
                tensors,
            }),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let blob = ck
            .training
            .ok_or_else(|| bad("checkpoint has no training state to resume from".into()))?;
        let critic = ck.critic.ok_or_else(|| bad("checkpoint has no critic".into()))?;
        let meta: StateMeta =
            serde_json::from_value(blob.meta).map_err(|e| bad(format!("training state: {e}")))?;
        meta.config.validate()?;
        if *ck.generator.desc() != meta.config.generator_desc()? || *critic.desc() != meta.config.critic_desc()? {
            return Err(bad("stored networks do not match the stored training config".into()));
        }
        let mut opt_g = Adam::new(meta.config.lr, meta.config.beta1, meta.config.beta2, meta.config.adam_eps, &ck.generator);
        let mut opt_d = Adam::new(meta.config.lr, meta.config.beta1, meta.config.beta2, meta.config.adam_eps, &critic);
        opt_g.t = meta.adam_g_t;
        opt_d.t = meta.adam_d_t;
        let mut tensors = blob.tensors;
        for (tag, opt) in [("adam_g", &mut opt_g), ("adam_d", &mut opt_d)] {
            for (kind, map) in [("m", &mut opt.m), ("v", &mut opt.v)] {
                for (name, slot) in map.iter_mut() {
                    let key = format!("{tag}.{kind}/{name}");
                    let t = tensors
                        .remove(&key)
                        .ok_or_else(|| bad(format!("optimizer tensor {key} missing")))?;
                    if t.shape() != slot.shape() {
                        return Err(bad(format!("optimizer tensor {key} has the wrong shape")));
                    }
                    *slot = t;
                }
            }
        }
        if let Some(k) = tensors.keys().next() {
            return Err(bad(format!("unexpected training tensor {k}")));
        }
        Ok(Self {
            config: meta.config,
            step: meta.step,
            generator: ck.generator,
            critic,
            opt_g,
            opt_d,
            totals: meta.totals,
        })
    }
}

/// Noise for one step: `critic_steps` draws for the critic updates, then
/// the pair `z_i`, `z_j` for the generator update, each `[B, noise]`.
pub fn step_noise(seed: u64, step: u64, batch: usize, dim: usize, critic_steps: usize) -> Vec<Tensor> {
    let mut rng = stream(seed, Purpose::Noise, step);
    (0..critic_steps + 2)
        .map(|_| Tensor::from_fn(&[batch, dim], |_| StandardNormal.sample(&mut rng)))
        .collect()
}

fn d_values(w: &Weights, candidate: &Var, mp3: &Var) -> Result<Var> {
    Ok(critic_value(&critic_forward(w, candidate, mp3)?))
}

fn gradients(loss: &Var, w: &Weights) -> Result<BTreeMap<String, Tensor>> {
    if !loss.item().is_finite() {
        return Err(Error::NonFinite(format!("loss value {}", loss.item())));
    }
    let names: Vec<&String> = w.vars().keys().collect();
    let vars: Vec<&Var> = w.vars().values().collect();
    let grads = grad_tensors(loss, &vars);
    Ok(names.into_iter().cloned().zip(grads).collect())
}

/// One training step on `batch`: `critic_steps` critic updates maximising
/// `gamma - gp_coeff * gp - drift`, then one generator update minimising
/// `-mean D(y, G(y, z))` plus, for a stochastic generator, the frequency
/// and rhythm profile losses of the two outputs for `z_i` and `z_j`.
pub fn train_step(state: &mut TrainState, batch: &Batch) -> Result<LossRecord> {
    let started = Instant::now();
    let cfg = state.config.clone();
    let arch = state.generator.arch().clone();
    let shrink = arch.train_shrink();
    let &[b, _, f, t] = batch.y.shape() else {
        return Err(Error::Shape(format!("batch must be B x 2 x F x T, got {:?}", batch.y.shape())));
    };
    if batch.x.shape() != batch.y.shape() || f != arch.freq_bins || t <= shrink {
        return Err(Error::Shape(format!(
            "batch {:?} does not fit the generator ({} bins, more than {shrink} frames)",
            batch.y.shape(),
            arch.freq_bins
        )));
    }
    let out_frames = t - shrink;
    let crop = |x: &Tensor| Var::constant(x.narrow(3, shrink / 2, out_frames));
    let y_full = Var::constant(batch.y.clone());
    let y_c = crop(&batch.y);
    let x_c = crop(&batch.x);
    let noise = step_noise(cfg.seed, state.step, b, arch.noise_dim, cfg.critic_steps);
    let z_of = |k: usize| cfg.stochastic.then(|| Var::constant(noise[k].clone()));

    let (mut gamma, mut gp_value, mut drift_value) = (0.0, 0.0, 0.0);
    for c in 0..cfg.critic_steps {
        let gw = state.generator.weights(false);
        let fake = no_grad(|| generator_forward(&gw, &y_full, z_of(c).as_ref(), TimeMode::Train))?;
        let fake = fake.value().clone();
        let dw = state.critic.weights(true);
        let d_real = d_values(&dw, &x_c, &y_c)?;
        let d_fake = d_values(&dw, &Var::constant(fake.clone()), &y_c)?;
        let g = wasserstein_loss(&d_real, &d_fake);
        let eps = interpolation_weights(b, cfg.seed, state.step * cfg.critic_steps as u64 + c as u64);
        let gp = gradient_penalty(|x| d_values(&dw, x, &y_c), x_c.value(), &fake, &eps)?;
        let drift = drift_penalty(&d_real, cfg.drift_coeff);
        let loss = g.scale(-1.0) + gp.scale(cfg.gp_coeff) + &drift;
        let grads = gradients(&loss, &dw)?;
        state.opt_d.step(&mut state.critic, &grads)?;
        gamma = g.item();
        gp_value = gp.item();
        drift_value = drift.item();
    }

    let gw = state.generator.weights(true);
    let dw = state.critic.weights(false);
    let (loss, l_freq, l_rhyt) = if cfg.stochastic {
        let k = cfg.critic_steps;
        let (zi, zj) = (&noise[k], &noise[k + 1]);
        let oi = generator_forward(&gw, &y_full, Some(&Var::constant(zi.clone())), TimeMode::Train)?;
        let oj = generator_forward(&gw, &y_full, Some(&Var::constant(zj.clone())), TimeMode::Train)?;
        let adv = (d_values(&dw, &oi, &y_c)?.mean() + d_values(&dw, &oj, &y_c)?.mean()).scale(-0.5);
        let lf = profile_loss(&oi, &oj, zi, zj, ProfileAxis::Freq, cfg.theta, cfg.p_freq)?;
        let lr = profile_loss(&oi, &oj, zi, zj, ProfileAxis::Rhyt, cfg.theta, cfg.p_rhyt)?;
        let (vf, vr) = (lf.item(), lr.item());
        (adv + lf + lr, vf, vr)
    } else {
        let o = generator_forward(&gw, &y_full, None, TimeMode::Train)?;
        (d_values(&dw, &o, &y_c)?.mean().scale(-1.0), 0.0, 0.0)
    };
    let grads = gradients(&loss, &gw)?;
    state.opt_g.step(&mut state.generator, &grads)?;

    for (what, v) in [("gamma", gamma), ("gradient penalty", gp_value), ("drift", drift_value)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{what} is {v}")));
        }
    }
    let record = LossRecord {
        step: state.step,
        gamma,
        gp: gp_value,
        drift: drift_value,
        l_freq,
        l_rhyt,
        wall_ms: started.elapsed().as_millis() as u64,
    };
    state.step += 1;
    state.totals.add(&record);
    Ok(record)
}
