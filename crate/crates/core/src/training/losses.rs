//! Adversarial objectives and regularizers.

use mp3gan_autodiff::{grad, Tensor, Var};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Floor of the profile-loss denominator.
pub const PROFILE_FLOOR: f64 = 1e-8;
/// Added under the root of the power so that its gradient is finite at 0.
pub const ROOT_POWER_EPS: f64 = 1e-12;
/// Added under the root of the squared gradient norm.
pub const GP_NORM_EPS: f64 = 1e-12;

/// `mean(d_real - d_fake)` over the batch.
pub fn wasserstein_loss(d_real: &Var, d_fake: &Var) -> Var {
    (d_real - d_fake).mean()
}

/// `coeff * mean(d_real^2)`.
pub fn drift_penalty(d_real: &Var, coeff: f64) -> Var {
    d_real.square().mean().scale(coeff)
}

/// Interpolation weights `eps ~ U(0, 1)`, one per instance.
pub fn interpolation_weights(batch: usize, seed: u64, counter: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Penalty, counter);
    (0..batch).map(|_| rng.random::<f64>()).collect()
}

/// `mean_i (||grad D(x~_i)|| - 1)^2` at `x~ = eps x_real + (1 - eps) x_fake`.
///
/// `critic` maps a `[B, ...]` input to one value per instance. The result
/// stays differentiable with respect to the critic's parameters.
pub fn gradient_penalty(
    critic: impl Fn(&Var) -> Result<Var>,
    x_real: &Tensor,
    x_fake: &Tensor,
    eps: &[f64],
) -> Result<Var> {
    if x_real.shape() != x_fake.shape() {
        return Err(Error::Shape(format!(
            "real {:?} and fake {:?} batches differ",
            x_real.shape(),
            x_fake.shape()
        )));
    }
    let b = x_real.shape()[0];
    if eps.len() != b {
        return Err(Error::Shape(format!("{} interpolation weights for {b} instances", eps.len())));
    }
    let per_item = x_real.numel() / b.max(1);
    let mut mixed = Vec::with_capacity(x_real.numel());
    for (i, chunk) in x_real.data().chunks(per_item).zip(x_fake.data().chunks(per_item)).enumerate() {
        let e = eps[i];
        mixed.extend(chunk.0.iter().zip(chunk.1).map(|(r, f)| e * r + (1.0 - e) * f));
    }
    let x = Var::leaf(Tensor::new(x_real.shape(), mixed));
    let d = critic(&x)?;
    if d.shape() != [b] {
        return Err(Error::Shape(format!("critic returned {:?}, expected [{b}]", d.shape())));
    }
    let g = grad(&d.sum(), &[&x], true).remove(0);
    if !g.value().is_finite() {
        return Err(Error::NonFinite("critic gradient at the interpolated inputs".into()));
    }
    let norm = g.square().sum_per_item().add_scalar(GP_NORM_EPS).sqrt();
    Ok(norm.add_scalar(-1.0).square().mean())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileAxis {
    /// Sum over time: one value per frequency bin.
    Freq,
    /// Sum over frequency: one value per frame.
    Rhyt,
}

/// Magnitude `|h|` of signed-sqrt outputs `[B, 2, F, T]`, as `[B, 1, F, T]`.
pub fn root_power(out: &Var) -> Var {
    let p = out.narrow(1, 0, 1);
    let q = out.narrow(1, 1, 1);
    (p.square().square() + q.square().square())
        .add_scalar(ROOT_POWER_EPS)
        .sqrt()
}

/// `[B, F]` frequency or `[B, T]` rhythm profile of signed-sqrt outputs.
pub fn profile(out: &Var, axis: ProfileAxis) -> Var {
    let r = root_power(out);
    let &[b, _, f, t] = r.shape() else { panic!("rank 4 expected") };
    match axis {
        ProfileAxis::Freq => r.sum_to(&[b, 1, f, 1]).reshape(&[b, f]),
        ProfileAxis::Rhyt => r.sum_to(&[b, 1, 1, t]).reshape(&[b, t]),
    }
}

/// `theta ||z_i - z_j|| / max(sum |profile_i - profile_j|^p, floor)` per
/// instance, averaged over the batch. `z_i`, `z_j` are `[B, noise]`.
pub fn profile_loss(
    out_i: &Var,
    out_j: &Var,
    z_i: &Tensor,
    z_j: &Tensor,
    axis: ProfileAxis,
    theta: f64,
    p: f64,
) -> Result<Var> {
    if out_i.shape() != out_j.shape() || out_i.shape().len() != 4 || out_i.shape()[1] != 2 {
        return Err(Error::Shape(format!(
            "profile loss needs two B x 2 x F x T outputs, got {:?} and {:?}",
            out_i.shape(),
            out_j.shape()
        )));
    }
    let b = out_i.shape()[0];
    if z_i.shape() != z_j.shape() || z_i.shape().first() != Some(&b) {
        return Err(Error::Shape(format!(
            "noise shapes {:?} and {:?} do not match {b} outputs",
            z_i.shape(),
            z_j.shape()
        )));
    }
    let dz = z_i.zip_map(z_j, |a, c| a - c);
    let nd = dz.numel() / b;
    let znorm: Vec<f64> = dz
        .data()
        .chunks(nd)
        .map(|c| theta * c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let numer = Var::constant(Tensor::new(&[b], znorm));
    let diff = profile(out_i, axis) - profile(out_j, axis);
    let denom = diff.abs().powf(p).sum_per_item().max_scalar(PROFILE_FLOOR);
    Ok((numer / denom).mean())
}
