//! Central finite differences for validating analytic gradients.

use crate::tensor::Tensor;

/// Central difference of `f` along coordinate `index` of `x`.
pub fn central_difference(f: impl Fn(&Tensor) -> f64, x: &Tensor, index: usize, h: f64) -> f64 {
    let mut plus = x.clone();
    plus.data_mut()[index] += h;
    let mut minus = x.clone();
    minus.data_mut()[index] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Relative error with an absolute floor so that near-zero gradients are not
/// judged by noise.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}
