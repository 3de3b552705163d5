//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Operations are recorded on a per-thread tape as they execute. Backward
//! rules are themselves written with recorded operations, so gradients can
//! be differentiated again; that is what a Wasserstein critic's gradient
//! penalty needs.
//!
//! ```
//! use mp3gan_autodiff::{grad, Tensor, Var};
//!
//! let x = Var::leaf(Tensor::scalar(3.0));
//! let y = &x * &x * &x;
//! let dy = grad(&y, &[&x], true).remove(0);
//! assert_eq!(dy.item(), 27.0);
//! let d2y = grad(&dy, &[&x], false).remove(0);
//! assert_eq!(d2y.item(), 18.0);
//! ```

mod conv;
mod ops;
mod tensor;
mod var;

pub mod check;

pub use conv::{conv2d_forward, conv2d_input_grad, conv2d_weight_grad, ConvGeom};
pub use tensor::{broadcast_shape, strides_of, Tensor};
pub use var::{grad, grad_enabled, grad_tensors, no_grad, Var};
