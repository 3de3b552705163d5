//! Differentiable tensor operations.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::tensor::{broadcast_shape, Tensor};
use crate::var::{Backward, Var};

#[derive(Clone, Copy, Debug)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

struct BinaryOp(Binary);

impl Backward for BinaryOp {
    fn backward(&self, inputs: &[Var], _output: &Var, g: &Var) -> Vec<Option<Var>> {
        let (a, b) = (&inputs[0], &inputs[1]);
        match self.0 {
            Binary::Add => vec![Some(g.clone()), Some(g.clone())],
            Binary::Sub => vec![Some(g.clone()), Some(-g)],
            Binary::Mul => vec![
                a.requires_grad().then(|| g * b),
                b.requires_grad().then(|| g * a),
            ],
            Binary::Div => vec![
                a.requires_grad().then(|| g / b),
                b.requires_grad().then(|| -(g * a) / (b * b)),
            ],
        }
    }
}

fn binary(a: &Var, b: &Var, kind: Binary) -> Var {
    if a.shape() != b.shape() {
        let shape = broadcast_shape(a.shape(), b.shape()).unwrap_or_else(|| {
            panic!(
                "{kind:?}: incompatible shapes {:?} and {:?}",
                a.shape(),
                b.shape()
            )
        });
        return binary(&a.expand_to(&shape), &b.expand_to(&shape), kind);
    }
    let f: fn(f64, f64) -> f64 = match kind {
        Binary::Add => |x, y| x + y,
        Binary::Sub => |x, y| x - y,
        Binary::Mul => |x, y| x * y,
        Binary::Div => |x, y| x / y,
    };
    let value = a.value().zip_map(b.value(), f);
    Var::from_op(value, BinaryOp(kind), vec![a.clone(), b.clone()])
}

macro_rules! impl_binary {
    ($trait:ident, $method:ident, $kind:expr) => {
        impl $trait<&Var> for &Var {
            type Output = Var;
            fn $method(self, rhs: &Var) -> Var {
                binary(self, rhs, $kind)
            }
        }
        impl $trait<Var> for Var {
            type Output = Var;
            fn $method(self, rhs: Var) -> Var {
                binary(&self, &rhs, $kind)
            }
        }
        impl $trait<&Var> for Var {
            type Output = Var;
            fn $method(self, rhs: &Var) -> Var {
                binary(&self, rhs, $kind)
            }
        }
        impl $trait<Var> for &Var {
            type Output = Var;
            fn $method(self, rhs: Var) -> Var {
                binary(self, &rhs, $kind)
            }
        }
    };
}

impl_binary!(Add, add, Binary::Add);
impl_binary!(Sub, sub, Binary::Sub);
impl_binary!(Mul, mul, Binary::Mul);
impl_binary!(Div, div, Binary::Div);

#[derive(Clone, Copy, Debug)]
enum Unary {
    Scale(f64),
    AddScalar(f64),
    Sigmoid,
    Sqrt,
    Powf(f64),
    Square,
    Abs,
    Exp,
    Ln,
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Scale(c) => c * x,
            Unary::AddScalar(c) => x + c,
            Unary::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Unary::Sqrt => x.sqrt(),
            Unary::Powf(p) => x.powf(p),
            Unary::Square => x * x,
            Unary::Abs => x.abs(),
            Unary::Exp => x.exp(),
            Unary::Ln => x.ln(),
        }
    }
}

struct UnaryOp(Unary);

impl Backward for UnaryOp {
    fn backward(&self, inputs: &[Var], y: &Var, g: &Var) -> Vec<Option<Var>> {
        let x = &inputs[0];
        let dx = match self.0 {
            Unary::Scale(c) => g.scale(c),
            Unary::AddScalar(_) => g.clone(),
            Unary::Sigmoid => g * (y * (-y).add_scalar(1.0)),
            Unary::Sqrt => (g / y).scale(0.5),
            Unary::Powf(p) => g * x.powf(p - 1.0).scale(p),
            Unary::Square => g * x.scale(2.0),
            Unary::Abs => g * Var::constant(x.value().map(f64::signum)),
            Unary::Exp => g * y,
            Unary::Ln => g / x,
        };
        vec![Some(dx)]
    }
}

fn unary(x: &Var, kind: Unary) -> Var {
    Var::from_op(x.value().map(|v| kind.apply(v)), UnaryOp(kind), vec![x.clone()])
}

impl Neg for &Var {
    type Output = Var;
    fn neg(self) -> Var {
        unary(self, Unary::Scale(-1.0))
    }
}

impl Neg for Var {
    type Output = Var;
    fn neg(self) -> Var {
        unary(&self, Unary::Scale(-1.0))
    }
}

/// Parametric ReLU with one slope per channel (axis 1).
struct PreluOp;

impl Backward for PreluOp {
    fn backward(&self, inputs: &[Var], _y: &Var, g: &Var) -> Vec<Option<Var>> {
        let (x, slope) = (&inputs[0], &inputs[1]);
        let pos = Var::constant(x.value().map(|v| if v > 0.0 { 1.0 } else { 0.0 }));
        let neg = Var::constant(pos.value().map(|v| 1.0 - v));
        let bshape = channel_broadcast_shape(x.shape());
        let slope_b = slope.reshape(&bshape);
        let dx = x
            .requires_grad()
            .then(|| g * &pos + (g * &neg) * &slope_b);
        let dslope = slope.requires_grad().then(|| {
            (g * x * &neg)
                .sum_to(&bshape)
                .reshape(slope.shape())
        });
        vec![dx, dslope]
    }
}

fn channel_broadcast_shape(shape: &[usize]) -> Vec<usize> {
    assert!(shape.len() >= 2, "channel ops need rank >= 2, got {shape:?}");
    let mut b = vec![1; shape.len()];
    b[1] = shape[1];
    b
}

struct ReshapeOp;

impl Backward for ReshapeOp {
    fn backward(&self, inputs: &[Var], _y: &Var, g: &Var) -> Vec<Option<Var>> {
        vec![Some(g.reshape(inputs[0].shape()))]
    }
}

struct PermuteOp(Vec<usize>);

impl Backward for PermuteOp {
    fn backward(&self, _inputs: &[Var], _y: &Var, g: &Var) -> Vec<Option<Var>> {
        let mut inverse = vec![0; self.0.len()];
        for (i, &p) in self.0.iter().enumerate() {
            inverse[p] = i;
        }
        vec![Some(g.permute(&inverse))]
    }
}

struct NarrowOp {
    axis: usize,
    start: usize,
}

impl Backward for NarrowOp {
    fn backward(&self, inputs: &[Var], y: &Var, g: &Var) -> Vec<Option<Var>> {
        let n = inputs[0].shape()[self.axis];
        let len = y.shape()[self.axis];
        vec![Some(g.pad(self.axis, self.start, n - self.start - len))]
    }
}

struct PadOp {
    axis: usize,
    before: usize,
}

impl Backward for PadOp {
    fn backward(&self, inputs: &[Var], _y: &Var, g: &Var) -> Vec<Option<Var>> {
        vec![Some(g.narrow(self.axis, self.before, inputs[0].shape()[self.axis]))]
    }
}

struct ConcatOp(usize);

impl Backward for ConcatOp {
    fn backward(&self, inputs: &[Var], _y: &Var, g: &Var) -> Vec<Option<Var>> {
        let mut start = 0;
        inputs
            .iter()
            .map(|input| {
                let len = input.shape()[self.0];
                let part = input.requires_grad().then(|| g.narrow(self.0, start, len));
                start += len;
                part
            })
            .collect()
    }
}

struct SumToOp;

impl Backward for SumToOp {
    fn backward(&self, inputs: &[Var], _y: &Var, g: &Var) -> Vec<Option<Var>> {
        vec![Some(g.expand_to(inputs[0].shape()))]
    }
}

struct ExpandOp;

impl Backward for ExpandOp {
    fn backward(&self, inputs: &[Var], _y: &Var, g: &Var) -> Vec<Option<Var>> {
        vec![Some(g.sum_to(inputs[0].shape()))]
    }
}

impl Var {
    pub fn scale(&self, c: f64) -> Var {
        unary(self, Unary::Scale(c))
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        unary(self, Unary::AddScalar(c))
    }

    pub fn sigmoid(&self) -> Var {
        unary(self, Unary::Sigmoid)
    }

    pub fn sqrt(&self) -> Var {
        unary(self, Unary::Sqrt)
    }

    pub fn powf(&self, p: f64) -> Var {
        unary(self, Unary::Powf(p))
    }

    pub fn square(&self) -> Var {
        unary(self, Unary::Square)
    }

    pub fn abs(&self) -> Var {
        unary(self, Unary::Abs)
    }

    pub fn exp(&self) -> Var {
        unary(self, Unary::Exp)
    }

    pub fn ln(&self) -> Var {
        unary(self, Unary::Ln)
    }

    /// Elementwise `max(x, floor)` with the gradient routed to `x` only
    /// where it exceeds the floor.
    pub fn max_scalar(&self, floor: f64) -> Var {
        let mask = Var::constant(self.value().map(|v| if v > floor { 1.0 } else { 0.0 }));
        let rest = Var::constant(mask.value().map(|m| (1.0 - m) * floor));
        self * &mask + rest
    }

    /// `x` where `x > 0`, `slope[c] * x` otherwise, channel on axis 1.
    pub fn prelu(&self, slope: &Var) -> Var {
        let shape = self.shape();
        assert_eq!(
            slope.shape(),
            &[shape[1]],
            "prelu slope shape {:?} for input {shape:?}",
            slope.shape()
        );
        let inner: usize = shape[2..].iter().product();
        let a = slope.value().data();
        let mut out = self.value().clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            if *v <= 0.0 {
                *v *= a[(i / inner) % shape[1]];
            }
        }
        Var::from_op(out, PreluOp, vec![self.clone(), slope.clone()])
    }

    /// Adds a per-channel bias (axis 1).
    pub fn add_channel(&self, bias: &Var) -> Var {
        self + &bias.reshape(&channel_broadcast_shape(self.shape()))
    }

    pub fn reshape(&self, shape: &[usize]) -> Var {
        if self.shape() == shape {
            return self.clone();
        }
        Var::from_op(self.value().reshape(shape), ReshapeOp, vec![self.clone()])
    }

    pub fn permute(&self, perm: &[usize]) -> Var {
        Var::from_op(
            self.value().permute(perm),
            PermuteOp(perm.to_vec()),
            vec![self.clone()],
        )
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Var {
        if start == 0 && len == self.shape()[axis] {
            return self.clone();
        }
        Var::from_op(
            self.value().narrow(axis, start, len),
            NarrowOp { axis, start },
            vec![self.clone()],
        )
    }

    pub fn pad(&self, axis: usize, before: usize, after: usize) -> Var {
        if before == 0 && after == 0 {
            return self.clone();
        }
        Var::from_op(
            self.value().pad(axis, before, after),
            PadOp { axis, before },
            vec![self.clone()],
        )
    }

    pub fn concat(parts: &[Var], axis: usize) -> Var {
        if parts.len() == 1 {
            return parts[0].clone();
        }
        let values: Vec<&Tensor> = parts.iter().map(Var::value).collect();
        Var::from_op(Tensor::concat(&values, axis), ConcatOp(axis), parts.to_vec())
    }

    pub fn sum_to(&self, shape: &[usize]) -> Var {
        if self.shape() == shape {
            return self.clone();
        }
        Var::from_op(self.value().sum_to(shape), SumToOp, vec![self.clone()])
    }

    pub fn expand_to(&self, shape: &[usize]) -> Var {
        if self.shape() == shape {
            return self.clone();
        }
        Var::from_op(self.value().expand_to(shape), ExpandOp, vec![self.clone()])
    }

    /// Sum of all elements as a rank-0 value.
    pub fn sum(&self) -> Var {
        let ones = vec![1; self.shape().len()];
        self.sum_to(&ones).reshape(&[])
    }

    pub fn mean(&self) -> Var {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum over every axis except the leading (batch) axis; result `[N]`.
    pub fn sum_per_item(&self) -> Var {
        let mut shape = vec![1; self.shape().len()];
        shape[0] = self.shape()[0];
        self.sum_to(&shape).reshape(&[self.shape()[0]])
    }
}
