//! Stride-1 dilated, padded, grouped 2-D convolution.
//!
//! The forward pass, its input gradient (a transposed convolution) and its
//! weight gradient are the three partial derivatives of the trilinear form
//! `<G, conv(X, W)>`. Each one's derivative is expressed through the other
//! two, so the set is closed under differentiation to any order.

use crate::tensor::Tensor;
use crate::var::{Backward, Var};

/// Geometry shared by a convolution and its adjoints. Axis order of every
/// operand is `[batch, channel, height, width]`; weights are
/// `[out_channels, in_channels / groups, kh, kw]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub dilation: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
}

impl ConvGeom {
    pub fn new(dilation: (usize, usize), padding: (usize, usize), groups: usize) -> Self {
        assert!(groups >= 1 && dilation.0 >= 1 && dilation.1 >= 1);
        Self {
            dilation,
            padding,
            groups,
        }
    }

    /// Output extent of a forward convolution along one axis, if positive.
    pub fn out_len(input: usize, kernel: usize, dilation: usize, padding: usize) -> Option<usize> {
        let span = dilation * (kernel - 1);
        (input + 2 * padding).checked_sub(span).filter(|&n| n > 0)
    }

    /// Input extent whose forward convolution yields `output`.
    pub fn in_len(output: usize, kernel: usize, dilation: usize, padding: usize) -> Option<usize> {
        (output + dilation * (kernel - 1))
            .checked_sub(2 * padding)
            .filter(|&n| n > 0)
    }
}

/// Cap on the number of `f64` entries in one unfolded column buffer.
const COLUMN_BUDGET: usize = 1 << 22;

struct Dims {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    g: usize,
    cin_g: usize,
    cout_g: usize,
}

impl Dims {
    fn resolve(x: &[usize], w: &[usize], y: &[usize], geom: &ConvGeom) -> Dims {
        assert_eq!(x.len(), 4, "conv input must be rank 4, got {x:?}");
        assert_eq!(w.len(), 4, "conv weight must be rank 4, got {w:?}");
        let g = geom.groups;
        let d = Dims {
            n: x[0],
            cin: x[1],
            h: x[2],
            w: x[3],
            cout: w[0],
            kh: w[2],
            kw: w[3],
            ho: y[2],
            wo: y[3],
            g,
            cin_g: w[1],
            cout_g: w[0] / g,
        };
        assert_eq!(d.cin, d.cin_g * g, "input channels {x:?} vs weight {w:?} groups {g}");
        assert_eq!(d.cout % g, 0, "output channels {} not divisible by {g}", d.cout);
        assert_eq!(y, [d.n, d.cout, d.ho, d.wo], "conv output shape");
        assert_eq!(
            Some(d.ho),
            ConvGeom::out_len(d.h, d.kh, geom.dilation.0, geom.padding.0),
            "height mismatch for {x:?} -> {y:?}"
        );
        assert_eq!(
            Some(d.wo),
            ConvGeom::out_len(d.w, d.kw, geom.dilation.1, geom.padding.1),
            "width mismatch for {x:?} -> {y:?}"
        );
        d
    }

    fn k_cols(&self) -> usize {
        self.cin_g * self.kh * self.kw
    }

    fn rows_per_chunk(&self) -> usize {
        (COLUMN_BUDGET / (self.k_cols() * self.wo).max(1)).clamp(1, self.ho)
    }
}

/// Range of output columns `ow` whose input column `ow + off` lies in `[0, w)`.
fn valid_range(wo: usize, w: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = ((w as isize - off).max(0) as usize).min(wo);
    (lo.min(hi), hi)
}

/// Unfold input rows `[oh0, oh1)` of one (batch, group) slice.
fn im2col(xg: &[f64], d: &Dims, geom: &ConvGeom, oh0: usize, oh1: usize, cols: &mut [f64]) {
    let ncols = (oh1 - oh0) * d.wo;
    let (dh, dw) = geom.dilation;
    let (ph, pw) = (geom.padding.0 as isize, geom.padding.1 as isize);
    for c in 0..d.cin_g {
        let xc = &xg[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let r = (c * d.kh + ki) * d.kw + kj;
                let row = &mut cols[r * ncols..(r + 1) * ncols];
                let off_w = (kj * dw) as isize - pw;
                let (lo, hi) = valid_range(d.wo, d.w, off_w);
                for oh in oh0..oh1 {
                    let seg = &mut row[(oh - oh0) * d.wo..(oh - oh0 + 1) * d.wo];
                    let ih = oh as isize + (ki * dh) as isize - ph;
                    if ih < 0 || ih >= d.h as isize || lo >= hi {
                        seg.fill(0.0);
                        continue;
                    }
                    let src = &xc[ih as usize * d.w..(ih as usize + 1) * d.w];
                    seg[..lo].fill(0.0);
                    let s0 = (lo as isize + off_w) as usize;
                    seg[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                    seg[hi..].fill(0.0);
                }
            }
        }
    }
}

/// Scatter-add the adjoint of [`im2col`].
fn col2im(cols: &[f64], d: &Dims, geom: &ConvGeom, oh0: usize, oh1: usize, xg: &mut [f64]) {
    let ncols = (oh1 - oh0) * d.wo;
    let (dh, dw) = geom.dilation;
    let (ph, pw) = (geom.padding.0 as isize, geom.padding.1 as isize);
    for c in 0..d.cin_g {
        let xc = &mut xg[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let r = (c * d.kh + ki) * d.kw + kj;
                let row = &cols[r * ncols..(r + 1) * ncols];
                let off_w = (kj * dw) as isize - pw;
                let (lo, hi) = valid_range(d.wo, d.w, off_w);
                if lo >= hi {
                    continue;
                }
                for oh in oh0..oh1 {
                    let ih = oh as isize + (ki * dh) as isize - ph;
                    if ih < 0 || ih >= d.h as isize {
                        continue;
                    }
                    let seg = &row[(oh - oh0) * d.wo..(oh - oh0 + 1) * d.wo];
                    let s0 = (lo as isize + off_w) as usize;
                    let dst = &mut xc[ih as usize * d.w + s0..ih as usize * d.w + s0 + (hi - lo)];
                    for (o, v) in dst.iter_mut().zip(&seg[lo..hi]) {
                        *o += v;
                    }
                }
            }
        }
    }
}

/// `C[m x n] = alpha * A[m x k] * B[k x n] + beta * C` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        debug_assert!((m - 1) * rsa + (k - 1) * csa < a.len());
        debug_assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    }
    debug_assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the debug assertions above spell out the extents each pointer
    // is read or written at; callers derive strides from the slices' shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn output_shape(x: &[usize], w: &[usize], geom: &ConvGeom) -> Vec<usize> {
    let ho = ConvGeom::out_len(x[2], w[2], geom.dilation.0, geom.padding.0)
        .unwrap_or_else(|| panic!("kernel {w:?} does not fit input {x:?} with {geom:?}"));
    let wo = ConvGeom::out_len(x[3], w[3], geom.dilation.1, geom.padding.1)
        .unwrap_or_else(|| panic!("kernel {w:?} does not fit input {x:?} with {geom:?}"));
    vec![x[0], w[0], ho, wo]
}

/// Forward convolution (cross-correlation).
pub fn conv2d_forward(x: &Tensor, w: &Tensor, geom: &ConvGeom) -> Tensor {
    let yshape = output_shape(x.shape(), w.shape(), geom);
    let d = Dims::resolve(x.shape(), w.shape(), &yshape, geom);
    let mut y = vec![0.0; yshape.iter().product()];
    let kc = d.k_cols();
    let rows = d.rows_per_chunk();
    let mut cols = vec![0.0; kc * rows * d.wo];
    let (xd, wd) = (x.data(), w.data());
    let plane_in = d.h * d.w;
    let plane_out = d.ho * d.wo;
    for n in 0..d.n {
        for gi in 0..d.g {
            let xg = &xd[(n * d.cin + gi * d.cin_g) * plane_in..][..d.cin_g * plane_in];
            let wg = &wd[gi * d.cout_g * kc..][..d.cout_g * kc];
            let ybase = (n * d.cout + gi * d.cout_g) * plane_out;
            let mut oh0 = 0;
            while oh0 < d.ho {
                let oh1 = (oh0 + rows).min(d.ho);
                let ncols = (oh1 - oh0) * d.wo;
                im2col(xg, &d, geom, oh0, oh1, &mut cols);
                let yslice = &mut y[ybase + oh0 * d.wo..];
                gemm(
                    d.cout_g,
                    kc,
                    ncols,
                    wg,
                    (kc, 1),
                    &cols,
                    (ncols, 1),
                    0.0,
                    yslice,
                    (plane_out, 1),
                );
                oh0 = oh1;
            }
        }
    }
    Tensor::new(&yshape, y)
}

/// Gradient of `<g, conv(x, w)>` with respect to `x`; equivalently the
/// transposed convolution of `g` by `w`.
pub fn conv2d_input_grad(g: &Tensor, w: &Tensor, geom: &ConvGeom, x_shape: &[usize]) -> Tensor {
    let d = Dims::resolve(x_shape, w.shape(), g.shape(), geom);
    let mut x = vec![0.0; x_shape.iter().product()];
    let kc = d.k_cols();
    let rows = d.rows_per_chunk();
    let mut cols = vec![0.0; kc * rows * d.wo];
    let (gd, wd) = (g.data(), w.data());
    let plane_in = d.h * d.w;
    let plane_out = d.ho * d.wo;
    for n in 0..d.n {
        for gi in 0..d.g {
            let wg = &wd[gi * d.cout_g * kc..][..d.cout_g * kc];
            let gbase = (n * d.cout + gi * d.cout_g) * plane_out;
            let xg = &mut x[(n * d.cin + gi * d.cin_g) * plane_in..][..d.cin_g * plane_in];
            let mut oh0 = 0;
            while oh0 < d.ho {
                let oh1 = (oh0 + rows).min(d.ho);
                let ncols = (oh1 - oh0) * d.wo;
                gemm(
                    kc,
                    d.cout_g,
                    ncols,
                    wg,
                    (1, kc),
                    &gd[gbase + oh0 * d.wo..],
                    (plane_out, 1),
                    0.0,
                    &mut cols[..kc * ncols],
                    (ncols, 1),
                );
                col2im(&cols, &d, geom, oh0, oh1, xg);
                oh0 = oh1;
            }
        }
    }
    Tensor::new(x_shape, x)
}

/// Gradient of `<g, conv(x, w)>` with respect to `w`.
pub fn conv2d_weight_grad(x: &Tensor, g: &Tensor, geom: &ConvGeom, w_shape: &[usize]) -> Tensor {
    let d = Dims::resolve(x.shape(), w_shape, g.shape(), geom);
    let kc = d.k_cols();
    let mut dw = vec![0.0; w_shape.iter().product()];
    let rows = d.rows_per_chunk();
    let mut cols = vec![0.0; kc * rows * d.wo];
    let (xd, gd) = (x.data(), g.data());
    let plane_in = d.h * d.w;
    let plane_out = d.ho * d.wo;
    for n in 0..d.n {
        for gi in 0..d.g {
            let xg = &xd[(n * d.cin + gi * d.cin_g) * plane_in..][..d.cin_g * plane_in];
            let gbase = (n * d.cout + gi * d.cout_g) * plane_out;
            let dwg = &mut dw[gi * d.cout_g * kc..][..d.cout_g * kc];
            let mut oh0 = 0;
            while oh0 < d.ho {
                let oh1 = (oh0 + rows).min(d.ho);
                let ncols = (oh1 - oh0) * d.wo;
                im2col(xg, &d, geom, oh0, oh1, &mut cols);
                gemm(
                    d.cout_g,
                    ncols,
                    kc,
                    &gd[gbase + oh0 * d.wo..],
                    (plane_out, 1),
                    &cols,
                    (1, ncols),
                    1.0,
                    dwg,
                    (kc, 1),
                );
                oh0 = oh1;
            }
        }
    }
    Tensor::new(w_shape, dw)
}

struct ConvOp(ConvGeom);

impl Backward for ConvOp {
    fn backward(&self, inputs: &[Var], _y: &Var, g: &Var) -> Vec<Option<Var>> {
        let (x, w) = (&inputs[0], &inputs[1]);
        vec![
            x.requires_grad()
                .then(|| conv_input_grad(g, w, self.0, x.shape())),
            w.requires_grad()
                .then(|| conv_weight_grad(x, g, self.0, w.shape())),
        ]
    }
}

struct ConvInputGradOp(ConvGeom);

impl Backward for ConvInputGradOp {
    fn backward(&self, inputs: &[Var], _y: &Var, h: &Var) -> Vec<Option<Var>> {
        let (g, w) = (&inputs[0], &inputs[1]);
        vec![
            g.requires_grad().then(|| h.conv2d(w, self.0)),
            w.requires_grad()
                .then(|| conv_weight_grad(h, g, self.0, w.shape())),
        ]
    }
}

struct ConvWeightGradOp(ConvGeom);

impl Backward for ConvWeightGradOp {
    fn backward(&self, inputs: &[Var], _y: &Var, k: &Var) -> Vec<Option<Var>> {
        let (x, g) = (&inputs[0], &inputs[1]);
        vec![
            x.requires_grad()
                .then(|| conv_input_grad(g, k, self.0, x.shape())),
            g.requires_grad().then(|| x.conv2d(k, self.0)),
        ]
    }
}

fn conv_input_grad(g: &Var, w: &Var, geom: ConvGeom, x_shape: &[usize]) -> Var {
    let value = conv2d_input_grad(g.value(), w.value(), &geom, x_shape);
    Var::from_op(value, ConvInputGradOp(geom), vec![g.clone(), w.clone()])
}

fn conv_weight_grad(x: &Var, g: &Var, geom: ConvGeom, w_shape: &[usize]) -> Var {
    let value = conv2d_weight_grad(x.value(), g.value(), &geom, w_shape);
    Var::from_op(value, ConvWeightGradOp(geom), vec![x.clone(), g.clone()])
}

impl Var {
    /// Convolution of `self` (`[N, Cin, H, W]`) with `weight`
    /// (`[Cout, Cin / groups, kh, kw]`).
    pub fn conv2d(&self, weight: &Var, geom: ConvGeom) -> Var {
        let value = conv2d_forward(self.value(), weight.value(), &geom);
        Var::from_op(value, ConvOp(geom), vec![self.clone(), weight.clone()])
    }

    /// Transposed convolution with `weight` laid out as
    /// `[Cin, Cout / groups, kh, kw]` (the adjoint of [`Var::conv2d`] with the
    /// same weight).
    pub fn conv_transpose2d(&self, weight: &Var, geom: ConvGeom) -> Var {
        let s = self.shape();
        let w = weight.shape();
        let h = ConvGeom::in_len(s[2], w[2], geom.dilation.0, geom.padding.0)
            .unwrap_or_else(|| panic!("transposed conv of {s:?} by {w:?} is empty"));
        let wd = ConvGeom::in_len(s[3], w[3], geom.dilation.1, geom.padding.1)
            .unwrap_or_else(|| panic!("transposed conv of {s:?} by {w:?} is empty"));
        conv_input_grad(self, weight, geom, &[s[0], w[1] * geom.groups, h, wd])
    }
}
