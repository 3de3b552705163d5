use std::fmt;
use std::sync::Arc;

/// Dense row-major `f64` tensor with copy-on-write storage.
///
/// Cloning is cheap: the buffer is shared until one of the clones is
/// mutated through [`Tensor::data_mut`].
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.numel() <= 16 {
            write!(f, " {:?}", self.data.as_slice())?;
        }
        Ok(())
    }
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for `shape`.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Shape that both `a` and `b` broadcast to, if they are compatible.
///
/// Only same-rank broadcasting is supported: each dimension must either
/// match or be 1 on one side.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    if a.len() != b.len() {
        return None;
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Some(x),
            (1, _) => Some(y),
            (_, 1) => Some(x),
            _ => None,
        })
        .collect()
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            numel_of(shape),
            data.len(),
            "shape {shape:?} does not match {} elements",
            data.len()
        );
        Self {
            shape: shape.to_vec(),
            data: Arc::new(data),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::new(shape, vec![value; numel_of(shape)])
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(&[], vec![value])
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        Self::new(shape, (0..numel_of(shape)).map(&mut f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<f64> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.rank());
        index
            .iter()
            .zip(&self.shape)
            .zip(strides_of(&self.shape))
            .map(|((&i, &n), s)| {
                assert!(i < n, "index {index:?} out of bounds for {:?}", self.shape);
                i * s
            })
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::new(&self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape, "elementwise shape mismatch");
        Tensor::new(
            &self.shape,
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Same buffer, new shape.
    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        assert_eq!(
            numel_of(shape),
            self.numel(),
            "cannot reshape {:?} to {shape:?}",
            self.shape
        );
        Tensor {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        }
    }

    pub fn permute(&self, perm: &[usize]) -> Tensor {
        assert_eq!(perm.len(), self.rank(), "permutation rank mismatch");
        let in_strides = strides_of(&self.shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let mut out = Vec::with_capacity(self.numel());
        let rank = out_shape.len();
        if rank == 0 {
            return self.clone();
        }
        let mut idx = vec![0usize; rank];
        let mut src = 0usize;
        for _ in 0..self.numel() {
            out.push(self.data[src]);
            for d in (0..rank).rev() {
                idx[d] += 1;
                src += src_strides[d];
                if idx[d] < out_shape[d] {
                    break;
                }
                src -= src_strides[d] * out_shape[d];
                idx[d] = 0;
            }
        }
        Tensor::new(&out_shape, out)
    }

    /// Split shape around `axis` into (outer, len, inner) extents.
    fn axis_split(&self, axis: usize) -> (usize, usize, usize) {
        assert!(axis < self.rank(), "axis {axis} out of range for {:?}", self.shape);
        let outer = numel_of(&self.shape[..axis]);
        let inner = numel_of(&self.shape[axis + 1..]);
        (outer, self.shape[axis], inner)
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Tensor {
        let (outer, n, inner) = self.axis_split(axis);
        assert!(start + len <= n, "narrow {start}+{len} exceeds {n}");
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            out.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Tensor::new(&shape, out)
    }

    /// Zero padding along one axis.
    pub fn pad(&self, axis: usize, before: usize, after: usize) -> Tensor {
        let (outer, n, inner) = self.axis_split(axis);
        let m = n + before + after;
        let mut out = vec![0.0; outer * m * inner];
        for o in 0..outer {
            let dst = (o * m + before) * inner;
            let src = o * n * inner;
            out[dst..dst + n * inner].copy_from_slice(&self.data[src..src + n * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = m;
        Tensor::new(&shape, out)
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Tensor {
        assert!(!parts.is_empty(), "concat of nothing");
        let first = parts[0];
        for p in parts {
            assert_eq!(p.rank(), first.rank(), "concat rank mismatch");
            for d in 0..first.rank() {
                assert!(
                    d == axis || p.shape[d] == first.shape[d],
                    "concat shape mismatch {:?} vs {:?}",
                    p.shape,
                    first.shape
                );
            }
        }
        let outer = numel_of(&first.shape[..axis]);
        let inner = numel_of(&first.shape[axis + 1..]);
        let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let len = p.shape[axis] * inner;
                out.extend_from_slice(&p.data[o * len..(o + 1) * len]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total;
        Tensor::new(&shape, out)
    }

    /// Broadcast size-1 dimensions up to `shape` (same rank).
    pub fn expand_to(&self, shape: &[usize]) -> Tensor {
        if self.shape == shape {
            return self.clone();
        }
        assert_eq!(
            broadcast_shape(&self.shape, shape).as_deref(),
            Some(shape),
            "cannot expand {:?} to {shape:?}",
            self.shape
        );
        let src_strides: Vec<usize> = strides_of(&self.shape)
            .into_iter()
            .zip(&self.shape)
            .map(|(s, &n)| if n == 1 { 0 } else { s })
            .collect();
        let total = numel_of(shape);
        let mut out = Vec::with_capacity(total);
        let rank = shape.len();
        let mut idx = vec![0usize; rank];
        let mut src = 0usize;
        for _ in 0..total {
            out.push(self.data[src]);
            for d in (0..rank).rev() {
                idx[d] += 1;
                src += src_strides[d];
                if idx[d] < shape[d] {
                    break;
                }
                src -= src_strides[d] * shape[d];
                idx[d] = 0;
            }
        }
        Tensor::new(shape, out)
    }

    /// Sum over the dimensions where `shape` has extent 1 (same rank).
    pub fn sum_to(&self, shape: &[usize]) -> Tensor {
        if self.shape == shape {
            return self.clone();
        }
        assert_eq!(
            broadcast_shape(shape, &self.shape).as_deref(),
            Some(self.shape.as_slice()),
            "cannot reduce {:?} to {shape:?}",
            self.shape
        );
        let dst_strides: Vec<usize> = strides_of(shape)
            .into_iter()
            .zip(shape)
            .map(|(s, &n)| if n == 1 { 0 } else { s })
            .collect();
        let mut out = vec![0.0; numel_of(shape)];
        let rank = shape.len();
        let mut idx = vec![0usize; rank];
        let mut dst = 0usize;
        for &v in self.data.iter() {
            out[dst] += v;
            for d in (0..rank).rev() {
                idx[d] += 1;
                dst += dst_strides[d];
                if idx[d] < self.shape[d] {
                    break;
                }
                dst -= dst_strides[d] * self.shape[d];
                idx[d] = 0;
            }
        }
        Tensor::new(shape, out)
    }
}
