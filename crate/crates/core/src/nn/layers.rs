//! Layer primitives. Each batch-level function validates shapes and loops
//! over items; the per-item kernels are shared with the fused model path.

use rand::Rng as _;

use super::conv::adjoint_weights;
use super::tensor::{debug_assert_finite, Tensor4};
use super::Scalar;
use crate::error::{ensure, Result};
use crate::rng::Rng;

/// Reusable per-thread buffers.
#[derive(Debug, Default)]
pub(crate) struct Workspace<T> {
    scratch: Vec<T>,
    /// Gradient buffers reused across items by the model's backward pass.
    pub(crate) grad_conv: Vec<T>,
    pub(crate) grad_in: Vec<T>,
}

/// Sum with sixteen independent accumulators, which lets the compiler keep
/// the loop in vector registers.
pub(crate) fn sum_lanes<T: Scalar>(v: &[T]) -> T {
    let mut acc = [T::zero(); 16];
    let chunks = v.chunks_exact(16);
    let tail = chunks.remainder().iter().fold(T::zero(), |a, &x| a + x);
    for c in chunks {
        for (a, &x) in acc.iter_mut().zip(c) {
            *a = *a + x;
        }
    }
    let mut width = 16;
    while width > 1 {
        width /= 2;
        for i in 0..width {
            acc[i] = acc[i] + acc[i + width];
        }
    }
    acc[0] + tail
}

/// 3×3 convolution, stride 1, zero padding 1. Weights are laid out
/// out_channels × in_channels × 3 × 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub grad_x: Option<Tensor4<T>>,
    pub grad_w: Vec<T>,
    pub grad_b: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            weight: vec![T::zero(); out_channels * in_channels * 9],
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn check(&self, x: &Tensor4<T>) -> Result<()> {
        ensure!(
            x.channels() == self.in_channels,
            Precondition,
            "conv expects {} input channels, got {}",
            self.in_channels,
            x.channels()
        );
        ensure!(
            self.weight.len() == self.out_channels * self.in_channels * 9 && self.bias.len() == self.out_channels,
            Precondition,
            "conv parameter shapes do not match {}→{}",
            self.in_channels,
            self.out_channels
        );
        Ok(())
    }

    pub(crate) fn forward_item(&self, x: &[T], h: usize, w: usize, out: &mut [T], ws: &mut Workspace<T>) {
        let p = h * w;
        for (o, row) in out.chunks_exact_mut(p).enumerate() {
            row.fill(self.bias[o]);
        }
        T::conv3x3(x, self.in_channels, h, w, &self.weight, self.out_channels, out, true, &mut ws.scratch);
    }

    /// Accumulates parameter gradients into `grad_w`/`grad_b` and, when
    /// `grad_x` is given, overwrites it with the input gradient (computed as
    /// the adjoint convolution of `grad_out`).
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_item(
        &self,
        x: &[T],
        h: usize,
        w: usize,
        grad_out: &[T],
        grad_w: &mut [T],
        grad_b: &mut [T],
        grad_x: Option<&mut [T]>,
        ws: &mut Workspace<T>,
    ) {
        let p = h * w;
        T::conv3x3_grad_weight(x, self.in_channels, h, w, grad_out, self.out_channels, grad_w, &mut ws.scratch);
        for (gb, row) in grad_b.iter_mut().zip(grad_out.chunks_exact(p)) {
            *gb = *gb + sum_lanes(row);
        }
        if let Some(gx) = grad_x {
            let adjoint = adjoint_weights(&self.weight, self.in_channels, self.out_channels);
            T::conv3x3(grad_out, self.out_channels, h, w, &adjoint, self.in_channels, gx, false, &mut ws.scratch);
        }
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check(x)?;
        let [b, _, h, w] = x.shape();
        let mut out = Tensor4::zeros([b, self.out_channels, h, w])?;
        let mut ws = Workspace::default();
        for i in 0..b {
            self.forward_item(x.item(i), h, w, out.item_mut(i), &mut ws);
        }
        debug_assert_finite(out.data(), "conv2d");
        Ok(out)
    }

    pub fn backward(&self, x: &Tensor4<T>, grad_out: &Tensor4<T>, want_grad_x: bool) -> Result<ConvGrads<T>> {
        self.check(x)?;
        let [b, _, h, w] = x.shape();
        ensure!(
            grad_out.shape() == [b, self.out_channels, h, w],
            Precondition,
            "conv grad_out shape {:?} does not match output shape {:?}",
            grad_out.shape(),
            [b, self.out_channels, h, w]
        );
        let mut grad_w = vec![T::zero(); self.weight.len()];
        let mut grad_b = vec![T::zero(); self.out_channels];
        let mut grad_x = if want_grad_x { Some(Tensor4::zeros(x.shape())?) } else { None };
        let mut ws = Workspace::default();
        for i in 0..b {
            let gx = grad_x.as_mut().map(|g| g.item_mut(i));
            self.backward_item(x.item(i), h, w, grad_out.item(i), &mut grad_w, &mut grad_b, gx, &mut ws);
        }
        Ok(ConvGrads { grad_x, grad_w, grad_b })
    }
}

pub fn relu_forward<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let data = x.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
    Tensor4::new(x.shape(), data).expect("same shape")
}

/// Gradient through ReLU; the subgradient at 0 is taken as 0.
pub fn relu_backward<T: Scalar>(x: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    ensure!(x.shape() == grad_out.shape(), Precondition, "relu shapes differ");
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor4::new(x.shape(), data)
}

/// 2×2, stride-2 max pool over one C×H×W item (odd trailing rows/columns
/// dropped). With `relu`, the window values are rectified first. `idx`
/// records the winning offset 0..4 in row-major order, first maximum wins.
pub(crate) fn maxpool_item<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, relu: bool, out: &mut [T], idx: &mut [u8]) {
    T::maxpool2x2(x, c, h, w, relu, out, idx);
}

pub(crate) fn generic_maxpool2x2<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, relu: bool, out: &mut [T], idx: &mut [u8]) {
    let (ho, wo) = (h / 2, w / 2);
    let rect = |v: T| if relu && !(v > T::zero()) { T::zero() } else { v };
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for i in 0..ho {
            let r0 = &plane[2 * i * w..];
            let r1 = &plane[(2 * i + 1) * w..];
            let o = ci * ho * wo + i * wo;
            for j in 0..wo {
                let cand = [rect(r0[2 * j]), rect(r0[2 * j + 1]), rect(r1[2 * j]), rect(r1[2 * j + 1])];
                let mut best = 0;
                for q in 1..4 {
                    if cand[q] > cand[best] {
                        best = q;
                    }
                }
                out[o + j] = cand[best];
                idx[o + j] = best as u8;
            }
        }
    }
}

/// Routes pooled gradients back to their argmax positions; `grad_in` is
/// overwritten. With `gate`, positions whose pooled value is not positive
/// receive nothing (the fused ReLU's backward).
pub(crate) fn unpool_item<T: Scalar>(grad: &[T], idx: &[u8], gate: Option<&[T]>, c: usize, h: usize, w: usize, grad_in: &mut [T]) {
    T::unpool2x2(grad, idx, gate, c, h, w, grad_in);
}

pub(crate) fn generic_unpool2x2<T: Scalar>(grad: &[T], idx: &[u8], gate: Option<&[T]>, c: usize, h: usize, w: usize, grad_in: &mut [T]) {
    let (ho, wo) = (h / 2, w / 2);
    grad_in.fill(T::zero());
    for ci in 0..c {
        for i in 0..ho {
            for j in 0..wo {
                let o = ci * ho * wo + i * wo + j;
                if gate.is_some_and(|g| !(g[o] > T::zero())) {
                    continue;
                }
                let q = idx[o] as usize;
                grad_in[ci * h * w + (2 * i + q / 2) * w + 2 * j + q % 2] = grad[o];
            }
        }
    }
}

/// Argmax bookkeeping from a max-pool forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndex {
    pub input_shape: [usize; 4],
    pub argmax: Vec<u8>,
}

pub fn maxpool2x2_forward<T: Scalar>(x: &Tensor4<T>) -> Result<(Tensor4<T>, PoolIndex)> {
    let [b, c, h, w] = x.shape();
    ensure!(h >= 2 && w >= 2, Precondition, "max pool needs at least 2×2 input, got {h}×{w}");
    let mut out = Tensor4::zeros([b, c, h / 2, w / 2])?;
    let mut argmax = vec![0u8; out.data().len()];
    let n = out.item_len();
    for i in 0..b {
        maxpool_item(x.item(i), c, h, w, false, out.item_mut(i), &mut argmax[i * n..(i + 1) * n]);
    }
    Ok((out, PoolIndex { input_shape: x.shape(), argmax }))
}

pub fn maxpool2x2_backward<T: Scalar>(index: &PoolIndex, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [b, c, h, w] = index.input_shape;
    ensure!(
        grad_out.shape() == [b, c, h / 2, w / 2],
        Precondition,
        "max pool grad shape {:?} does not match pooled shape",
        grad_out.shape()
    );
    let mut grad_in = Tensor4::zeros(index.input_shape)?;
    let n = grad_out.item_len();
    for i in 0..b {
        unpool_item(grad_out.item(i), &index.argmax[i * n..(i + 1) * n], None, c, h, w, grad_in.item_mut(i));
    }
    Ok(grad_in)
}

/// Mean over height × width; output is B × C × 1 × 1.
pub fn global_avg_pool_forward<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let [b, c, h, w] = x.shape();
    let scale = T::of(1.0 / (h * w) as f64);
    let data = x
        .data()
        .chunks_exact(h * w)
        .map(|plane| plane.iter().fold(T::zero(), |a, &v| a + v) * scale)
        .collect();
    Tensor4::new([b, c, 1, 1], data).expect("pooled shape")
}

pub fn global_avg_pool_backward<T: Scalar>(input_shape: [usize; 4], grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [b, c, h, w] = input_shape;
    ensure!(grad_out.shape() == [b, c, 1, 1], Precondition, "GAP grad must be {b}×{c}×1×1");
    let scale = T::of(1.0 / (h * w) as f64);
    let mut data = Vec::with_capacity(b * c * h * w);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g * scale, h * w));
    }
    Tensor4::new(input_shape, data)
}

/// Fully connected layer; weight is out_features × in_features.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads<T> {
    pub grad_x: Tensor4<T>,
    pub grad_w: Vec<T>,
    pub grad_b: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        Linear {
            in_features,
            out_features,
            weight: vec![T::zero(); in_features * out_features],
            bias: vec![T::zero(); out_features],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub(crate) fn forward_item(&self, x: &[T], out: &mut [T]) {
        for (o, y) in out.iter_mut().enumerate() {
            let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
            *y = row.iter().zip(x).fold(self.bias[o], |a, (&wv, &xv)| a + wv * xv);
        }
    }

    /// Accumulates parameter gradients; overwrites `grad_x`.
    pub(crate) fn backward_item(&self, x: &[T], grad_out: &[T], grad_w: &mut [T], grad_b: &mut [T], grad_x: &mut [T]) {
        grad_x.fill(T::zero());
        for (o, &g) in grad_out.iter().enumerate() {
            grad_b[o] = grad_b[o] + g;
            let row = o * self.in_features..(o + 1) * self.in_features;
            for ((gw, &xv), (gx, &wv)) in grad_w[row.clone()].iter_mut().zip(x).zip(grad_x.iter_mut().zip(&self.weight[row])) {
                *gw = *gw + g * xv;
                *gx = *gx + g * wv;
            }
        }
    }

    fn check(&self, x: &Tensor4<T>) -> Result<()> {
        ensure!(
            x.item_len() == self.in_features,
            Precondition,
            "linear expects {} features per item, got {}",
            self.in_features,
            x.item_len()
        );
        Ok(())
    }

    /// Input items are flattened; output is B × out_features × 1 × 1.
    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check(x)?;
        let mut out = Tensor4::zeros([x.batch(), self.out_features, 1, 1])?;
        for i in 0..x.batch() {
            self.forward_item(x.item(i), out.item_mut(i));
        }
        Ok(out)
    }

    pub fn backward(&self, x: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<LinearGrads<T>> {
        self.check(x)?;
        ensure!(
            grad_out.shape() == [x.batch(), self.out_features, 1, 1],
            Precondition,
            "linear grad_out shape {:?} is wrong",
            grad_out.shape()
        );
        let mut grad_x = Tensor4::zeros(x.shape())?;
        let mut grad_w = vec![T::zero(); self.weight.len()];
        let mut grad_b = vec![T::zero(); self.out_features];
        for i in 0..x.batch() {
            self.backward_item(x.item(i), grad_out.item(i), &mut grad_w, &mut grad_b, grad_x.item_mut(i));
        }
        Ok(LinearGrads { grad_x, grad_w, grad_b })
    }
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else 1/(1−rate).
pub(crate) fn dropout_mask<T: Scalar>(n: usize, rate: f64, rng: &mut Rng) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    (0..n).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect()
}

/// Train-mode dropout with a seeded mask; returns the output and the mask.
pub fn dropout_forward<T: Scalar>(x: &Tensor4<T>, rate: f64, rng: &mut Rng) -> Result<(Tensor4<T>, Vec<T>)> {
    ensure!((0.0..1.0).contains(&rate), Parameter, "dropout rate must be in [0, 1), got {rate}");
    let mask = dropout_mask::<T>(x.data().len(), rate, rng);
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor4::new(x.shape(), data)?, mask))
}

pub fn dropout_backward<T: Scalar>(mask: &[T], grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    ensure!(mask.len() == grad_out.data().len(), Precondition, "dropout mask length mismatch");
    let data = grad_out.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
    Tensor4::new(grad_out.shape(), data)
}
