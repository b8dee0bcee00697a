use rayon::prelude::*;
use rand::Rng as _;

use super::layers::{dropout_mask, maxpool_item, unpool_item, Conv2d, Linear, Workspace};
use super::tensor::{debug_assert_finite, Tensor4};
use super::Scalar;
use crate::error::{ensure, Error, Result};
use crate::rng::{label_id, stream};

pub const CONV_CHANNELS: [usize; 3] = [32, 64, 128];
pub const HIDDEN_UNITS: usize = 128;
pub const DROPOUT_RATE: f64 = 0.3;
pub const MAX_INPUT_CHANNELS: usize = 6;
/// Smallest spatial size that survives three 2×2 pools.
pub const MIN_SPATIAL: usize = 8;

/// Network parameters; the same structure holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    pub input_channels: usize,
    pub dropout_rate: f64,
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub conv3: Conv2d<T>,
    pub fc1: Linear<T>,
    pub head: Linear<T>,
}

/// Closed-form parameter count: 288·C_in + 109,025.
pub fn parameter_count(input_channels: usize) -> usize {
    288 * input_channels + 109_025
}

impl<T: Scalar> ModelState<T> {
    pub fn zeros(input_channels: usize) -> Result<Self> {
        ensure!(
            (1..=MAX_INPUT_CHANNELS).contains(&input_channels),
            Parameter,
            "input channel count must be 1..={MAX_INPUT_CHANNELS}, got {input_channels}"
        );
        let [c1, c2, c3] = CONV_CHANNELS;
        Ok(ModelState {
            input_channels,
            dropout_rate: DROPOUT_RATE,
            conv1: Conv2d::zeros(input_channels, c1),
            conv2: Conv2d::zeros(c1, c2),
            conv3: Conv2d::zeros(c2, c3),
            fc1: Linear::zeros(c3, HIDDEN_UNITS),
            head: Linear::zeros(HIDDEN_UNITS, 1),
        })
    }

    /// He-uniform weights in ±sqrt(6 / fan_in), zero biases. Values are drawn
    /// in f64 so f32 and f64 models from one seed agree up to rounding.
    pub fn init(input_channels: usize, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(input_channels)?;
        let fan_ins = [
            input_channels * 9,
            CONV_CHANNELS[0] * 9,
            CONV_CHANNELS[1] * 9,
            CONV_CHANNELS[2],
            HIDDEN_UNITS,
        ];
        let weights = [
            &mut m.conv1.weight,
            &mut m.conv2.weight,
            &mut m.conv3.weight,
            &mut m.fc1.weight,
            &mut m.head.weight,
        ];
        for (layer, (w, fan_in)) in weights.into_iter().zip(fan_ins).enumerate() {
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut rng = stream(seed, &[label_id("init"), layer as u64]);
            for v in w.iter_mut() {
                *v = T::of(rng.random_range(-bound..bound));
            }
        }
        Ok(m)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_channels).expect("valid channel count")
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// Parameter tensors in canonical order: conv1 w/b, conv2 w/b, conv3 w/b,
    /// fc1 w/b, head w/b.
    pub fn blocks(&self) -> [&[T]; 10] {
        [
            &self.conv1.weight,
            &self.conv1.bias,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.conv3.weight,
            &self.conv3.bias,
            &self.fc1.weight,
            &self.fc1.bias,
            &self.head.weight,
            &self.head.bias,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<T>; 10] {
        [
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.conv3.weight,
            &mut self.conv3.bias,
            &mut self.fc1.weight,
            &mut self.fc1.bias,
            &mut self.head.weight,
            &mut self.head.bias,
        ]
    }

    pub fn cast<U: Scalar>(&self) -> ModelState<U> {
        let mut out = ModelState::<U>::zeros(self.input_channels).expect("valid channel count");
        out.dropout_rate = self.dropout_rate;
        for (dst, src) in out.blocks_mut().into_iter().zip(self.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::of(s.as_f64());
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn add_assign(&mut self, other: &Self) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + s;
            }
        }
    }

    fn conv(&self, l: usize) -> &Conv2d<T> {
        [&self.conv1, &self.conv2, &self.conv3][l]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; item `b` of a batch draws its mask from a stream
    /// derived from (`dropout_seed`, b).
    Train { dropout_seed: u64 },
    Infer,
}

/// Per-item record of one train-mode forward pass.
#[derive(Debug, Clone)]
struct ItemTrace<T> {
    /// Input to each conv block: x, pool1 output, pool2 output.
    inputs: [Vec<T>; 3],
    pooled3: Vec<T>,
    argmax: [Vec<u8>; 3],
    gap: Vec<T>,
    fc1_pre: Vec<T>,
    dropout_mask: Vec<T>,
    dropped: Vec<T>,
}

/// Cached activations and pooling/dropout decisions from a train-mode
/// forward pass, consumed by [`model_backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    input_shape: [usize; 4],
    items: Vec<ItemTrace<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn input_shape(&self) -> [usize; 4] {
        self.input_shape
    }

    /// Hash of every discrete decision made in the forward pass (pool
    /// winners, ReLU on/off, dropout mask). Two passes with equal
    /// signatures lie on the same linear piece of the network.
    pub fn activation_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        };
        for item in &self.items {
            for idx in &item.argmax {
                idx.iter().for_each(|&q| eat(q));
            }
            for v in item.inputs[1..].iter().flatten().chain(&item.pooled3).chain(&item.fc1_pre) {
                eat((*v > T::zero()) as u8);
            }
            for v in &item.dropout_mask {
                eat((*v > T::zero()) as u8);
            }
        }
        h
    }
}

fn spatial(h: usize, w: usize) -> [(usize, usize); 4] {
    [(h, w), (h / 2, w / 2), (h / 4, w / 4), (h / 8, w / 8)]
}

fn check_input<T: Scalar>(params: &ModelState<T>, x: &Tensor4<T>) -> Result<()> {
    let [_, c, h, w] = x.shape();
    ensure!(
        c == params.input_channels,
        Precondition,
        "model expects {} input channels, got {c}",
        params.input_channels
    );
    ensure!(
        h >= MIN_SPATIAL && w >= MIN_SPATIAL,
        Precondition,
        "input must be at least {MIN_SPATIAL}×{MIN_SPATIAL}, got {h}×{w}"
    );
    Ok(())
}

fn forward_item<T: Scalar>(
    params: &ModelState<T>,
    x: &[T],
    h: usize,
    w: usize,
    mask: Option<Vec<T>>,
    ws: &mut Workspace<T>,
    conv_out: &mut Vec<T>,
) -> (T, Option<ItemTrace<T>>) {
    let dims = spatial(h, w);
    let mut cur = x.to_vec();
    let mut inputs: Vec<Vec<T>> = Vec::with_capacity(3);
    let mut argmax: Vec<Vec<u8>> = Vec::with_capacity(3);
    for l in 0..3 {
        let conv = params.conv(l);
        let (hl, wl) = dims[l];
        let (hn, wn) = dims[l + 1];
        conv_out.resize(conv.out_channels * hl * wl, T::zero());
        conv.forward_item(&cur, hl, wl, conv_out, ws);
        debug_assert_finite(conv_out, "conv block");
        let mut pooled = vec![T::zero(); conv.out_channels * hn * wn];
        let mut idx = vec![0u8; pooled.len()];
        maxpool_item(conv_out, conv.out_channels, hl, wl, true, &mut pooled, &mut idx);
        inputs.push(std::mem::replace(&mut cur, pooled));
        argmax.push(idx);
    }
    let (h3, w3) = dims[3];
    let scale = T::of(1.0 / (h3 * w3) as f64);
    let gap: Vec<T> = cur.chunks_exact(h3 * w3).map(|p| p.iter().fold(T::zero(), |a, &v| a + v) * scale).collect();
    let mut fc1_pre = vec![T::zero(); HIDDEN_UNITS];
    params.fc1.forward_item(&gap, &mut fc1_pre);
    let mut dropped: Vec<T> = fc1_pre.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
    if let Some(m) = &mask {
        dropped.iter_mut().zip(m).for_each(|(d, &k)| *d = *d * k);
    }
    let mut pred = [T::zero()];
    params.head.forward_item(&dropped, &mut pred);
    debug_assert_finite(&pred, "head");
    let trace = mask.map(|dropout_mask| ItemTrace {
        inputs: inputs.try_into().expect("three blocks"),
        pooled3: cur,
        argmax: argmax.try_into().expect("three blocks"),
        gap,
        fc1_pre,
        dropout_mask,
        dropped,
    });
    (pred[0], trace)
}

/// Runs the network on a B × C_in × H × W batch and returns one prediction
/// (radians) per item. Train mode also returns the trace for backward.
///
/// Items are processed in parallel; results are independent of thread count.
pub fn model_forward<T: Scalar>(
    params: &ModelState<T>,
    x: &Tensor4<T>,
    mode: Mode,
) -> Result<(Vec<T>, Option<ForwardTrace<T>>)> {
    check_input(params, x)?;
    let [b, _, h, w] = x.shape();
    let results: Vec<(T, Option<ItemTrace<T>>)> = (0..b)
        .into_par_iter()
        .map_init(
            || (Workspace::default(), Vec::new()),
            |(ws, conv_out), i| {
                let mask = match mode {
                    Mode::Train { dropout_seed } => {
                        let mut rng = stream(dropout_seed, &[i as u64]);
                        Some(dropout_mask(HIDDEN_UNITS, params.dropout_rate, &mut rng))
                    }
                    Mode::Infer => None,
                };
                forward_item(params, x.item(i), h, w, mask, ws, conv_out)
            },
        )
        .collect();
    let mut preds = Vec::with_capacity(b);
    let mut items = Vec::with_capacity(b);
    for (p, t) in results {
        preds.push(p);
        items.extend(t);
    }
    let trace = matches!(mode, Mode::Train { .. }).then_some(ForwardTrace { input_shape: x.shape(), items });
    Ok((preds, trace))
}

fn backward_item<T: Scalar>(
    params: &ModelState<T>,
    t: &ItemTrace<T>,
    h: usize,
    w: usize,
    grad_pred: T,
    ws: &mut Workspace<T>,
) -> ModelState<T> {
    let mut g = params.zeros_like();
    if grad_pred == T::zero() {
        return g;
    }
    let dims = spatial(h, w);
    let mut grad_dropped = vec![T::zero(); HIDDEN_UNITS];
    params.head.backward_item(&t.dropped, &[grad_pred], &mut g.head.weight, &mut g.head.bias, &mut grad_dropped);
    let grad_pre: Vec<T> = grad_dropped
        .iter()
        .zip(&t.dropout_mask)
        .zip(&t.fc1_pre)
        .map(|((&gd, &m), &z)| if z > T::zero() { gd * m } else { T::zero() })
        .collect();
    let mut grad_gap = vec![T::zero(); CONV_CHANNELS[2]];
    params.fc1.backward_item(&t.gap, &grad_pre, &mut g.fc1.weight, &mut g.fc1.bias, &mut grad_gap);

    let (h3, w3) = dims[3];
    let scale = T::of(1.0 / (h3 * w3) as f64);
    let mut grad_pooled: Vec<T> = grad_gap.iter().flat_map(|&v| std::iter::repeat_n(v * scale, h3 * w3)).collect();
    let mut grad_conv = std::mem::take(&mut ws.grad_conv);
    let mut grad_in = std::mem::take(&mut ws.grad_in);
    for l in (0..3).rev() {
        let conv = params.conv(l);
        let (hl, wl) = dims[l];
        let gate = if l == 2 { &t.pooled3 } else { &t.inputs[l + 1] };
        grad_conv.resize(conv.out_channels * hl * wl, T::zero());
        unpool_item(&grad_pooled, &t.argmax[l], Some(gate), conv.out_channels, hl, wl, &mut grad_conv);
        let gc = match l {
            0 => &mut g.conv1,
            1 => &mut g.conv2,
            _ => &mut g.conv3,
        };
        let (gw, gb) = (&mut gc.weight, &mut gc.bias);
        if l > 0 {
            grad_in.resize(conv.in_channels * hl * wl, T::zero());
            conv.backward_item(&t.inputs[l], hl, wl, &grad_conv, gw, gb, Some(&mut grad_in), ws);
            std::mem::swap(&mut grad_pooled, &mut grad_in);
        } else {
            conv.backward_item(&t.inputs[l], hl, wl, &grad_conv, gw, gb, None, ws);
        }
    }
    ws.grad_conv = grad_conv;
    ws.grad_in = if grad_in.capacity() >= grad_pooled.capacity() { grad_in } else { grad_pooled };
    g
}

/// Gradients of Σ_b grad_pred[b]·pred[b] with respect to every parameter.
/// Per-item gradients are summed in batch order.
pub fn model_backward<T: Scalar>(
    params: &ModelState<T>,
    trace: Option<&ForwardTrace<T>>,
    grad_pred: &[T],
) -> Result<ModelState<T>> {
    let trace = trace.ok_or_else(|| Error::Contract("backward needs the trace of a train-mode forward pass".into()))?;
    let [b, c, h, w] = trace.input_shape;
    ensure!(c == params.input_channels, Precondition, "trace was recorded for {c} input channels");
    ensure!(grad_pred.len() == b, Precondition, "expected {b} output gradients, got {}", grad_pred.len());
    let per_item: Vec<ModelState<T>> = trace
        .items
        .par_iter()
        .zip(grad_pred.par_iter())
        .map_init(Workspace::default, |ws, (t, &gp)| backward_item(params, t, h, w, gp, ws))
        .collect();
    let mut total = params.zeros_like();
    for g in &per_item {
        total.add_assign(g);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        let m = ModelState::<f32>::init(2, 1).unwrap();
        assert_eq!(m.param_count(), 109_601);
        assert_eq!(m.conv1.param_count(), 608);
        assert_eq!(m.conv2.param_count(), 18_496);
        assert_eq!(m.conv3.param_count(), 73_856);
        assert_eq!(m.fc1.param_count(), 16_512);
        assert_eq!(m.head.param_count(), 129);
        for c in 1..=6 {
            assert_eq!(ModelState::<f64>::zeros(c).unwrap().param_count(), parameter_count(c));
        }
        assert!(ModelState::<f32>::zeros(0).is_err());
        assert!(ModelState::<f32>::zeros(7).is_err());
    }

    #[test]
    fn init_is_he_uniform_and_deterministic() {
        let a = ModelState::<f32>::init(3, 9).unwrap();
        assert_eq!(a, ModelState::<f32>::init(3, 9).unwrap());
        assert_ne!(a, ModelState::<f32>::init(3, 10).unwrap());
        for (i, b) in a.blocks().iter().enumerate() {
            if i % 2 == 1 {
                assert!(b.iter().all(|&v| v == 0.0));
            }
        }
        let bound = (6.0f32 / 27.0).sqrt();
        assert!(a.conv1.weight.iter().all(|v| v.abs() <= bound));
        assert!(a.conv1.weight.iter().any(|v| v.abs() > 0.8 * bound));
    }

    #[test]
    fn zero_net_predicts_head_bias() {
        let mut m = ModelState::<f64>::zeros(2).unwrap();
        m.head.bias[0] = 0.7;
        let x = Tensor4::zeros([3, 2, 8, 12]).unwrap();
        let (p, t) = model_forward(&m, &x, Mode::Infer).unwrap();
        assert_eq!(p, vec![0.7; 3]);
        assert!(t.is_none());
    }

    #[test]
    fn infer_is_deterministic_and_train_depends_on_seed() {
        let m = ModelState::<f32>::init(1, 4).unwrap();
        let x = Tensor4::from_fn([4, 1, 16, 20], |i| ((i * 37 % 101) as f32 / 50.0) - 1.0).unwrap();
        let (a, _) = model_forward(&m, &x, Mode::Infer).unwrap();
        let (b, _) = model_forward(&m, &x, Mode::Infer).unwrap();
        assert_eq!(a, b);
        let (c, _) = model_forward(&m, &x, Mode::Train { dropout_seed: 1 }).unwrap();
        let (d, _) = model_forward(&m, &x, Mode::Train { dropout_seed: 1 }).unwrap();
        let (e, _) = model_forward(&m, &x, Mode::Train { dropout_seed: 2 }).unwrap();
        assert_eq!(c, d);
        assert_ne!(c, e);
    }

    #[test]
    fn rejects_bad_inputs_and_missing_trace() {
        let m = ModelState::<f32>::zeros(2).unwrap();
        assert!(matches!(model_forward(&m, &Tensor4::zeros([1, 3, 8, 8]).unwrap(), Mode::Infer), Err(Error::Precondition(_))));
        assert!(matches!(model_forward(&m, &Tensor4::zeros([1, 2, 7, 8]).unwrap(), Mode::Infer), Err(Error::Precondition(_))));
        assert!(matches!(model_backward(&m, None, &[1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_is_linear_in_output_gradient() {
        let m = ModelState::<f64>::init(2, 3).unwrap();
        let x = Tensor4::from_fn([2, 2, 8, 12], |i| ((i * 7919 % 211) as f64 / 105.0) - 1.0).unwrap();
        let (_, t) = model_forward(&m, &x, Mode::Train { dropout_seed: 5 }).unwrap();
        let zero = model_backward(&m, t.as_ref(), &[0.0, 0.0]).unwrap();
        assert!(zero.blocks().iter().all(|b| b.iter().all(|&v| v == 0.0)));
        let g1 = model_backward(&m, t.as_ref(), &[0.3, -0.2]).unwrap();
        let g2 = model_backward(&m, t.as_ref(), &[0.6, -0.4]).unwrap();
        for (a, b) in g1.blocks().iter().zip(g2.blocks()) {
            for (&u, &v) in a.iter().zip(b.iter()) {
                assert!((2.0 * u - v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        }
    }

    #[test]
    fn trajectory_for_full_size_input() {
        assert_eq!(spatial(98, 257), [(98, 257), (49, 128), (24, 64), (12, 32)]);
    }
}
