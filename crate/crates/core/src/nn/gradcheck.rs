//! Central finite-difference checks of the hand-written backward passes,
//! run in f64. Perturbations that flip a ReLU or max-pool decision are
//! skipped, since the difference quotient straddles a kink there.

use rand::Rng as _;

use super::layers::{
    dropout_backward, dropout_forward, global_avg_pool_backward, global_avg_pool_forward, maxpool2x2_backward,
    maxpool2x2_forward, relu_backward, relu_forward, Conv2d, Linear,
};
use super::model::{model_backward, model_forward, Mode, ModelState};
use super::tensor::Tensor4;
use crate::error::Result;
use crate::rng::{stream, Rng};

/// Perturbation size of the central differences.
pub const FD_STEP: f64 = 1e-3;
/// Denominator floor of the relative error, so that gradients that are zero
/// up to rounding do not count as large relative errors.
pub const ABS_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl GradCheck {
    fn record(&mut self, analytic: f64, numeric: f64) {
        self.max_rel_error = self.max_rel_error.max(relative_error(analytic, numeric));
        self.checked += 1;
    }

    pub fn merge(&mut self, other: GradCheck) {
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv2d,
    Relu,
    MaxPool,
    GlobalAvgPool,
    Linear,
    Dropout,
}

impl Layer {
    pub const ALL: [Layer; 6] = [Layer::Conv2d, Layer::Relu, Layer::MaxPool, Layer::GlobalAvgPool, Layer::Linear, Layer::Dropout];

    pub fn name(self) -> &'static str {
        match self {
            Layer::Conv2d => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool => "maxpool",
            Layer::GlobalAvgPool => "global_avg_pool",
            Layer::Linear => "linear",
            Layer::Dropout => "dropout",
        }
    }
}

fn uniform(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn tensor(rng: &mut Rng, shape: [usize; 4]) -> Tensor4<f64> {
    Tensor4::new(shape, uniform(rng, shape.iter().product(), 1.0)).expect("valid shape")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compares `analytic[i]` with the central difference of `f` in coordinate
/// `i` of `v`, for every `i`. `f` returns None when the perturbed point lies
/// across a kink; such coordinates are skipped.
fn check_coords(
    v: &mut [f64],
    analytic: &[f64],
    coords: impl Iterator<Item = usize>,
    mut f: impl FnMut(&[f64]) -> Result<Option<f64>>,
    out: &mut GradCheck,
) -> Result<()> {
    for i in coords {
        let orig = v[i];
        v[i] = orig + FD_STEP;
        let up = f(v)?;
        v[i] = orig - FD_STEP;
        let dn = f(v)?;
        v[i] = orig;
        match (up, dn) {
            (Some(u), Some(d)) => out.record(analytic[i], (u - d) / (2.0 * FD_STEP)),
            _ => out.skipped += 1,
        }
    }
    Ok(())
}

/// Checks one layer's backward pass on random shapes drawn from `seed`.
/// The objective is Σ r ⊙ layer(x) for a random r.
pub fn check_layer(layer: Layer, seed: u64) -> Result<GradCheck> {
    let mut rng = stream(seed, &[crate::rng::label_id(layer.name())]);
    let mut out = GradCheck::default();
    let b = rng.random_range(1..=2);
    match layer {
        Layer::Conv2d => {
            let (cin, cout) = (rng.random_range(1..=3), rng.random_range(1..=4));
            let (h, w) = (rng.random_range(3..=7), rng.random_range(3..=7));
            let mut conv = Conv2d::<f64>::zeros(cin, cout);
            conv.weight = uniform(&mut rng, conv.weight.len(), 0.5);
            conv.bias = uniform(&mut rng, cout, 0.5);
            let mut x = tensor(&mut rng, [b, cin, h, w]);
            let r = uniform(&mut rng, b * cout * h * w, 1.0);
            let grad_out = Tensor4::new([b, cout, h, w], r.clone())?;
            let g = conv.backward(&x, &grad_out, true)?;
            let gx = g.grad_x.expect("requested").into_data();
            let n = x.data().len();
            let shape = x.shape();
            let conv_ref = conv.clone();
            check_coords(x.data_mut(), &gx, 0..n, |v| Ok(Some(dot(&r, conv_ref.forward(&Tensor4::new(shape, v.to_vec())?)?.data()))), &mut out)?;
            let mut wv = conv.weight.clone();
            check_coords(&mut wv, &g.grad_w, 0..conv.weight.len(), |v| {
                let c = Conv2d { weight: v.to_vec(), ..conv.clone() };
                Ok(Some(dot(&r, c.forward(&x)?.data())))
            }, &mut out)?;
            let mut bv = conv.bias.clone();
            check_coords(&mut bv, &g.grad_b, 0..cout, |v| {
                let c = Conv2d { bias: v.to_vec(), ..conv.clone() };
                Ok(Some(dot(&r, c.forward(&x)?.data())))
            }, &mut out)?;
        }
        Layer::Relu => {
            let shape = [b, rng.random_range(1..=3), rng.random_range(1..=6), rng.random_range(1..=6)];
            let mut x = tensor(&mut rng, shape);
            let r = uniform(&mut rng, x.data().len(), 1.0);
            let g = relu_backward(&x, &Tensor4::new(shape, r.clone())?)?.into_data();
            let n = x.data().len();
            let base: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
            check_coords(x.data_mut(), &g, 0..n, |v| {
                let flipped = v.iter().zip(&base).any(|(&a, &s)| (a > 0.0) != s);
                Ok((!flipped).then(|| dot(&r, relu_forward(&Tensor4::new(shape, v.to_vec()).expect("shape")).data())))
            }, &mut out)?;
        }
        Layer::MaxPool => {
            let shape = [b, rng.random_range(1..=3), rng.random_range(2..=7), rng.random_range(2..=7)];
            let mut x = tensor(&mut rng, shape);
            let (pooled, index) = maxpool2x2_forward(&x)?;
            let r = uniform(&mut rng, pooled.data().len(), 1.0);
            let g = maxpool2x2_backward(&index, &Tensor4::new(pooled.shape(), r.clone())?)?.into_data();
            let n = x.data().len();
            check_coords(x.data_mut(), &g, 0..n, |v| {
                let (p, idx) = maxpool2x2_forward(&Tensor4::new(shape, v.to_vec())?)?;
                Ok((idx == index).then(|| dot(&r, p.data())))
            }, &mut out)?;
        }
        Layer::GlobalAvgPool => {
            let shape = [b, rng.random_range(1..=4), rng.random_range(1..=6), rng.random_range(1..=6)];
            let mut x = tensor(&mut rng, shape);
            let r = uniform(&mut rng, shape[0] * shape[1], 1.0);
            let g = global_avg_pool_backward(shape, &Tensor4::new([shape[0], shape[1], 1, 1], r.clone())?)?.into_data();
            let n = x.data().len();
            check_coords(x.data_mut(), &g, 0..n, |v| Ok(Some(dot(&r, global_avg_pool_forward(&Tensor4::new(shape, v.to_vec())?).data()))), &mut out)?;
        }
        Layer::Linear => {
            let (fin, fout) = (rng.random_range(2..=10), rng.random_range(1..=5));
            let mut lin = Linear::<f64>::zeros(fin, fout);
            lin.weight = uniform(&mut rng, lin.weight.len(), 0.5);
            lin.bias = uniform(&mut rng, fout, 0.5);
            let shape = [b, fin, 1, 1];
            let mut x = tensor(&mut rng, shape);
            let r = uniform(&mut rng, b * fout, 1.0);
            let g = lin.backward(&x, &Tensor4::new([b, fout, 1, 1], r.clone())?)?;
            let n = x.data().len();
            let lin_ref = lin.clone();
            check_coords(x.data_mut(), g.grad_x.data(), 0..n, |v| Ok(Some(dot(&r, lin_ref.forward(&Tensor4::new(shape, v.to_vec())?)?.data()))), &mut out)?;
            let mut wv = lin.weight.clone();
            check_coords(&mut wv, &g.grad_w, 0..lin.weight.len(), |v| {
                let l = Linear { weight: v.to_vec(), ..lin.clone() };
                Ok(Some(dot(&r, l.forward(&x)?.data())))
            }, &mut out)?;
            let mut bv = lin.bias.clone();
            check_coords(&mut bv, &g.grad_b, 0..fout, |v| {
                let l = Linear { bias: v.to_vec(), ..lin.clone() };
                Ok(Some(dot(&r, l.forward(&x)?.data())))
            }, &mut out)?;
        }
        Layer::Dropout => {
            let shape = [b, rng.random_range(8..=32), 1, 1];
            let mut x = tensor(&mut rng, shape);
            let mask_seed = rng.random::<u64>();
            let (_, mask) = dropout_forward(&x, 0.3, &mut stream(mask_seed, &[]))?;
            let r = uniform(&mut rng, x.data().len(), 1.0);
            let g = dropout_backward(&mask, &Tensor4::new(shape, r.clone())?)?.into_data();
            let n = x.data().len();
            check_coords(x.data_mut(), &g, 0..n, |v| {
                let (y, _) = dropout_forward(&Tensor4::new(shape, v.to_vec())?, 0.3, &mut stream(mask_seed, &[]))?;
                Ok(Some(dot(&r, y.data())))
            }, &mut out)?;
        }
    }
    Ok(out)
}

/// Checks the full network's parameter gradients on a small train-mode
/// batch (dropout active with a fixed mask). Up to `per_block` coordinates
/// of each parameter tensor are sampled.
pub fn check_model(seed: u64, input_channels: usize, h: usize, w: usize, per_block: usize) -> Result<GradCheck> {
    let mut rng = stream(seed, &[crate::rng::label_id("model")]);
    let mut params = ModelState::<f64>::init(input_channels, rng.random())?;
    // Nonzero biases exercise the bias paths and move activations off zero.
    for (i, block) in params.blocks_mut().into_iter().enumerate() {
        if i % 2 == 1 {
            block.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
    let b = 2;
    let x = tensor(&mut rng, [b, input_channels, h, w]);
    let r = uniform(&mut rng, b, 1.0);
    let mode = Mode::Train { dropout_seed: rng.random() };
    let (_, trace) = model_forward(&params, &x, mode)?;
    let signature = trace.as_ref().expect("train mode").activation_signature();
    let grads = model_backward(&params, trace.as_ref(), &r)?;

    let mut out = GradCheck::default();
    for k in 0..10 {
        let len = params.blocks()[k].len();
        let coords: Vec<usize> = if len <= per_block { (0..len).collect() } else { (0..per_block).map(|_| rng.random_range(0..len)).collect() };
        let analytic = grads.blocks()[k].to_vec();
        let mut v = params.blocks()[k].to_vec();
        let mut probe = params.clone();
        check_coords(&mut v, &analytic, coords.into_iter(), |vals| {
            probe.blocks_mut()[k].copy_from_slice(vals);
            let (pred, t) = model_forward(&probe, &x, mode)?;
            let same = t.expect("train mode").activation_signature() == signature;
            Ok(same.then(|| dot(&r, &pred)))
        }, &mut out)?;
    }
    Ok(out)
}
