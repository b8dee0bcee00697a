use crate::error::{ensure, Result};
use crate::nn::{ModelState, Scalar};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// One bias-corrected Adam update over flat slices; `t` is the step number
/// after this update (≥ 1). Arithmetic is done in f64 per element.
pub fn adam_update<T: Scalar>(params: &mut [T], grads: &[T], m: &mut [T], v: &mut [T], t: u64, lr: f64) -> Result<()> {
    ensure!(
        params.len() == grads.len() && params.len() == m.len() && params.len() == v.len(),
        Precondition,
        "Adam buffers disagree in length"
    );
    ensure!(t >= 1, Precondition, "Adam step count starts at 1");
    let c1 = 1.0 - BETA1.powi(t as i32);
    let c2 = 1.0 - BETA2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i].as_f64();
        let mi = BETA1 * m[i].as_f64() + (1.0 - BETA1) * g;
        let vi = BETA2 * v[i].as_f64() + (1.0 - BETA2) * g * g;
        m[i] = T::of(mi);
        v[i] = T::of(vi);
        let update = lr * (mi / c1) / ((vi / c2).sqrt() + EPSILON);
        params[i] = T::of(params[i].as_f64() - update);
    }
    Ok(())
}

/// First and second moments for every parameter, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelState<f32>,
    pub v: ModelState<f32>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelState<f32>) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }

    pub fn step(&mut self, params: &mut ModelState<f32>, grads: &ModelState<f32>, lr: f64) -> Result<()> {
        ensure!(
            params.input_channels == grads.input_channels && params.input_channels == self.m.input_channels,
            Precondition,
            "Adam state, parameters and gradients disagree in shape"
        );
        self.t += 1;
        let t = self.t;
        for (((p, g), m), v) in params.blocks_mut().into_iter().zip(grads.blocks()).zip(self.m.blocks_mut()).zip(self.v.blocks_mut()) {
            adam_update(p, g, m, v, t, lr)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = [0.5f64, -1.0];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        adam_update(&mut p, &[0.0, 0.0], &mut m, &mut v, 1, 1e-3).unwrap();
        assert_eq!(p, [0.5, -1.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = [0.0f64];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_update(&mut p, &[1.0], &mut m, &mut v, 1, 1e-3).unwrap();
        assert!((p[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    /// Independent scalar recurrence for Adam on f(w) = w².
    fn oracle(steps: usize, lr: f64) -> Vec<f64> {
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut out = vec![w];
        for t in 1..=steps {
            let g = 2.0 * w;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32));
            let vh = v / (1.0 - 0.999f64.powi(t as i32));
            w -= lr * mh / (vh.sqrt() + 1e-8);
            out.push(w);
        }
        out
    }

    #[test]
    fn quadratic_matches_scalar_recurrence() {
        let want = oracle(100, 0.1);
        let mut p = [1.0f64];
        let (mut m, mut v) = ([0.0], [0.0]);
        let mut got = vec![p[0]];
        for t in 1..=100 {
            let g = [2.0 * p[0]];
            adam_update(&mut p, &g, &mut m, &mut v, t, 0.1).unwrap();
            got.push(p[0]);
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(got.last().unwrap().abs() < 0.1);
    }

    #[test]
    fn state_step_counts_and_checks_shapes() {
        let mut params = ModelState::<f32>::init(1, 0).unwrap();
        let grads = params.zeros_like();
        let mut st = AdamState::new(&params);
        st.step(&mut params, &grads, 1e-3).unwrap();
        assert_eq!(st.t, 1);
        let other = ModelState::<f32>::zeros(2).unwrap();
        assert!(st.step(&mut params, &other, 1e-3).is_err());
        assert!(st.v.blocks().iter().all(|b| b.iter().all(|&x| x >= 0.0)));
    }
}
