//! Dense feed-forward networks with exact backpropagation and Adam.
//!
//! Hidden layers use ReLU. The output layer is either linear or a sigmoid
//! scaled to `(0, cap)`. All arithmetic is `f64`, and batches are rows of
//! an `ndarray` matrix so each layer is one matrix product.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OutputActivation {
    Identity,
    /// `cap * sigmoid(z)`.
    SigmoidScaled(f64),
}

impl OutputActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::SigmoidScaled(cap) => cap * sigmoid(z),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::SigmoidScaled(cap) => {
                let s = sigmoid(z);
                cap * s * (1.0 - s)
            }
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Descend,
    Ascend,
}

/// One affine layer; `w` is `fan_in x fan_out` so a batch maps as `x.dot(w) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..=limit));
        Self {
            w,
            b: Array1::zeros(fan_out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
    pub t: u64,
}

/// Dense network plus its Adam accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub layers: Vec<Layer>,
    output: OutputActivation,
    pub adam: AdamState,
}

/// Per-parameter partials, summed over the batch, and the input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
    /// One row per batch sample.
    pub input: Array2<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `acts[0]` is the input; `acts[l]` the post-activation output of layer `l`.
    acts: Vec<Array2<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("trace holds at least the input")
    }
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes.windows(2).map(|w| Layer::glorot(w[0], w[1], rng)).collect();
        Self::from_layers(sizes, layers, output)
    }

    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Self {
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self::from_layers(sizes, layers, output)
    }

    fn from_layers(sizes: &[usize], layers: Vec<Layer>, output: OutputActivation) -> Self {
        let zero = || sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self {
            sizes: sizes.to_vec(),
            layers,
            output,
            adam: AdamState {
                m: zero(),
                v: zero(),
                t: 0,
            },
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.w) + &layer.b;
            if l == last {
                let act = self.output;
                z.mapv_inplace(|v| act.apply(v));
            } else {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<Trace> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(x.to_owned());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = acts[l].dot(&layer.w) + &layer.b;
            let a = if l == last {
                let act = self.output;
                z.mapv(|v| act.apply(v))
            } else {
                z.mapv(|v| v.max(0.0))
            };
            pre.push(z);
            acts.push(a);
        }
        Ok(Trace { acts, pre })
    }

    /// Gradients of `sum_rows <upstream_row, output_row>` w.r.t. every
    /// parameter (summed over rows) and w.r.t. each input row.
    pub fn backward_trace(&self, trace: &Trace, upstream: ArrayView2<f64>) -> Result<Gradients> {
        self.backprop(trace, upstream, true)
    }

    /// Input gradient only; skips the parameter partials.
    pub fn input_gradient(&self, trace: &Trace, upstream: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.backprop(trace, upstream, false)?.input)
    }

    pub fn backward_batch(&self, x: ArrayView2<f64>, upstream: ArrayView2<f64>) -> Result<Gradients> {
        let trace = self.forward_trace(x)?;
        self.backward_trace(&trace, upstream)
    }

    /// Single-sample backward pass.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
        let x = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let u = ArrayView2::from_shape((1, upstream.len()), upstream).expect("row view");
        self.backward_batch(x, u)
    }

    fn backprop(&self, trace: &Trace, upstream: ArrayView2<f64>, with_params: bool) -> Result<Gradients> {
        let out = self.output_size();
        if upstream.ncols() != out {
            return Err(Error::ShapeMismatch {
                expected: out,
                got: upstream.ncols(),
            });
        }
        let batch = trace.acts[0].nrows();
        if upstream.nrows() != batch {
            return Err(Error::ShapeMismatch {
                expected: batch,
                got: upstream.nrows(),
            });
        }
        let n = self.layers.len();
        let act = self.output;
        let mut delta = upstream.to_owned();
        Zip::from(&mut delta)
            .and(&trace.pre[n - 1])
            .for_each(|d, &z| *d *= act.derivative(z));

        let mut grads: Vec<Layer> = Vec::with_capacity(if with_params { n } else { 0 });
        for l in (0..n).rev() {
            if with_params {
                grads.push(Layer {
                    w: trace.acts[l].t().dot(&delta),
                    b: delta.sum_axis(Axis(0)),
                });
            }
            let mut back = delta.dot(&self.layers[l].w.t());
            if l > 0 {
                Zip::from(&mut back)
                    .and(&trace.pre[l - 1])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0
                        }
                    });
            }
            delta = back;
        }
        grads.reverse();
        Ok(Gradients {
            layers: grads,
            input: delta,
        })
    }

    /// One bias-corrected Adam step.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64, direction: Direction) {
        assert_eq!(grads.layers.len(), self.layers.len(), "gradient shape mismatch");
        self.adam.t += 1;
        let t = self.adam.t as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        let sign = match direction {
            Direction::Descend => -1.0,
            Direction::Ascend => 1.0,
        };
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p += sign * lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        };
        for (((layer, g), m), v) in self
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.adam.m.iter_mut())
            .zip(self.adam.v.iter_mut())
        {
            Zip::from(&mut layer.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .and(&g.w)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .and(&g.b)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }

    /// `self <- tau * online + (1 - tau) * self`, parameters only.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            Zip::from(&mut t.w)
                .and(&o.w)
                .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
            Zip::from(&mut t.b)
                .and(&o.b)
                .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
        }
    }

    /// Parameters in layer order: each weight matrix row-major, then its bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|p| *p = *it.next().unwrap());
        }
        Ok(())
    }

    fn check_input(&self, got: usize) -> Result<()> {
        if got != self.input_size() {
            return Err(Error::ShapeMismatch {
                expected: self.input_size(),
                got,
            });
        }
        Ok(())
    }
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.flat().iter().all(|&g| g == 0.0) && self.input.iter().all(|&g| g == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use ndarray::array;

    #[test]
    fn zero_net_outputs() {
        let net = Mlp::zeros(&[3, 4, 1], OutputActivation::SigmoidScaled(10.0));
        assert_eq!(net.forward(&[0.3, -1.0, 2.0]).unwrap(), vec![5.0]);
        let net = Mlp::zeros(&[3, 4, 1], OutputActivation::Identity);
        assert_eq!(net.forward(&[0.3, -1.0, 2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn relu_blocks_negative_units() {
        let mut net = Mlp::zeros(&[1, 2, 1], OutputActivation::Identity);
        net.layers[0].w = array![[1.0, -1.0]];
        net.layers[1].w = array![[2.0], [3.0]];
        // hidden pre-activations (x, -x): only the positive one reaches the output
        assert_eq!(net.forward(&[1.5]).unwrap(), vec![3.0]);
        assert_eq!(net.forward(&[-1.5]).unwrap(), vec![4.5]);
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::zeros(&[3, 2, 1], OutputActivation::Identity);
        assert!(net.forward(&[1.0, 2.0]).is_err());
        assert!(net.backward(&[1.0, 2.0, 3.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let net = Mlp::new(&[3, 5, 2], OutputActivation::Identity, &mut rng_from(1));
        assert!(net.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap().is_zero());
    }

    #[test]
    fn linear_input_gradient_is_transpose_action() {
        let mut net = Mlp::zeros(&[3, 2], OutputActivation::Identity);
        net.layers[0].w = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let g = net.backward(&[0.5, 0.5, 0.5], &[1.0, -1.0]).unwrap();
        assert_eq!(g.input.row(0).to_vec(), vec![-1.0, -1.0, -1.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut net = Mlp::new(&[2, 3, 1], OutputActivation::Identity, &mut rng_from(2));
        let before = net.params_flat();
        let g = net.backward(&[0.4, -0.9], &[1.0]).unwrap();
        net.adam_step(&g, 0.01, Direction::Descend);
        for ((b, a), g) in before.iter().zip(net.params_flat()).zip(g.flat()) {
            if g != 0.0 {
                assert!(((b - a).abs() - 0.01).abs() < 1e-6);
                assert_eq!((a - b).signum(), -g.signum());
            } else {
                assert_eq!(a, *b);
            }
        }
    }

    #[test]
    fn adam_one_step_on_square() {
        // minimise x^2 from x = 1 using a 1-1 linear net with zero input bias path:
        // the single bias parameter plays the role of x.
        let mut net = Mlp::zeros(&[1, 1], OutputActivation::Identity);
        net.layers[0].b[0] = 1.0;
        let x = net.layers[0].b[0];
        let g = Gradients {
            layers: vec![Layer {
                w: array![[0.0]],
                b: array![2.0 * x],
            }],
            input: Array2::zeros((1, 1)),
        };
        net.adam_step(&g, 0.001, Direction::Descend);
        assert!((net.layers[0].b[0] - 0.999).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_no_change() {
        let mut net = Mlp::new(&[2, 3, 1], OutputActivation::Identity, &mut rng_from(3));
        let before = net.params_flat();
        let g = net.backward(&[0.4, -0.9], &[0.0]).unwrap();
        net.adam_step(&g, 0.01, Direction::Ascend);
        assert_eq!(before, net.params_flat());
    }

    #[test]
    fn sigmoid_output_in_open_interval() {
        let mut net = Mlp::zeros(&[1, 1], OutputActivation::SigmoidScaled(10.0));
        net.layers[0].w[[0, 0]] = 1.0;
        for x in [-30.0, -5.0, 0.0, 5.0, 30.0] {
            let y = net.forward(&[x]).unwrap()[0];
            assert!(y > 0.0 && y < 10.0, "{x} -> {y}");
        }
    }

    #[test]
    fn flat_params_roundtrip() {
        let net = Mlp::new(&[3, 4, 2], OutputActivation::Identity, &mut rng_from(4));
        let mut other = Mlp::zeros(&[3, 4, 2], OutputActivation::Identity);
        other.set_params_flat(&net.params_flat()).unwrap();
        assert_eq!(other.layers, net.layers);
        assert!(other.set_params_flat(&[1.0]).is_err());
    }
}
