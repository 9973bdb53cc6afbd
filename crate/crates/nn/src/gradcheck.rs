//! Finite-difference verification of the backward passes.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::convlstm::{ConvLstmCell, LstmState};
use crate::layers::{Activation, Conv2d, Dense, Layer, MaxPool2d, Sequential, Upsample2d};
use crate::param::Parameterized;
use crate::Tensor;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely rather than relatively.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, height: usize, width: usize },
    Activation { kind: Activation, len: usize },
    MaxPool { channels: usize, height: usize, width: usize },
    Upsample { channels: usize, height: usize, width: usize },
    ConvLstm { in_channels: usize, hidden: usize, kernel: usize, height: usize, width: usize, steps: usize },
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

fn randn<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Something with parameters whose scalar loss can be evaluated and
/// differentiated w.r.t. both parameters and input.
trait Probe: Parameterized {
    fn loss(&self, x: &Tensor) -> f64;
    /// Accumulates parameter gradients, returns the input gradient.
    fn grad(&mut self, x: &Tensor) -> Tensor;
}

struct SeqProbe {
    net: Sequential,
    proj: Tensor,
}

impl Parameterized for SeqProbe {
    fn params(&self) -> Vec<&crate::Param> {
        self.net.params()
    }
    fn params_mut(&mut self) -> Vec<&mut crate::Param> {
        self.net.params_mut()
    }
}

impl Probe for SeqProbe {
    fn loss(&self, x: &Tensor) -> f64 {
        self.net.infer(x).dot(&self.proj)
    }
    fn grad(&mut self, x: &Tensor) -> Tensor {
        let (y, caches) = self.net.forward(x);
        let g = Tensor::from_vec(y.shape(), self.proj.data().to_vec());
        self.net.backward(&caches, &g)
    }
}

/// Runs the cell over `steps` inputs packed along the channel axis and
/// projects every hidden state plus the final cell state.
struct LstmProbe {
    cell: ConvLstmCell,
    steps: usize,
    proj_h: Vec<Tensor>,
    proj_c: Tensor,
}

impl LstmProbe {
    fn split(&self, x: &Tensor) -> Vec<Tensor> {
        let cin = self.cell.input_channels();
        x.split_channels(&vec![cin; self.steps])
    }
}

impl Parameterized for LstmProbe {
    fn params(&self) -> Vec<&crate::Param> {
        self.cell.params()
    }
    fn params_mut(&mut self) -> Vec<&mut crate::Param> {
        self.cell.params_mut()
    }
}

impl Probe for LstmProbe {
    fn loss(&self, x: &Tensor) -> f64 {
        let (_, h, w) = x.chw();
        let mut state = LstmState::zeros(self.cell.hidden, h, w);
        let mut total = 0.0;
        for (t, xt) in self.split(x).iter().enumerate() {
            state = self.cell.forward(xt, &state).0;
            total += state.h.dot(&self.proj_h[t]);
        }
        total + state.c.dot(&self.proj_c)
    }

    fn grad(&mut self, x: &Tensor) -> Tensor {
        let (_, h, w) = x.chw();
        let inputs = self.split(x);
        let mut state = LstmState::zeros(self.cell.hidden, h, w);
        let mut caches = Vec::new();
        for xt in &inputs {
            let (next, cache) = self.cell.forward(xt, &state);
            caches.push(cache);
            state = next;
        }
        let mut gh = Tensor::zeros(state.h.shape());
        let mut gc = self.proj_c.clone();
        let mut gx_steps = vec![Tensor::zeros(&[0, 0, 0]); self.steps];
        for t in (0..self.steps).rev() {
            gh.add_assign(&self.proj_h[t]);
            let (gx, prev) = self.cell.backward(&caches[t], &gh, &gc);
            gx_steps[t] = gx;
            gh = prev.h;
            gc = prev.c;
        }
        let refs: Vec<&Tensor> = gx_steps.iter().collect();
        Tensor::concat_channels(&refs)
    }
}

fn check<P: Probe>(probe: &mut P, x: &Tensor) -> GradCheckReport {
    probe.zero_grad();
    let gx = probe.grad(x);
    let analytic_params: Vec<Vec<f64>> =
        probe.params().iter().map(|p| p.grad.data().to_vec()).collect();

    let mut max_err: f64 = 0.0;
    let mut checked = 0;

    let mut xp = x.clone();
    for k in 0..x.len() {
        let orig = xp.data()[k];
        xp.data_mut()[k] = orig + FD_STEP;
        let lp = probe.loss(&xp);
        xp.data_mut()[k] = orig - FD_STEP;
        let lm = probe.loss(&xp);
        xp.data_mut()[k] = orig;
        max_err = max_err.max(rel_err(gx.data()[k], (lp - lm) / (2.0 * FD_STEP)));
        checked += 1;
    }

    let n_params = analytic_params.len();
    for pi in 0..n_params {
        for k in 0..analytic_params[pi].len() {
            let orig = probe.params()[pi].value.data()[k];
            probe.params_mut()[pi].value.data_mut()[k] = orig + FD_STEP;
            let lp = probe.loss(x);
            probe.params_mut()[pi].value.data_mut()[k] = orig - FD_STEP;
            let lm = probe.loss(x);
            probe.params_mut()[pi].value.data_mut()[k] = orig;
            max_err = max_err.max(rel_err(analytic_params[pi][k], (lp - lm) / (2.0 * FD_STEP)));
            checked += 1;
        }
    }
    GradCheckReport {
        max_rel_error: max_err,
        checked,
    }
}

/// Compare reverse-mode gradients with central differences on random data.
///
/// Panics if the layer has more than 10 000 parameters.
pub fn grad_check<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> GradCheckReport {
    match *spec {
        LayerSpec::ConvLstm { in_channels, hidden, kernel, height, width, steps } => {
            let cell = ConvLstmCell::new("cell", in_channels, hidden, kernel, rng);
            assert!(cell.param_count() <= 10_000, "layer too large for a gradient check");
            // perturb biases away from their structured init
            let mut cell = cell;
            for b in cell.gates.bias.value.data_mut() {
                *b += 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
            let proj_h = (0..steps).map(|_| randn(&[hidden, height, width], rng)).collect();
            let proj_c = randn(&[hidden, height, width], rng);
            let x = randn(&[in_channels * steps, height, width], rng);
            let mut probe = LstmProbe { cell, steps, proj_h, proj_c };
            check(&mut probe, &x)
        }
        _ => {
            let (layer, in_shape) = build_layer(spec, rng);
            let mut net = Sequential::new(vec![layer]);
            for p in net.params_mut() {
                // non-zero biases exercise the bias gradient paths
                if p.name.ends_with("bias") {
                    for b in p.value.data_mut() {
                        *b = 0.1 * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            assert!(net.param_count() <= 10_000, "layer too large for a gradient check");
            let x = randn(&in_shape, rng);
            let y = net.infer(&x);
            let proj = randn(y.shape(), rng);
            let mut probe = SeqProbe { net, proj };
            check(&mut probe, &x)
        }
    }
}

fn build_layer<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> (Layer, Vec<usize>) {
    match *spec {
        LayerSpec::Dense { inputs, outputs } => {
            (Layer::Dense(Dense::new("dense", inputs, outputs, rng)), vec![inputs])
        }
        LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, height, width } => (
            Layer::Conv2d(Conv2d::new("conv", in_channels, out_channels, kernel, stride, rng)),
            vec![in_channels, height, width],
        ),
        LayerSpec::Activation { kind, len } => (Layer::Act(kind), vec![len]),
        LayerSpec::MaxPool { channels, height, width } => {
            (Layer::MaxPool(MaxPool2d), vec![channels, height, width])
        }
        LayerSpec::Upsample { channels, height, width } => {
            (Layer::Upsample(Upsample2d), vec![channels, height, width])
        }
        LayerSpec::ConvLstm { .. } => unreachable!("handled by grad_check"),
    }
}
