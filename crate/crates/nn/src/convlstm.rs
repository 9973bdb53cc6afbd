//! Convolutional LSTM cell.
//!
//! Gates are a single convolution over `[input, h_prev]` producing
//! `4 * hidden` channels ordered input, forget, output, candidate.

use rand::Rng;

use crate::layers::{sigmoid, Conv2d};
use crate::param::{Param, Parameterized};
use crate::Tensor;

#[derive(Clone, Debug)]
pub struct ConvLstmCell {
    pub gates: Conv2d,
    pub hidden: usize,
}

/// Recurrent state `(h, c)`, both `[hidden, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

impl LstmState {
    pub fn zeros(hidden: usize, height: usize, width: usize) -> Self {
        Self {
            h: Tensor::zeros(&[hidden, height, width]),
            c: Tensor::zeros(&[hidden, height, width]),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    stacked: Tensor,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    input_channels: usize,
}

impl ConvLstmCell {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        input_channels: usize,
        hidden: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let mut gates = Conv2d::new(
            &format!("{name}.gates"),
            input_channels + hidden,
            4 * hidden,
            kernel,
            1,
            rng,
        );
        // forget-gate bias of one keeps early gradients alive through time
        for b in &mut gates.bias.value.data_mut()[hidden..2 * hidden] {
            *b = 1.0;
        }
        Self { gates, hidden }
    }

    pub fn input_channels(&self) -> usize {
        self.gates.in_channels() - self.hidden
    }

    pub fn macs(&self, h: usize, w: usize) -> usize {
        self.gates.macs(h, w)
    }

    pub fn forward(&self, x: &Tensor, state: &LstmState) -> (LstmState, LstmCache) {
        let (_, hh, ww) = x.chw();
        let stacked = Tensor::concat_channels(&[x, &state.h]);
        let pre = self.gates.forward(&stacked);
        let n = self.hidden * hh * ww;
        let p = pre.data();
        let i: Vec<f64> = p[0..n].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = p[n..2 * n].iter().map(|&v| sigmoid(v)).collect();
        let o: Vec<f64> = p[2 * n..3 * n].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = p[3 * n..4 * n].iter().map(|&v| v.tanh()).collect();
        let c_prev = state.c.data().to_vec();
        let c_new: Vec<f64> = (0..n).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<f64> = (0..n).map(|k| o[k] * tanh_c[k]).collect();
        let shape = [self.hidden, hh, ww];
        (
            LstmState {
                h: Tensor::from_vec(&shape, h_new),
                c: Tensor::from_vec(&shape, c_new),
            },
            LstmCache {
                stacked,
                i,
                f,
                o,
                g,
                c_prev,
                tanh_c,
                input_channels: x.chw().0,
            },
        )
    }

    /// Returns `(grad_x, grad_state_prev)` given gradients w.r.t. the new state.
    pub fn backward(
        &mut self,
        cache: &LstmCache,
        grad_h: &Tensor,
        grad_c: &Tensor,
    ) -> (Tensor, LstmState) {
        let (_, hh, ww) = grad_h.chw();
        let n = self.hidden * hh * ww;
        let gh = grad_h.data();
        let gc_in = grad_c.data();
        let mut gpre = vec![0.0; 4 * n];
        let mut gc_prev = vec![0.0; n];
        for k in 0..n {
            let go = gh[k] * cache.tanh_c[k];
            let gc = gc_in[k] + gh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
            let gi = gc * cache.g[k];
            let gf = gc * cache.c_prev[k];
            let gg = gc * cache.i[k];
            gc_prev[k] = gc * cache.f[k];
            gpre[k] = gi * cache.i[k] * (1.0 - cache.i[k]);
            gpre[n + k] = gf * cache.f[k] * (1.0 - cache.f[k]);
            gpre[2 * n + k] = go * cache.o[k] * (1.0 - cache.o[k]);
            gpre[3 * n + k] = gg * (1.0 - cache.g[k] * cache.g[k]);
        }
        let gpre = Tensor::from_vec(&[4 * self.hidden, hh, ww], gpre);
        let gstacked = self.gates.backward(&cache.stacked, &gpre);
        let mut parts = gstacked.split_channels(&[cache.input_channels, self.hidden]);
        let gh_prev = parts.pop().expect("hidden part");
        let gx = parts.pop().expect("input part");
        (
            gx,
            LstmState {
                h: gh_prev,
                c: Tensor::from_vec(&[self.hidden, hh, ww], gc_prev),
            },
        )
    }
}

impl Parameterized for ConvLstmCell {
    fn params(&self) -> Vec<&Param> {
        vec![&self.gates.weight, &self.gates.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gates.weight, &mut self.gates.bias]
    }
}
