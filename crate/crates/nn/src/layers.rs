//! Feed-forward layer kinds and a sequential container.
//!
//! Layers are stateless with respect to activations: `forward` returns the
//! output together with a cache, and `backward` consumes that cache. The same
//! layer can therefore be applied many times (e.g. once per time step) and
//! back-propagated through each application independently.

use rand::Rng;

use crate::param::{Param, Parameterized};
use crate::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn forward(self, x: &Tensor) -> Tensor {
        x.map(|v| self.apply(v))
    }

    pub fn backward(self, output: &Tensor, grad_out: &Tensor) -> Tensor {
        let data = output
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&y, &g)| g * self.derivative_from_output(y))
            .collect();
        Tensor::from_vec(output.shape(), data)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer; flattens its input.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::glorot(
                format!("{name}.weight"),
                &[outputs, inputs],
                inputs,
                outputs,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (n_out, n_in) = (self.outputs(), self.inputs());
        assert_eq!(x.len(), n_in, "dense input size");
        let w = self.weight.value.data();
        let xs = x.data();
        let mut out = self.bias.value.data().to_vec();
        for (o, acc) in out.iter_mut().enumerate() {
            let row = &w[o * n_in..(o + 1) * n_in];
            *acc += row.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
        }
        Tensor::from_vec(&[n_out], out)
    }

    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Tensor {
        let n_in = self.inputs();
        let g = grad_out.data();
        let xs = x.data();
        let w = self.weight.value.data();
        let gw = self.weight.grad.data_mut();
        let mut gx = vec![0.0; n_in];
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            let row = &w[o * n_in..(o + 1) * n_in];
            let grow = &mut gw[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                grow[i] += go * xs[i];
                gx[i] += go * row[i];
            }
        }
        for (b, &go) in self.bias.grad.data_mut().iter_mut().zip(g) {
            *b += go;
        }
        Tensor::from_vec(x.shape(), gx)
    }
}

/// 2-D convolution over `[c, h, w]` with square kernels and zero padding.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    /// `padding = kernel / 2` ("same" for stride 1).
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let fan_out = out_channels * kernel * kernel;
        Self {
            weight: Param::glorot(
                format!("{name}.weight"),
                &[out_channels, in_channels, kernel, kernel],
                fan_in,
                fan_out,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_channels]),
            stride,
            padding: kernel / 2,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape()[2]
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel();
        (
            (h + 2 * self.padding - k) / self.stride + 1,
            (w + 2 * self.padding - k) / self.stride + 1,
        )
    }

    /// Multiply-accumulate count of one forward pass at the given input size.
    pub fn macs(&self, h: usize, w: usize) -> usize {
        let (oh, ow) = self.output_size(h, w);
        oh * ow * self.out_channels() * self.in_channels() * self.kernel() * self.kernel()
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (c, h, w) = x.chw();
        assert_eq!(c, self.in_channels(), "conv input channels");
        let (oc_n, k, s, p) = (self.out_channels(), self.kernel(), self.stride, self.padding);
        let (oh, ow) = self.output_size(h, w);
        let wt = self.weight.value.data();
        let xs = x.data();
        let mut out = vec![0.0; oc_n * oh * ow];
        for oc in 0..oc_n {
            let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
            plane.fill(self.bias.value.data()[oc]);
            for ic in 0..c {
                let xin = &xs[ic * h * w..(ic + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wt[((oc * c + ic) * k + ky) * k + kx];
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = &xin[iy as usize * w..(iy as usize + 1) * w];
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            for (ox, o) in orow.iter_mut().enumerate() {
                                let ix = (ox * s + kx) as isize - p as isize;
                                if ix >= 0 && ix < w as isize {
                                    *o += wv * xrow[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::from_vec(&[oc_n, oh, ow], out)
    }

    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Tensor {
        let (c, h, w) = x.chw();
        let (oc_n, k, s, p) = (self.out_channels(), self.kernel(), self.stride, self.padding);
        let (_, oh, ow) = grad_out.chw();
        let wt = self.weight.value.data();
        let xs = x.data();
        let g = grad_out.data();
        let mut gx = vec![0.0; c * h * w];
        let gw = self.weight.grad.data_mut();
        for oc in 0..oc_n {
            let gplane = &g[oc * oh * ow..(oc + 1) * oh * ow];
            self.bias.grad.data_mut()[oc] += gplane.iter().sum::<f64>();
            for ic in 0..c {
                let xin = &xs[ic * h * w..(ic + 1) * h * w];
                let gxin = &mut gx[ic * h * w..(ic + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((oc * c + ic) * k + ky) * k + kx;
                        let wv = wt[widx];
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let base = iy as usize * w;
                            let grow = &gplane[oy * ow..(oy + 1) * ow];
                            for (ox, &go) in grow.iter().enumerate() {
                                let ix = (ox * s + kx) as isize - p as isize;
                                if ix >= 0 && ix < w as isize {
                                    let idx = base + ix as usize;
                                    acc += go * xin[idx];
                                    gxin[idx] += go * wv;
                                }
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
        Tensor::from_vec(&[c, h, w], gx)
    }
}

/// 2x2 max pooling with stride 2. Odd trailing rows/columns are dropped.
#[derive(Clone, Copy, Debug, Default)]
pub struct MaxPool2d;

impl MaxPool2d {
    pub fn forward(&self, x: &Tensor) -> (Tensor, Vec<usize>) {
        let (c, h, w) = x.chw();
        let (oh, ow) = (h / 2, w / 2);
        let xs = x.data();
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = usize::MAX;
                    let mut best_v = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = (ch * h + oy * 2 + dy) * w + ox * 2 + dx;
                            if xs[idx] > best_v {
                                best_v = xs[idx];
                                best = idx;
                            }
                        }
                    }
                    out.push(best_v);
                    argmax.push(best);
                }
            }
        }
        (Tensor::from_vec(&[c, oh, ow], out), argmax)
    }

    pub fn backward(&self, input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
        let mut gx = Tensor::zeros(input_shape);
        let d = gx.data_mut();
        for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
            d[idx] += g;
        }
        gx
    }
}

/// Nearest-neighbour 2x spatial upsampling.
#[derive(Clone, Copy, Debug, Default)]
pub struct Upsample2d;

impl Upsample2d {
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (c, h, w) = x.chw();
        let (oh, ow) = (h * 2, w * 2);
        let xs = x.data();
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    out[(ch * oh + oy) * ow + ox] = xs[(ch * h + oy / 2) * w + ox / 2];
                }
            }
        }
        Tensor::from_vec(&[c, oh, ow], out)
    }

    pub fn backward(&self, grad_out: &Tensor) -> Tensor {
        let (c, oh, ow) = grad_out.chw();
        let (h, w) = (oh / 2, ow / 2);
        let g = grad_out.data();
        let mut gx = vec![0.0; c * h * w];
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    gx[(ch * h + oy / 2) * w + ox / 2] += g[(ch * oh + oy) * ow + ox];
                }
            }
        }
        Tensor::from_vec(&[c, h, w], gx)
    }
}

#[derive(Clone, Debug)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    Act(Activation),
    MaxPool(MaxPool2d),
    Upsample(Upsample2d),
    Flatten,
}

/// Per-layer activation record needed by the backward pass.
#[derive(Clone, Debug)]
pub enum Cache {
    Input(Tensor),
    Output(Tensor),
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Shape(Vec<usize>),
    None,
}

impl Layer {
    pub fn forward(&self, x: &Tensor) -> (Tensor, Cache) {
        match self {
            Layer::Dense(d) => (d.forward(x), Cache::Input(x.clone())),
            Layer::Conv2d(c) => (c.forward(x), Cache::Input(x.clone())),
            Layer::Act(a) => {
                let y = a.forward(x);
                (y.clone(), Cache::Output(y))
            }
            Layer::MaxPool(p) => {
                let (y, argmax) = p.forward(x);
                (
                    y,
                    Cache::Pool {
                        input_shape: x.shape().to_vec(),
                        argmax,
                    },
                )
            }
            Layer::Upsample(u) => (u.forward(x), Cache::None),
            Layer::Flatten => (
                x.clone().reshape(&[x.len()]),
                Cache::Shape(x.shape().to_vec()),
            ),
        }
    }

    pub fn backward(&mut self, cache: &Cache, grad_out: &Tensor) -> Tensor {
        match (self, cache) {
            (Layer::Dense(d), Cache::Input(x)) => d.backward(x, grad_out),
            (Layer::Conv2d(c), Cache::Input(x)) => c.backward(x, grad_out),
            (Layer::Act(a), Cache::Output(y)) => a.backward(y, grad_out),
            (Layer::MaxPool(p), Cache::Pool { input_shape, argmax }) => {
                p.backward(input_shape, argmax, grad_out)
            }
            (Layer::Upsample(u), Cache::None) => u.backward(grad_out),
            (Layer::Flatten, Cache::Shape(shape)) => grad_out.clone().reshape(shape),
            (layer, cache) => panic!("cache {cache:?} does not belong to layer {layer:?}"),
        }
    }

    fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            _ => Vec::new(),
        }
    }
}

/// A chain of layers applied in order.
#[derive(Clone, Debug, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, Vec<Cache>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&cur);
            caches.push(cache);
            cur = y;
        }
        (cur, caches)
    }

    /// Forward pass without keeping caches.
    pub fn infer(&self, x: &Tensor) -> Tensor {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur).0;
        }
        cur
    }

    pub fn backward(&mut self, caches: &[Cache], grad_out: &Tensor) -> Tensor {
        let mut g = grad_out.clone();
        for (layer, cache) in self.layers.iter_mut().zip(caches).rev() {
            g = layer.backward(cache, &g);
        }
        g
    }
}

impl Parameterized for Sequential {
    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_output_size_stride_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let conv = Conv2d::new("c", 3, 4, 3, 2, &mut rng);
        let y = conv.forward(&Tensor::zeros(&[3, 64, 64]));
        assert_eq!(y.shape(), &[4, 32, 32]);
    }

    #[test]
    fn pool_then_upsample_shapes() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, 5.0, 3.0, 2.0]);
        let (y, argmax) = MaxPool2d.forward(&x);
        assert_eq!(y.data(), &[5.0]);
        assert_eq!(argmax, vec![1]);
        let up = Upsample2d.forward(&y);
        assert_eq!(up.data(), &[5.0; 4]);
    }

    #[test]
    fn dense_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Dense::new("d", 2, 1, &mut rng);
        d.weight.value = Tensor::from_vec(&[1, 2], vec![2.0, -1.0]);
        d.bias.value = Tensor::from_vec(&[1], vec![0.5]);
        let y = d.forward(&Tensor::from_vec(&[2], vec![3.0, 4.0]));
        assert_eq!(y.data(), &[2.5]);
    }
}
