//! Action-conditioned video forecaster: convolutional encoder, two
//! ConvLSTM layers with tiled actions concatenated onto the latent, and a
//! convolutional decoder whose output corrects the previous frame in logit
//! space (skip connection, tanh output).

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use stempush_nn::{
    Activation, Adam, Cache, Checkpoint, Conv2d, ConvLstmCell, Layer, LstmCache, LstmState, MaxPool2d, Optimizer,
    Param, Parameterized, Sequential, Tensor, Upsample2d,
};

use crate::error::{ensure, Error, Result};
use crate::rng::SimRng;
use crate::training::{check_params, hash_config, TrainingCurve};
use crate::types::{Pose, TactileFrame};

use super::data::PushRollout;
use super::encoding::{encode_poses, pose_delta, ActionScale, ACTION_DIMS};
use super::PredictorConfig;

const CLIP: f64 = 1.0 - 1e-3;
const LATENT: usize = 8;
const HIDDEN: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageTfmHyperparams {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    /// Cap on training sequences, drawn evenly from the available ones.
    pub max_windows: usize,
    pub window_stride: usize,
}

impl Default for ImageTfmHyperparams {
    fn default() -> Self {
        Self {
            epochs: 9,
            learning_rate: 2e-3,
            batch_size: 4,
            max_windows: 96,
            window_stride: 4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ImageNet {
    pub encoder: Sequential,
    pub lstm1: ConvLstmCell,
    pub lstm2: ConvLstmCell,
    pub decoder: Sequential,
}

impl Parameterized for ImageNet {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.encoder.params();
        p.extend(self.lstm1.params());
        p.extend(self.lstm2.params());
        p.extend(self.decoder.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.encoder.params_mut();
        p.extend(self.lstm1.params_mut());
        p.extend(self.lstm2.params_mut());
        p.extend(self.decoder.params_mut());
        p
    }
}

/// Recurrent state carried between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageState {
    pub s1: LstmState,
    pub s2: LstmState,
}

#[derive(Clone, Debug)]
pub struct ImageTfm {
    pub cfg: PredictorConfig,
    pub size: usize,
    pub net: ImageNet,
    pub scale: ActionScale,
    pub curve: TrainingCurve,
    pub trained: bool,
}

struct StepCache {
    enc: Vec<Cache>,
    l1: LstmCache,
    l2: LstmCache,
    dec: Vec<Cache>,
    /// tanh of the output logits
    out: Vec<f64>,
}

#[derive(Serialize)]
struct Arch<'a> {
    cfg: &'a PredictorConfig,
    size: usize,
    latent: usize,
    hidden: usize,
}

fn tile(action: &[f64; ACTION_DIMS], side: usize) -> Tensor {
    let n = side * side;
    let mut data = Vec::with_capacity(ACTION_DIMS * n);
    for a in action {
        data.extend(std::iter::repeat(*a).take(n));
    }
    Tensor::from_vec(&[ACTION_DIMS, side, side], data)
}

fn logit_of(x: &Tensor) -> Tensor {
    x.map(|v| (2.0 * v - 1.0).clamp(-CLIP, CLIP).atanh())
}

impl ImageTfm {
    pub fn new(cfg: PredictorConfig, size: usize, rng: &mut SimRng) -> Result<Self> {
        cfg.validate()?;
        ensure(size == 32 || size == 64, "resolution", || format!("{size} not in {{32, 64}}"))?;
        let encoder = Sequential::new(vec![
            Layer::Conv2d(Conv2d::new("img.enc1", 3, LATENT, 3, 1, rng)),
            Layer::Act(Activation::Relu),
            Layer::MaxPool(MaxPool2d),
            Layer::Conv2d(Conv2d::new("img.enc2", LATENT, LATENT, 3, 1, rng)),
            Layer::Act(Activation::Relu),
            Layer::MaxPool(MaxPool2d),
        ]);
        let lstm1 = ConvLstmCell::new("img.lstm1", LATENT + ACTION_DIMS, HIDDEN, 3, rng);
        let lstm2 = ConvLstmCell::new("img.lstm2", HIDDEN, HIDDEN, 3, rng);
        let mut last = Conv2d::new("img.dec2", LATENT, 3, 3, 1, rng);
        // zero correction: the untrained model repeats its input frame
        last.weight.value.fill(0.0);
        let decoder = Sequential::new(vec![
            Layer::Upsample(Upsample2d),
            Layer::Conv2d(Conv2d::new("img.dec1", HIDDEN, LATENT, 3, 1, rng)),
            Layer::Act(Activation::Relu),
            Layer::Upsample(Upsample2d),
            Layer::Conv2d(last),
        ]);
        Ok(Self {
            cfg,
            size,
            net: ImageNet {
                encoder,
                lstm1,
                lstm2,
                decoder,
            },
            scale: ActionScale::unit(),
            curve: TrainingCurve::default(),
            trained: false,
        })
    }

    fn latent_side(&self) -> usize {
        self.size / 4
    }

    pub fn initial_state(&self) -> ImageState {
        let s = self.latent_side();
        ImageState {
            s1: LstmState::zeros(HIDDEN, s, s),
            s2: LstmState::zeros(HIDDEN, s, s),
        }
    }

    /// Multiply-accumulates of one step.
    pub fn macs(&self) -> usize {
        let (n, s) = (self.size, self.latent_side());
        let conv = |l: &Layer, side: usize| match l {
            Layer::Conv2d(c) => c.macs(side, side),
            _ => 0,
        };
        conv(&self.net.encoder.layers[0], n)
            + conv(&self.net.encoder.layers[3], n / 2)
            + self.net.lstm1.macs(s, s)
            + self.net.lstm2.macs(s, s)
            + conv(&self.net.decoder.layers[1], n / 2)
            + conv(&self.net.decoder.layers[4], n)
    }

    /// One step: predict the next frame from the previous one and the action.
    pub fn step(&self, state: &ImageState, x_prev: &Tensor, action: &[f64; ACTION_DIMS]) -> (ImageState, Tensor) {
        let (next, x, _) = self.step_cached(state, x_prev, action);
        (next, x)
    }

    fn step_cached(
        &self,
        state: &ImageState,
        x_prev: &Tensor,
        action: &[f64; ACTION_DIMS],
    ) -> (ImageState, Tensor, StepCache) {
        let (latent, enc) = self.net.encoder.forward(x_prev);
        let input = Tensor::concat_channels(&[&latent, &tile(action, self.latent_side())]);
        let (s1, l1) = self.net.lstm1.forward(&input, &state.s1);
        let (s2, l2) = self.net.lstm2.forward(&s1.h, &state.s2);
        let (delta, dec) = self.net.decoder.forward(&s2.h);
        let base = logit_of(x_prev);
        let out: Vec<f64> = base.data().iter().zip(delta.data()).map(|(b, d)| (b + d).tanh()).collect();
        let x = Tensor::from_vec(x_prev.shape(), out.iter().map(|t| 0.5 * (t + 1.0)).collect());
        (ImageState { s1, s2 }, x, StepCache { enc, l1, l2, dec, out })
    }

    /// Encoded per-step actions for a sequence of poses, relative to `anchor`.
    pub fn encode(&self, anchor: &Pose, poses: &[Pose]) -> Vec<[f64; ACTION_DIMS]> {
        encode_poses(anchor, poses, &self.scale)
    }

    /// Warm up on the context, then roll out autoregressively over the
    /// planned poses. Returns one frame per planned pose. Fed-back frames
    /// pass through the 32-bit frame representation, so feeding a returned
    /// frame back through [`step`](Self::step) reproduces the next one.
    pub fn forecast_frames(
        &self,
        context: &[TactileFrame],
        context_poses: &[Pose],
        planned: &[Pose],
    ) -> Result<Vec<TactileFrame>> {
        ensure(!context.is_empty() && context.len() == context_poses.len(), "context", || {
            "frames and poses must be non-empty and of equal length".into()
        })?;
        ensure(context.iter().all(|f| f.size == self.size), "frame", || {
            format!("model expects {0}x{0} frames", self.size)
        })?;
        let anchor = context_poses[context_poses.len() - 1];
        let ctx_actions = self.encode(&anchor, context_poses);
        let plan_actions = self.encode(&anchor, planned);
        let mut state = self.initial_state();
        for t in 1..context.len() {
            state = self.step(&state, &context[t - 1].to_tensor(), &ctx_actions[t]).0;
        }
        let mut x = context[context.len() - 1].to_tensor();
        let mut out = Vec::with_capacity(planned.len());
        let dt = 1.0 / self.cfg.frame_hz;
        let t0 = context[context.len() - 1].timestamp;
        for (i, a) in plan_actions.iter().enumerate() {
            let (s, y) = self.step(&state, &x, a);
            state = s;
            let frame = TactileFrame::from_tensor(&y, t0 + (i + 1) as f64 * dt);
            x = frame.to_tensor();
            out.push(frame);
        }
        Ok(out)
    }

    pub fn config_hash(&self) -> [u8; 32] {
        hash_config(
            "image_tfm",
            &Arch {
                cfg: &self.cfg,
                size: self.size,
                latent: LATENT,
                hidden: HIDDEN,
            },
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint::from_model(&self.net, self.config_hash())
            .with_tensor("action_scale", Tensor::from_vec(&[ACTION_DIMS], self.scale.0.to_vec()));
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        ck.write_to(std::io::BufWriter::new(f))?;
        Ok(())
    }

    pub fn load(path: &Path, cfg: PredictorConfig, size: usize) -> Result<Self> {
        let mut model = Self::new(cfg, size, &mut SimRng::new(0))?;
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ck = Checkpoint::read_from(std::io::BufReader::new(f), &model.config_hash())?;
        ck.load_into(&mut model.net)?;
        let s = ck.tensor("action_scale")?.data();
        model.scale = ActionScale(s.try_into().map_err(|_| Error::Config("bad action_scale".into()))?);
        model.trained = true;
        Ok(model)
    }

    /// Forward and backward through one sequence. `self_feed[t]` chooses the
    /// model's own (detached) previous output as input at horizon step `t`.
    /// Accumulates gradients scaled by `weight`; returns the mean pixel
    /// squared error over the horizon.
    fn train_sequence(
        &mut self,
        frames: &[Tensor],
        actions: &[[f64; ACTION_DIMS]],
        self_feed: &[bool],
        weight: f64,
    ) -> f64 {
        let c = self.cfg.context;
        let total = frames.len();
        let mut state = self.initial_state();
        let mut caches = Vec::with_capacity(total - 1);
        let mut outputs: Vec<Tensor> = Vec::with_capacity(total - 1);
        for t in 1..total {
            let input = if t > c && self_feed[t] {
                outputs[t - 2].clone()
            } else {
                frames[t - 1].clone()
            };
            let (s, y, cache) = self.step_cached(&state, &input, &actions[t]);
            state = s;
            outputs.push(y);
            caches.push(cache);
        }
        let npx = frames[0].len() as f64;
        let horizon = (total - c) as f64;
        let mut loss = 0.0;

        let side = self.latent_side();
        let mut g1 = LstmState::zeros(HIDDEN, side, side);
        let mut g2 = LstmState::zeros(HIDDEN, side, side);
        for t in (1..total).rev() {
            let cache = &caches[t - 1];
            let mut gh2 = g2.h.clone();
            if t >= c {
                let y = outputs[t - 1].data();
                let target = frames[t].data();
                let mut gd = vec![0.0; y.len()];
                for k in 0..y.len() {
                    let err = y[k] - target[k];
                    loss += err * err / (npx * horizon);
                    let dy = 2.0 * err / (npx * horizon) * weight;
                    gd[k] = dy * 0.5 * (1.0 - cache.out[k] * cache.out[k]);
                }
                let gdelta = Tensor::from_vec(outputs[t - 1].shape(), gd);
                gh2.add_assign(&self.net.decoder.backward(&cache.dec, &gdelta));
            }
            let (gx2, gs2) = self.net.lstm2.backward(&cache.l2, &gh2, &g2.c);
            g2 = gs2;
            let mut gh1 = g1.h.clone();
            gh1.add_assign(&gx2);
            let (gin, gs1) = self.net.lstm1.backward(&cache.l1, &gh1, &g1.c);
            g1 = gs1;
            let parts = gin.split_channels(&[LATENT, ACTION_DIMS]);
            self.net.encoder.backward(&cache.enc, &parts[0]);
        }
        loss
    }
}

/// Sequences of `context + horizon` frames that end their context in
/// contact, as `(rollout, first frame)` pairs.
pub fn image_windows(rollouts: &[PushRollout], cfg: &PredictorConfig, stride: usize) -> Vec<(usize, usize)> {
    let len = cfg.context + cfg.horizon;
    let mut out = Vec::new();
    for (ri, r) in rollouts.iter().enumerate() {
        let mut start = 0;
        while start + len <= r.frames.len() {
            if r.u_true[start + cfg.context - 1].is_some() {
                out.push((ri, start));
            }
            start += stride.max(1);
        }
    }
    out
}

fn sequence(model: &ImageTfm, r: &PushRollout, start: usize) -> (Vec<Tensor>, Vec<[f64; ACTION_DIMS]>) {
    let len = model.cfg.context + model.cfg.horizon;
    let frames = r.frames[start..start + len].iter().map(|f| f.to_tensor()).collect();
    let poses = &r.poses[start..start + len];
    let actions = model.encode(&poses[model.cfg.context - 1], poses);
    (frames, actions)
}

/// Share of horizon steps fed with the model's own output at `epoch`: none
/// for the first third of training, then a linear ramp to all.
pub fn self_feed_probability(epoch: usize, epochs: usize) -> f64 {
    let start = epochs / 3;
    if epoch < start || epochs <= start + 1 {
        return 0.0;
    }
    ((epoch - start) as f64 / (epochs - 1 - start) as f64).min(1.0)
}

pub fn train_image_tfm(
    rollouts: &[PushRollout],
    cfg: PredictorConfig,
    hp: &ImageTfmHyperparams,
    rng: &SimRng,
) -> Result<ImageTfm> {
    ensure(hp.epochs >= 1 && hp.batch_size >= 1 && hp.max_windows >= 1, "image_tfm", || {
        "epochs, batch_size and max_windows must be positive".into()
    })?;
    let size = rollouts
        .first()
        .and_then(|r| r.frames.first())
        .map(|f| f.size)
        .ok_or_else(|| Error::validation("dataset", "no frames"))?;
    let mut model = ImageTfm::new(cfg, size, &mut rng.split("image-init"))?;
    let mut windows = image_windows(rollouts, &cfg, hp.window_stride);
    ensure(!windows.is_empty(), "dataset", || "no sequences long enough with contact".into())?;
    if windows.len() > hp.max_windows {
        let n = windows.len();
        windows = (0..hp.max_windows).map(|k| windows[k * n / hp.max_windows]).collect();
    }
    let deltas: Vec<[f64; ACTION_DIMS]> = windows
        .iter()
        .flat_map(|&(ri, start)| {
            let poses = &rollouts[ri].poses[start..start + cfg.context + cfg.horizon];
            let anchor = poses[cfg.context - 1];
            poses.iter().map(move |p| pose_delta(&anchor, p)).collect::<Vec<_>>()
        })
        .collect();
    model.scale = ActionScale::fit(deltas.iter());

    let mut opt = Adam::new(hp.learning_rate);
    let mut order_rng = rng.split("image-order");
    let len = cfg.context + cfg.horizon;
    for epoch in 0..hp.epochs {
        let p = self_feed_probability(epoch, hp.epochs);
        let order = crate::training::shuffled(windows.len(), &mut order_rng);
        let mut total = 0.0;
        for batch in order.chunks(hp.batch_size) {
            for &i in batch {
                let (ri, start) = windows[i];
                let (frames, actions) = sequence(&model, &rollouts[ri], start);
                let feed: Vec<bool> = (0..len).map(|_| order_rng.gen_bool(p)).collect();
                total += model.train_sequence(&frames, &actions, &feed, 1.0 / batch.len() as f64);
            }
            opt.step(model.net.params_mut());
        }
        let loss = total / windows.len() as f64;
        model.curve.check(loss, "training")?;
        model.curve.train.push(loss);
        check_params(&model.net, &model.curve)?;
    }
    model.trained = true;
    Ok(model)
}

/// Mean horizon pixel MSE of the model and of persistence over sequences.
pub fn image_horizon_mse(model: &ImageTfm, rollouts: &[PushRollout], windows: &[(usize, usize)]) -> Result<(f64, f64)> {
    let c = model.cfg.context;
    let len = c + model.cfg.horizon;
    let mut m = 0.0;
    let mut p = 0.0;
    let mut n = 0usize;
    for &(ri, start) in windows {
        let r = &rollouts[ri];
        let frames = &r.frames[start..start + len];
        let poses = &r.poses[start..start + len];
        let pred = model.forecast_frames(&frames[..c], &poses[..c], &poses[c..])?;
        let last = &frames[c - 1];
        for (k, f) in pred.iter().enumerate() {
            let truth = &frames[c + k];
            for ((a, b), l) in f.pixels.iter().zip(&truth.pixels).zip(&last.pixels) {
                m += f64::from(a - b).powi(2);
                p += f64::from(l - b).powi(2);
                n += 1;
            }
        }
    }
    Ok((m / n.max(1) as f64, p / n.max(1) as f64))
}
