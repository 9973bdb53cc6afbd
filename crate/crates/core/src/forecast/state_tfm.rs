//! Direct state-space forecaster: a dense network from measured locations
//! and pose deltas to future locations.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stempush_nn::{Activation, Adam, Checkpoint, Dense, Layer, Optimizer, Parameterized, Sequential, Tensor};

use crate::error::{ensure, Error, Result};
use crate::rng::SimRng;
use crate::training::{check_params, hash_config, shuffled, TrainingCurve};
use crate::types::Pose;

use super::data::{PushRollout, Window};
use super::encoding::{encode_poses, pose_delta, ActionScale, ACTION_DIMS};
use super::PredictorConfig;

/// Locations enter and leave the network in units of this many u.
const S_SCALE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateTfmHyperparams {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Frames between consecutive training windows.
    pub window_stride: usize,
}

impl Default for StateTfmHyperparams {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 40,
            batch_size: 32,
            learning_rate: 1e-3,
            window_stride: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StateTfm {
    pub cfg: PredictorConfig,
    pub hidden: usize,
    pub net: Sequential,
    pub scale: ActionScale,
    pub curve: TrainingCurve,
    pub trained: bool,
}

#[derive(Serialize)]
struct Arch<'a> {
    cfg: &'a PredictorConfig,
    hidden: usize,
}

impl StateTfm {
    pub fn input_len(cfg: &PredictorConfig) -> usize {
        cfg.context + 1 + (cfg.context + cfg.horizon) * ACTION_DIMS
    }

    pub fn new(cfg: PredictorConfig, hidden: usize, rng: &mut SimRng) -> Result<Self> {
        cfg.validate()?;
        ensure(hidden >= 1, "state_tfm.hidden", || "must be positive".into())?;
        let mut out = Dense::new("state.out", hidden, cfg.horizon, rng);
        // zero output layer: the untrained model is the persistence forecast
        out.weight.value.fill(0.0);
        let net = Sequential::new(vec![
            Layer::Dense(Dense::new("state.fc1", Self::input_len(&cfg), hidden, rng)),
            Layer::Act(Activation::Tanh),
            Layer::Dense(Dense::new("state.fc2", hidden, hidden, rng)),
            Layer::Act(Activation::Tanh),
            Layer::Dense(out),
        ]);
        Ok(Self {
            cfg,
            hidden,
            net,
            scale: ActionScale::unit(),
            curve: TrainingCurve::default(),
            trained: false,
        })
    }

    pub fn macs(&self) -> usize {
        self.net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => d.inputs() * d.outputs(),
                _ => 0,
            })
            .sum()
    }

    pub fn features(&self, context_s: &[f64], context_poses: &[Pose], planned: &[Pose]) -> Tensor {
        let s_last = *context_s.last().expect("non-empty context");
        let anchor = context_poses.last().expect("non-empty context");
        let mut x = Vec::with_capacity(Self::input_len(&self.cfg));
        x.extend(context_s.iter().map(|s| (s - s_last) / S_SCALE));
        x.push(s_last);
        for d in encode_poses(anchor, context_poses, &self.scale)
            .iter()
            .chain(&encode_poses(anchor, planned, &self.scale))
        {
            x.extend_from_slice(d);
        }
        Tensor::from_vec(&[x.len()], x)
    }

    /// Unclamped forecast.
    fn raw(&self, context_s: &[f64], context_poses: &[Pose], planned: &[Pose]) -> Vec<f64> {
        let s_last = *context_s.last().expect("non-empty context");
        let y = self.net.infer(&self.features(context_s, context_poses, planned));
        y.data().iter().map(|d| s_last + S_SCALE * d).collect()
    }

    /// Forecast clamped to [0, 1].
    pub fn forecast(&self, context_s: &[f64], context_poses: &[Pose], planned: &[Pose]) -> Vec<f64> {
        self.raw(context_s, context_poses, planned)
            .into_iter()
            .map(|s| s.clamp(0.0, 1.0))
            .collect()
    }

    pub fn config_hash(&self) -> [u8; 32] {
        hash_config("state_tfm", &Arch { cfg: &self.cfg, hidden: self.hidden })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint::from_model(&self.net, self.config_hash())
            .with_tensor("action_scale", Tensor::from_vec(&[ACTION_DIMS], self.scale.0.to_vec()));
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        ck.write_to(std::io::BufWriter::new(f))?;
        Ok(())
    }

    pub fn load(path: &Path, cfg: PredictorConfig, hidden: usize) -> Result<Self> {
        let mut model = Self::new(cfg, hidden, &mut SimRng::new(0))?;
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ck = Checkpoint::read_from(std::io::BufReader::new(f), &model.config_hash())?;
        ck.load_into(&mut model.net)?;
        let s = ck.tensor("action_scale")?.data();
        model.scale = ActionScale(s.try_into().map_err(|_| Error::Config("bad action_scale".into()))?);
        model.trained = true;
        Ok(model)
    }
}

/// Poses for window `w`: context then horizon.
fn window_poses<'a>(rollouts: &'a [PushRollout], cfg: &PredictorConfig, w: &Window) -> (&'a [Pose], &'a [Pose]) {
    let poses = &rollouts[w.rollout].poses;
    (&poses[w.k + 1 - cfg.context..=w.k], &poses[w.k + 1..=w.k + cfg.horizon])
}

pub fn train_state_tfm(
    rollouts: &[PushRollout],
    windows: &[Window],
    cfg: PredictorConfig,
    hp: &StateTfmHyperparams,
    rng: &SimRng,
) -> Result<StateTfm> {
    ensure(!windows.is_empty(), "dataset", || "no training windows with contact".into())?;
    ensure(hp.epochs >= 1 && hp.batch_size >= 1, "state_tfm", || "epochs and batch_size must be positive".into())?;
    let mut model = StateTfm::new(cfg, hp.hidden, &mut rng.split("state-init"))?;
    let deltas: Vec<[f64; ACTION_DIMS]> = windows
        .iter()
        .flat_map(|w| {
            let (ctx, plan) = window_poses(rollouts, &cfg, w);
            let anchor = ctx[ctx.len() - 1];
            ctx.iter().chain(plan).map(move |p| pose_delta(&anchor, p)).collect::<Vec<_>>()
        })
        .collect();
    model.scale = ActionScale::fit(deltas.iter());

    let inputs: Vec<Tensor> = windows
        .iter()
        .map(|w| {
            let (ctx, plan) = window_poses(rollouts, &cfg, w);
            model.features(&w.context_s, ctx, plan)
        })
        .collect();
    let targets: Vec<Vec<f64>> = windows
        .iter()
        .map(|w| {
            let last = *w.context_s.last().expect("context");
            w.target_s.iter().map(|s| (s - last) / S_SCALE).collect()
        })
        .collect();

    let mut opt = Adam::new(hp.learning_rate);
    let mut order_rng = rng.split("state-order");
    let h = cfg.horizon as f64;
    for _ in 0..hp.epochs {
        let mut total = 0.0;
        for batch in shuffled(windows.len(), &mut order_rng).chunks(hp.batch_size) {
            for &i in batch {
                let (y, caches) = model.net.forward(&inputs[i]);
                let mut grad = vec![0.0; cfg.horizon];
                for (k, g) in grad.iter_mut().enumerate() {
                    let err = y.data()[k] - targets[i][k];
                    total += err * err / h;
                    *g = 2.0 * err / h / batch.len() as f64;
                }
                model.net.backward(&caches, &Tensor::from_vec(&[cfg.horizon], grad));
            }
            opt.step(model.net.params_mut());
        }
        // report the loss in u^2
        let loss = total / windows.len() as f64 * S_SCALE * S_SCALE;
        model.curve.check(loss, "training")?;
        model.curve.train.push(loss);
        check_params(&model.net, &model.curve)?;
    }
    model.trained = true;
    Ok(model)
}

/// Mean absolute horizon error of the model and of persistence on `windows`.
pub fn state_horizon_mae(model: &StateTfm, rollouts: &[PushRollout], windows: &[Window]) -> (f64, f64) {
    let mut m = 0.0;
    let mut p = 0.0;
    let mut n = 0usize;
    for w in windows {
        let (ctx, plan) = window_poses(rollouts, &model.cfg, w);
        let f = model.forecast(&w.context_s, ctx, plan);
        let last = *w.context_s.last().expect("context");
        for (k, t) in w.target_s.iter().enumerate() {
            m += (f[k] - t).abs();
            p += (last - t).abs();
            n += 1;
        }
    }
    (m / n.max(1) as f64, p / n.max(1) as f64)
}
