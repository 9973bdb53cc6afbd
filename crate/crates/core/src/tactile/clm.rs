//! Contact localisation model: tactile frame -> axial contact location.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use stempush_nn::{Activation, Adam, Checkpoint, Conv2d, Dense, Layer, Optimizer, Parameterized, Sequential, Tensor};

use crate::error::{ensure, Error, Result};
use crate::rng::SimRng;
use crate::training::{check_params, hash_config, shuffled, TrainingCurve};
use crate::types::TactileFrame;

use super::dataset::ClmSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClmHyperparams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of press locations held out for validation; 0 trains on all.
    pub holdout_fraction: f64,
}

impl Default for ClmHyperparams {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 8,
            learning_rate: 1e-3,
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
struct Arch {
    size: usize,
    conv: [usize; 2],
    dense: [usize; 2],
}

fn arch(size: usize) -> Arch {
    Arch {
        size,
        conv: [8, 16],
        dense: [32, 16],
    }
}

#[derive(Clone, Debug)]
pub struct ClmModel {
    pub size: usize,
    pub net: Sequential,
    pub curve: TrainingCurve,
    /// Mean absolute error on held-out locations, if any were held out.
    pub validation_mae: Option<f64>,
    pub holdout_labels: Vec<f64>,
}

impl ClmModel {
    /// Untrained network for `size x size` frames.
    pub fn new(size: usize, rng: &mut SimRng) -> Result<Self> {
        ensure(size == 32 || size == 64, "resolution", || format!("{size} not in {{32, 64}}"))?;
        let a = arch(size);
        let flat = a.conv[1] * (size / 4) * (size / 4);
        let net = Sequential::new(vec![
            Layer::Conv2d(Conv2d::new("clm.conv1", 3, a.conv[0], 3, 2, rng)),
            Layer::Act(Activation::Relu),
            Layer::Conv2d(Conv2d::new("clm.conv2", a.conv[0], a.conv[1], 3, 2, rng)),
            Layer::Act(Activation::Relu),
            Layer::Flatten,
            Layer::Dense(Dense::new("clm.fc1", flat, a.dense[0], rng)),
            Layer::Act(Activation::Relu),
            Layer::Dense(Dense::new("clm.fc2", a.dense[0], a.dense[1], rng)),
            Layer::Act(Activation::Relu),
            Layer::Dense(Dense::new("clm.out", a.dense[1], 1, rng)),
        ]);
        Ok(Self {
            size,
            net,
            curve: TrainingCurve::default(),
            validation_mae: None,
            holdout_labels: Vec::new(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// Multiply-accumulates of one forward pass.
    pub fn macs(&self) -> usize {
        let mut h = self.size;
        let mut total = 0;
        for layer in &self.net.layers {
            match layer {
                Layer::Conv2d(c) => {
                    total += c.macs(h, h);
                    h = c.output_size(h, h).0;
                }
                Layer::Dense(d) => total += d.inputs() * d.outputs(),
                _ => {}
            }
        }
        total
    }

    fn raw(&self, frame: &TactileFrame) -> f64 {
        self.net.infer(&frame.to_tensor()).data()[0]
    }

    pub fn config_hash(&self) -> [u8; 32] {
        hash_config("clm", &arch(self.size))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint::from_model(&self.net, self.config_hash());
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        ck.write_to(std::io::BufWriter::new(f))?;
        Ok(())
    }

    pub fn load(path: &Path, size: usize) -> Result<Self> {
        let mut model = Self::new(size, &mut SimRng::new(0))?;
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ck = Checkpoint::read_from(std::io::BufReader::new(f), &model.config_hash())?;
        ck.load_into(&mut model.net)?;
        Ok(model)
    }
}

/// Predicted contact location, clamped to [0, 1].
pub fn clm_predict(model: &ClmModel, frame: &TactileFrame) -> Result<f64> {
    ensure(frame.size == model.size, "frame", || {
        format!("model expects {0}x{0} frames, got {1}x{1}", model.size, frame.size)
    })?;
    Ok(model.raw(frame).clamp(0.0, 1.0))
}

/// Labels held out for validation: evenly spread interior locations.
pub fn holdout_labels(labels: &[f64], fraction: f64) -> Vec<f64> {
    let distinct: Vec<f64> = labels
        .iter()
        .map(|u| u.to_bits())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(f64::from_bits)
        .collect();
    let m = (fraction * distinct.len() as f64).round() as usize;
    (0..m)
        .map(|k| distinct[((k + 1) * distinct.len()) / (m + 1)])
        .collect()
}

pub fn train_clm(dataset: &[ClmSample], hp: &ClmHyperparams, rng: &SimRng) -> Result<ClmModel> {
    ensure(dataset.len() >= 50, "dataset", || format!("{} samples, need at least 50", dataset.len()))?;
    ensure(hp.epochs >= 1 && hp.batch_size >= 1, "clm.hyperparams", || "epochs and batch_size must be positive".into())?;
    ensure((0.0..1.0).contains(&hp.holdout_fraction), "clm.holdout_fraction", || "must lie in [0, 1)".into())?;
    let size = dataset[0].frame.size;
    ensure(dataset.iter().all(|s| s.frame.size == size), "dataset", || "mixed resolutions".into())?;

    let labels: Vec<f64> = dataset.iter().map(|s| s.u).collect();
    let held = if hp.holdout_fraction > 0.0 {
        let distinct = labels.iter().map(|u| u.to_bits()).collect::<BTreeSet<_>>().len();
        ensure(distinct >= 5, "dataset", || {
            format!("{distinct} distinct labels; a location hold-out needs at least 5")
        })?;
        holdout_labels(&labels, hp.holdout_fraction)
    } else {
        Vec::new()
    };
    let is_held = |u: f64| held.iter().any(|h| h.to_bits() == u.to_bits());
    let train: Vec<usize> = (0..dataset.len()).filter(|&i| !is_held(dataset[i].u)).collect();
    let val: Vec<usize> = (0..dataset.len()).filter(|&i| is_held(dataset[i].u)).collect();
    let inputs: Vec<Tensor> = dataset.iter().map(|s| s.frame.to_tensor()).collect();

    let mut init_rng = rng.split("clm-init");
    let mut model = ClmModel::new(size, &mut init_rng)?;
    // start from the mean label so early epochs fit shape, not offset
    let mean = train.iter().map(|&i| dataset[i].u).sum::<f64>() / train.len() as f64;
    if let Some(Layer::Dense(out)) = model.net.layers.last_mut() {
        out.bias.value.data_mut()[0] = mean;
    }

    let mut opt = Adam::new(hp.learning_rate);
    let mut order_rng = rng.split("clm-order");
    for _ in 0..hp.epochs {
        let order = shuffled(train.len(), &mut order_rng);
        let mut total = 0.0;
        for batch in order.chunks(hp.batch_size) {
            for &k in batch {
                let i = train[k];
                let (y, caches) = model.net.forward(&inputs[i]);
                let err = y.data()[0] - dataset[i].u;
                total += err * err;
                let grad = Tensor::from_vec(&[1], vec![2.0 * err / batch.len() as f64]);
                model.net.backward(&caches, &grad);
            }
            opt.step(model.net.params_mut());
        }
        let loss = total / train.len() as f64;
        model.curve.check(loss, "training")?;
        model.curve.train.push(loss);
        check_params(&model.net, &model.curve)?;
        if !val.is_empty() {
            let v = val
                .iter()
                .map(|&i| (model.net.infer(&inputs[i]).data()[0] - dataset[i].u).powi(2))
                .sum::<f64>()
                / val.len() as f64;
            model.curve.validation.push(v);
        }
    }
    if !val.is_empty() {
        let held_out: Vec<ClmSample> = val.iter().map(|&i| dataset[i].clone()).collect();
        model.validation_mae = Some(clm_mae(&model, &held_out)?);
    }
    model.holdout_labels = held;
    Ok(model)
}

/// Mean absolute error of the model on `samples`.
pub fn clm_mae(model: &ClmModel, samples: &[ClmSample]) -> Result<f64> {
    let mut sum = 0.0;
    for s in samples {
        sum += (clm_predict(model, &s.frame)? - s.u).abs();
    }
    Ok(sum / samples.len().max(1) as f64)
}
