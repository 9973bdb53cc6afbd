//! Bits shared by the model trainers.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stempush_nn::{ConfigHash, Parameterized};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Per-epoch mean losses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

impl TrainingCurve {
    pub fn last_finite(&self) -> f64 {
        self.train.iter().rev().copied().find(|v| v.is_finite()).unwrap_or(f64::NAN)
    }

    /// Fail if `loss` is not finite.
    pub fn check(&self, loss: f64, what: &str) -> Result<()> {
        if loss.is_finite() {
            Ok(())
        } else {
            Err(Error::TrainingFailed {
                detail: format!("{what} loss became {loss} after {} epochs", self.train.len()),
                last_finite_loss: self.last_finite(),
            })
        }
    }
}

/// Fail if any parameter went non-finite.
pub fn check_params<M: Parameterized + ?Sized>(model: &M, curve: &TrainingCurve) -> Result<()> {
    for p in model.params() {
        if !p.value.is_finite() {
            return Err(Error::TrainingFailed {
                detail: format!("parameter `{}` became non-finite", p.name),
                last_finite_loss: curve.last_finite(),
            });
        }
    }
    Ok(())
}

pub fn shuffled(n: usize, rng: &mut SimRng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

/// SHA-256 of a serializable architecture description.
pub fn hash_config<T: Serialize>(tag: &str, cfg: &T) -> ConfigHash {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.finalize().into()
}
