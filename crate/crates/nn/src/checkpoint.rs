//! Versioned binary checkpoints of named parameter tensors.
//!
//! Layout (little-endian):
//! ```text
//! magic "SPNN" | version u32 | config hash [32]u8 | count u32
//! repeated: name_len u32 | name utf8 | rank u32 | dims u64*rank | data f64*numel
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::param::Parameterized;
use crate::{NnError, Tensor};

const MAGIC: &[u8; 4] = b"SPNN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// SHA-256 digest identifying the configuration a model was built with.
pub type ConfigHash = [u8; 32];

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: ConfigHash,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn from_model<M: Parameterized + ?Sized>(model: &M, config_hash: ConfigHash) -> Self {
        let tensors = model
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        Self {
            config_hash,
            tensors,
        }
    }

    /// Extend with extra named tensors (normalisation statistics and similar).
    pub fn with_tensor(mut self, name: &str, t: Tensor) -> Self {
        self.tensors.insert(name.to_string(), t);
        self
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&self.config_hash)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Parse a checkpoint, refusing it unless it was saved under `expected`.
    pub fn read_from<R: Read>(mut r: R, expected: &ConfigHash) -> Result<Self, NnError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(NnError::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut config_hash = [0u8; 32];
        r.read_exact(&mut config_hash)?;
        if &config_hash != expected {
            return Err(NnError::ConfigMismatch);
        }
        let count = read_u32(&mut r)? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| NnError::Format("tensor name is not utf-8".into()))?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            tensors.insert(name, Tensor::from_vec(&shape, data));
        }
        Ok(Self {
            config_hash,
            tensors,
        })
    }

    /// Copy stored values into the model's parameters by name.
    pub fn load_into<M: Parameterized + ?Sized>(&self, model: &mut M) -> Result<(), NnError> {
        for p in model.params_mut() {
            let t = self
                .tensors
                .get(&p.name)
                .ok_or_else(|| NnError::MissingTensor(p.name.clone()))?;
            if t.shape() != p.value.shape() {
                return Err(NnError::Format(format!(
                    "tensor {} has shape {:?}, model expects {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.clone();
        }
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor, NnError> {
        self.tensors
            .get(name)
            .ok_or_else(|| NnError::MissingTensor(name.to_string()))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Dense, Layer, Sequential};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64) -> Sequential {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Sequential::new(vec![Layer::Dense(Dense::new("d0", 3, 2, &mut rng))])
    }

    #[test]
    fn roundtrip_restores_parameters() {
        let a = net(1);
        let hash = [7u8; 32];
        let bytes = Checkpoint::from_model(&a, hash).to_bytes();
        let ck = Checkpoint::read_from(bytes.as_slice(), &hash).unwrap();
        let mut b = net(2);
        ck.load_into(&mut b).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.value, pb.value);
        }
    }

    #[test]
    fn mismatched_config_hash_is_refused() {
        let bytes = Checkpoint::from_model(&net(1), [1u8; 32]).to_bytes();
        let err = Checkpoint::read_from(bytes.as_slice(), &[2u8; 32]).unwrap_err();
        assert!(matches!(err, NnError::ConfigMismatch));
    }
}
