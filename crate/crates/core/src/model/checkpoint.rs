use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelError, ModelParams, Vocab};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// On-disk model: configuration, vocabulary and every tensor by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub vocab: Vec<String>,
    pub tensors: BTreeMap<String, TensorRecord>,
}

impl Checkpoint {
    pub fn from_model<F: Scalar>(model: &Model<F>) -> Self {
        let mut tensors = BTreeMap::new();
        model.params.for_each(|name, t| {
            tensors.insert(
                name.to_string(),
                TensorRecord { shape: t.shape().to_vec(), data: t.iter().map(|x| x.as_f64()).collect() },
            );
        });
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            vocab: model.vocab.clone().into(),
            tensors,
        }
    }

    pub fn into_model<F: Scalar>(self) -> Result<Model<F>, ModelError> {
        let bad = |m: String| Err(ModelError::Checkpoint(m));
        if self.version != CHECKPOINT_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        self.config.validate()?;
        if self.vocab.len() != self.config.vocab_size {
            return bad(format!("vocabulary has {} words, config says {}", self.vocab.len(), self.config.vocab_size));
        }
        let mut params = ModelParams::<F>::zeros(&self.config);
        let mut seen = 0;
        for (name, mut t) in params.tensors_mut() {
            let Some(rec) = self.tensors.get(&name) else {
                return bad(format!("missing tensor {name}"));
            };
            if rec.shape != t.shape() || rec.data.len() != t.len() {
                return bad(format!("tensor {name} has shape {:?}, expected {:?}", rec.shape, t.shape()));
            }
            t.iter_mut().zip(&rec.data).for_each(|(d, &x)| *d = F::lit(x));
            seen += 1;
        }
        if seen != self.tensors.len() {
            return bad("checkpoint has unexpected tensors".into());
        }
        if !params.all_finite() {
            return bad("non-finite parameter".into());
        }
        Ok(Model { config: self.config, vocab: Vocab::from(self.vocab), params })
    }
}

pub fn save_checkpoint<F: Scalar>(path: &Path, model: &Model<F>) -> Result<(), ModelError> {
    let json = serde_json::to_string(&Checkpoint::from_model(model)).expect("checkpoint serializes");
    fs::write(path, json).map_err(|source| ModelError::Io { path: path.display().to_string(), source })
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<Model<F>, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    ck.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use crate::syntax::BugKind;

    fn model() -> Model<f64> {
        let vocab = Vocab::build(["a", "b"], 1);
        let config = ModelConfig { dim: 4, layers: 3, max_len: 5, ..ModelConfig::new(BugKind::WrongBinop) };
        Model::new(config, vocab, &mut rng_for(0, 0)).unwrap()
    }

    #[test]
    fn save_load_round_trip() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_checkpoint(&p, &m).unwrap();
        assert_eq!(load_checkpoint::<f64>(&p).unwrap(), m);
        let as_f32 = load_checkpoint::<f32>(&p).unwrap();
        assert_eq!(as_f32.params.parameter_count(), m.params.parameter_count());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut ck = Checkpoint::from_model(&model());
        ck.tensors.get_mut("cls.b2").unwrap().shape = vec![3];
        assert!(matches!(ck.clone().into_model::<f64>(), Err(ModelError::Checkpoint(_))));
        ck.config.dim = 8;
        assert!(ck.into_model::<f64>().is_err());
    }
}
