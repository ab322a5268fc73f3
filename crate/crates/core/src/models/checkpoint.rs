use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::{init_params, ModelParams};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// JSON model snapshot: config, init seed and every parameter keyed by its
/// canonical name. Floats are written in shortest round-trip form, so a
/// reload is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub seed: u64,
    pub params: BTreeMap<String, ArrayRecord>,
}

impl Checkpoint {
    pub fn new(config: &ModelConfig, seed: u64, params: &ModelParams) -> Self {
        let mut map = BTreeMap::new();
        params.visit(&mut |name, t| {
            map.insert(
                name,
                ArrayRecord {
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                },
            );
        });
        Self {
            config: config.clone(),
            seed,
            params: map,
        }
    }

    pub fn to_params(&self) -> Result<ModelParams> {
        let mut params = init_params(&self.config, self.seed)?;
        let expected = params.names();
        if expected.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "checkpoint has {} arrays, {} model needs {}",
                self.params.len(),
                self.config.kind,
                expected.len()
            )));
        }
        let mut failure = None;
        params.visit_mut(&mut |name, t| {
            if failure.is_some() {
                return;
            }
            match self.params.get(&name) {
                Some(rec) if rec.shape == t.shape() && rec.data.len() == t.len() => {
                    t.data_mut().copy_from_slice(&rec.data);
                }
                Some(rec) => failure = Some(Error::shape("checkpoint", &rec.shape, t.shape())),
                None => failure = Some(Error::invalid(format!("checkpoint is missing '{name}'"))),
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(params),
        }
    }

    /// Rebuilds a tensor from one stored array.
    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        let rec = self
            .params
            .get(name)
            .ok_or_else(|| Error::invalid(format!("checkpoint has no '{name}'")))?;
        Tensor::new(rec.shape.clone(), rec.data.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    #[test]
    fn json_reload_is_bit_exact() {
        let mut config = ModelConfig::new(ModelKind::A3tgcn);
        config.num_nodes = 3;
        config.hidden_dim = 4;
        config.edges = vec![[0, 1], [1, 2]];
        let params = init_params(&config, 9).unwrap();
        let ck = Checkpoint::new(&config, 9, &params);
        let text = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_params().unwrap(), params);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let config = ModelConfig {
            hidden_dim: 3,
            ..ModelConfig::new(ModelKind::Rnn)
        };
        let params = init_params(&config, 1).unwrap();
        let mut ck = Checkpoint::new(&config, 1, &params);
        ck.params.get_mut("cell.bias").unwrap().shape = vec![4];
        assert!(ck.to_params().is_err());
    }
}
