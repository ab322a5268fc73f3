//! FNN, RNN, LSTM, GRU and A3T-GCN forecasters mapping a `(lookback, 88)`
//! window to the next hour's 88 load values.

mod adjacency;
mod cells;
mod checkpoint;
mod forward;
mod params;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adjacency::normalize_adjacency;
pub use cells::{attention_score, dense, gcn_layer, gru_cell, lstm_cell, rnn_cell};
pub use checkpoint::{ArrayRecord, Checkpoint};
pub use forward::{a3tgcn_forward, fnn_forward, loss_grad_check, predict, unroll_and_predict, A3tgcnOutput};
pub use params::{
    init_params, AttentionParams, DenseLayer, GateParams, GcnLayerParams, GruCellParams, LstmCellParams, ModelParams,
    RnnCellParams,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fnn,
    Rnn,
    Lstm,
    Gru,
    A3tgcn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Fnn,
        ModelKind::Rnn,
        ModelKind::Lstm,
        ModelKind::Gru,
        ModelKind::A3tgcn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Fnn => "fnn",
            ModelKind::Rnn => "rnn",
            ModelKind::Lstm => "lstm",
            ModelKind::Gru => "gru",
            ModelKind::A3tgcn => "a3tgcn",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Fnn => "FNN",
            ModelKind::Rnn => "RNN",
            ModelKind::Lstm => "LSTM",
            ModelKind::Gru => "GRU",
            ModelKind::A3tgcn => "A3T-GCN",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == key)
            .ok_or_else(|| Error::invalid(format!("unknown model '{s}'; expected one of fnn, rnn, lstm, gru, a3tgcn")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub num_nodes: usize,
    /// Features per node per hour: `(P, Q)`.
    pub node_feature_dim: usize,
    pub lookback: usize,
    pub hidden_dim: usize,
    pub horizon: usize,
    /// Per-node output width of the graph convolution (A3T-GCN only).
    pub gcn_out_dim: usize,
    /// Attention scorer width (A3T-GCN only).
    pub attention_dim: usize,
    /// Undirected feeder edges (A3T-GCN only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<[usize; 2]>,
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            num_nodes: 44,
            node_feature_dim: 2,
            lookback: 24,
            hidden_dim: 64,
            horizon: 1,
            gcn_out_dim: 8,
            attention_dim: 32,
            edges: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.num_nodes * self.node_feature_dim
    }

    pub fn output_dim(&self) -> usize {
        self.input_dim() * self.horizon
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_nodes", self.num_nodes),
            ("node_feature_dim", self.node_feature_dim),
            ("lookback", self.lookback),
            ("hidden_dim", self.hidden_dim),
            ("horizon", self.horizon),
            ("gcn_out_dim", self.gcn_out_dim),
            ("attention_dim", self.attention_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("model {name} must be at least 1")));
            }
        }
        if self.kind == ModelKind::A3tgcn {
            normalize_adjacency(&self.edges, self.num_nodes)?;
        }
        Ok(())
    }
}
