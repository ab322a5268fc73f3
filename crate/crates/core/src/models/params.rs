//! Learnable parameter sets, generic over the leaf type so the same tree
//! holds owned [`Tensor`]s between steps and tape [`Var`]s during a pass.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adjacency::normalize_adjacency;
use super::{ModelConfig, ModelKind};
use crate::error::Result;
use crate::numcore::{Tape, Tensor, Var};

type Visitor<'a, 'b, T> = dyn FnMut(String, &'a T) + 'b;
type VisitorMut<'b, T> = dyn FnMut(String, &mut T) + 'b;

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T = Tensor> {
    /// `[out, in]`
    pub weight: T,
    /// `[out]`
    pub bias: T,
}

impl<T> DenseLayer<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut Visitor<'a, '_, T>) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_, T>) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }

    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> DenseLayer<U> {
        DenseLayer {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }
}

/// Input, recurrent and bias blocks of one gate: `W_x: [h, in]`, `W_h: [h, h]`, `b: [h]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateParams<T = Tensor> {
    pub w_x: T,
    pub w_h: T,
    pub bias: T,
}

impl<T> GateParams<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut Visitor<'a, '_, T>) {
        f(join(prefix, "w_x"), &self.w_x);
        f(join(prefix, "w_h"), &self.w_h);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_, T>) {
        f(join(prefix, "w_x"), &mut self.w_x);
        f(join(prefix, "w_h"), &mut self.w_h);
        f(join(prefix, "bias"), &mut self.bias);
    }

    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> GateParams<U> {
        GateParams {
            w_x: f(&self.w_x),
            w_h: f(&self.w_h),
            bias: f(&self.bias),
        }
    }
}

/// Elman cell: one tanh gate.
pub type RnnCellParams<T = Tensor> = GateParams<T>;

#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellParams<T = Tensor> {
    pub forget: GateParams<T>,
    pub input: GateParams<T>,
    pub output: GateParams<T>,
    pub candidate: GateParams<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GruCellParams<T = Tensor> {
    pub update: GateParams<T>,
    pub reset: GateParams<T>,
    pub candidate: GateParams<T>,
}

/// One graph-convolution layer; the normalized adjacency is fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayerParams<T = Tensor> {
    /// `[out, in]` per-node feature transform.
    pub weight: T,
    pub adjacency: Arc<Tensor>,
}

/// Temporal attention scorer `e_t = w2ᵀ tanh(W1 h_t + b1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T = Tensor> {
    /// `[a, h]`
    pub w1: T,
    /// `[a]`
    pub b1: T,
    /// `[a]`
    pub w2: T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelParams<T = Tensor> {
    Fnn {
        hidden: DenseLayer<T>,
        head: DenseLayer<T>,
    },
    Rnn {
        cell: RnnCellParams<T>,
        head: DenseLayer<T>,
    },
    Lstm {
        cell: LstmCellParams<T>,
        head: DenseLayer<T>,
    },
    Gru {
        cell: GruCellParams<T>,
        head: DenseLayer<T>,
    },
    A3tgcn {
        gcn: GcnLayerParams<T>,
        cell: GruCellParams<T>,
        attention: AttentionParams<T>,
        head: DenseLayer<T>,
    },
}

impl<T> ModelParams<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Fnn { .. } => ModelKind::Fnn,
            ModelParams::Rnn { .. } => ModelKind::Rnn,
            ModelParams::Lstm { .. } => ModelKind::Lstm,
            ModelParams::Gru { .. } => ModelKind::Gru,
            ModelParams::A3tgcn { .. } => ModelKind::A3tgcn,
        }
    }

    /// Visits every learnable leaf in canonical order with its canonical name.
    pub fn visit<'a>(&'a self, f: &mut Visitor<'a, '_, T>) {
        match self {
            ModelParams::Fnn { hidden, head } => {
                hidden.visit("hidden", f);
                head.visit("head", f);
            }
            ModelParams::Rnn { cell, head } => {
                cell.visit("cell", f);
                head.visit("head", f);
            }
            ModelParams::Lstm { cell, head } => {
                cell.forget.visit("cell.forget", f);
                cell.input.visit("cell.input", f);
                cell.output.visit("cell.output", f);
                cell.candidate.visit("cell.candidate", f);
                head.visit("head", f);
            }
            ModelParams::Gru { cell, head } => {
                visit_gru(cell, f);
                head.visit("head", f);
            }
            ModelParams::A3tgcn {
                gcn,
                cell,
                attention,
                head,
            } => {
                f("gcn.weight".into(), &gcn.weight);
                visit_gru(cell, f);
                f("attention.w1".into(), &attention.w1);
                f("attention.b1".into(), &attention.b1);
                f("attention.w2".into(), &attention.w2);
                head.visit("head", f);
            }
        }
    }

    pub fn visit_mut(&mut self, f: &mut VisitorMut<'_, T>) {
        match self {
            ModelParams::Fnn { hidden, head } => {
                hidden.visit_mut("hidden", f);
                head.visit_mut("head", f);
            }
            ModelParams::Rnn { cell, head } => {
                cell.visit_mut("cell", f);
                head.visit_mut("head", f);
            }
            ModelParams::Lstm { cell, head } => {
                cell.forget.visit_mut("cell.forget", f);
                cell.input.visit_mut("cell.input", f);
                cell.output.visit_mut("cell.output", f);
                cell.candidate.visit_mut("cell.candidate", f);
                head.visit_mut("head", f);
            }
            ModelParams::Gru { cell, head } => {
                cell.update.visit_mut("cell.update", f);
                cell.reset.visit_mut("cell.reset", f);
                cell.candidate.visit_mut("cell.candidate", f);
                head.visit_mut("head", f);
            }
            ModelParams::A3tgcn {
                gcn,
                cell,
                attention,
                head,
            } => {
                f("gcn.weight".into(), &mut gcn.weight);
                cell.update.visit_mut("cell.update", f);
                cell.reset.visit_mut("cell.reset", f);
                cell.candidate.visit_mut("cell.candidate", f);
                f("attention.w1".into(), &mut attention.w1);
                f("attention.b1".into(), &mut attention.b1);
                f("attention.w2".into(), &mut attention.w2);
                head.visit_mut("head", f);
            }
        }
    }

    /// Rebuilds the tree leaf by leaf in canonical order.
    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> ModelParams<U> {
        let gru = |cell: &GruCellParams<T>, f: &mut dyn FnMut(&T) -> U| GruCellParams {
            update: cell.update.map(f),
            reset: cell.reset.map(f),
            candidate: cell.candidate.map(f),
        };
        match self {
            ModelParams::Fnn { hidden, head } => ModelParams::Fnn {
                hidden: hidden.map(f),
                head: head.map(f),
            },
            ModelParams::Rnn { cell, head } => ModelParams::Rnn {
                cell: cell.map(f),
                head: head.map(f),
            },
            ModelParams::Lstm { cell, head } => ModelParams::Lstm {
                cell: LstmCellParams {
                    forget: cell.forget.map(f),
                    input: cell.input.map(f),
                    output: cell.output.map(f),
                    candidate: cell.candidate.map(f),
                },
                head: head.map(f),
            },
            ModelParams::Gru { cell, head } => ModelParams::Gru {
                cell: gru(cell, f),
                head: head.map(f),
            },
            ModelParams::A3tgcn {
                gcn,
                cell,
                attention,
                head,
            } => {
                let weight = f(&gcn.weight);
                let cell = gru(cell, f);
                let attention = AttentionParams {
                    w1: f(&attention.w1),
                    b1: f(&attention.b1),
                    w2: f(&attention.w2),
                };
                ModelParams::A3tgcn {
                    gcn: GcnLayerParams {
                        weight,
                        adjacency: Arc::clone(&gcn.adjacency),
                    },
                    cell,
                    attention,
                    head: head.map(f),
                }
            }
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(&mut |name, _| names.push(name));
        names
    }
}

fn visit_gru<'a, T>(cell: &'a GruCellParams<T>, f: &mut Visitor<'a, '_, T>) {
    cell.update.visit("cell.update", f);
    cell.reset.visit("cell.reset", f);
    cell.candidate.visit("cell.candidate", f);
}

impl ModelParams<Tensor> {
    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    /// Records every parameter on `tape` as a gradient-tracked leaf.
    pub fn bind(&self, tape: &mut Tape) -> ModelParams<Var> {
        self.map(&mut |t| {
            let mut t = t.clone();
            t.set_grad_enabled(true);
            tape.leaf(&t)
        })
    }

    /// Records every parameter as a constant, for inference.
    pub fn bind_frozen(&self, tape: &mut Tape) -> ModelParams<Var> {
        self.map(&mut |t| tape.constant(t.clone()))
    }

    pub fn zero_grad(&mut self) {
        self.visit_mut(&mut |_, t| t.zero_grad());
    }
}

struct Glorot(ChaCha8Rng);

impl Glorot {
    fn weight(&mut self, out: usize, inp: usize) -> Tensor {
        self.weight_with_fans(&[out, inp], inp, out)
    }

    fn weight_with_fans(&mut self, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let len = shape.iter().product();
        let data = (0..len).map(|_| self.0.random_range(-limit..=limit)).collect();
        Tensor::new(shape.to_vec(), data).expect("shape matches length").requires_grad()
    }

    fn dense(&mut self, out: usize, inp: usize) -> DenseLayer {
        DenseLayer {
            weight: self.weight(out, inp),
            bias: Tensor::zeros(&[out]).requires_grad(),
        }
    }

    fn gate(&mut self, hidden: usize, inp: usize) -> GateParams {
        GateParams {
            w_x: self.weight(hidden, inp),
            w_h: self.weight(hidden, hidden),
            bias: Tensor::zeros(&[hidden]).requires_grad(),
        }
    }

    fn gru(&mut self, hidden: usize, inp: usize) -> GruCellParams {
        GruCellParams {
            update: self.gate(hidden, inp),
            reset: self.gate(hidden, inp),
            candidate: self.gate(hidden, inp),
        }
    }
}

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut g = Glorot(ChaCha8Rng::seed_from_u64(seed));
    let (inp, h, out) = (config.input_dim(), config.hidden_dim, config.output_dim());
    let params = match config.kind {
        ModelKind::Fnn => ModelParams::Fnn {
            hidden: g.dense(h, inp * config.lookback),
            head: g.dense(out, h),
        },
        ModelKind::Rnn => ModelParams::Rnn {
            cell: g.gate(h, inp),
            head: g.dense(out, h),
        },
        ModelKind::Lstm => ModelParams::Lstm {
            cell: LstmCellParams {
                forget: g.gate(h, inp),
                input: g.gate(h, inp),
                output: g.gate(h, inp),
                candidate: g.gate(h, inp),
            },
            head: g.dense(out, h),
        },
        ModelKind::Gru => ModelParams::Gru {
            cell: g.gru(h, inp),
            head: g.dense(out, h),
        },
        ModelKind::A3tgcn => {
            let adjacency = Arc::new(normalize_adjacency(&config.edges, config.num_nodes)?);
            let gcn_weight = g.weight(config.gcn_out_dim, config.node_feature_dim);
            let cell = g.gru(h, config.num_nodes * config.gcn_out_dim);
            let a = config.attention_dim;
            let attention = AttentionParams {
                w1: g.weight(a, h),
                b1: Tensor::zeros(&[a]).requires_grad(),
                w2: g.weight_with_fans(&[a], a, 1),
            };
            ModelParams::A3tgcn {
                gcn: GcnLayerParams {
                    weight: gcn_weight,
                    adjacency,
                },
                cell,
                attention,
                head: g.dense(out, h),
            }
        }
    };
    Ok(params)
}
