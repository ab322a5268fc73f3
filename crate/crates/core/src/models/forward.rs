//! Whole-window forward passes for the five architectures.

use super::cells::{attention_score, dense, gcn_layer, gru_cell, lstm_cell, rnn_cell};
use super::params::{AttentionParams, DenseLayer, GcnLayerParams, GruCellParams, ModelParams};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numcore::{grad_check_many, Tape, Tensor, Var};

fn check_window(config: &ModelConfig, window: &Tensor) -> Result<usize> {
    match window.shape() {
        [b, l, d] if *l == config.lookback && *d == config.input_dim() => Ok(*b),
        other => Err(Error::shape(
            "window",
            other,
            &[0, config.lookback, config.input_dim()],
        )),
    }
}

/// Hour `t` of every window in the batch, `[B, in]`.
fn hour_slice(window: &Tensor, t: usize) -> Tensor {
    let (b, l, d) = (window.shape()[0], window.shape()[1], window.shape()[2]);
    let src = window.data();
    let mut data = Vec::with_capacity(b * d);
    for i in 0..b {
        let start = (i * l + t) * d;
        data.extend_from_slice(&src[start..start + d]);
    }
    Tensor::new(vec![b, d], data).expect("slice of a valid window")
}

/// Hour `t` regrouped per node: `[B, n, f]` with feature `k` of node `i` read
/// from column `k·n + i`.
fn node_features(window: &Tensor, t: usize, n: usize, f: usize) -> Tensor {
    let (b, l, d) = (window.shape()[0], window.shape()[1], window.shape()[2]);
    let src = window.data();
    let mut data = vec![0.0; b * n * f];
    for bi in 0..b {
        let row = &src[(bi * l + t) * d..(bi * l + t + 1) * d];
        for i in 0..n {
            for k in 0..f {
                data[(bi * n + i) * f + k] = row[k * n + i];
            }
        }
    }
    Tensor::new(vec![b, n, f], data).expect("regrouped window")
}

/// Flattens the window to `[B, lookback·in]` and applies dense → ReLU → dense.
pub fn fnn_forward(tape: &mut Tape, hidden: &DenseLayer<Var>, head: &DenseLayer<Var>, config: &ModelConfig, window: &Tensor) -> Result<Var> {
    let b = check_window(config, window)?;
    let flat = window.clone().reshape(vec![b, config.lookback * config.input_dim()])?;
    let x = tape.constant(flat);
    let z = dense(tape, hidden, x)?;
    let z = tape.relu(z)?;
    dense(tape, head, z)
}

/// Output of [`a3tgcn_forward`]: the prediction and the `[B, lookback]`
/// attention weights.
#[derive(Clone, Copy, Debug)]
pub struct A3tgcnOutput {
    pub prediction: Var,
    pub attention: Var,
}

pub fn a3tgcn_forward(
    tape: &mut Tape,
    gcn: &GcnLayerParams<Var>,
    cell: &GruCellParams<Var>,
    attention: &AttentionParams<Var>,
    head: &DenseLayer<Var>,
    config: &ModelConfig,
    window: &Tensor,
) -> Result<A3tgcnOutput> {
    let b = check_window(config, window)?;
    let (n, f) = (config.num_nodes, config.node_feature_dim);
    let mut h = tape.constant(Tensor::zeros(&[b, config.hidden_dim]));
    let mut states = Vec::with_capacity(config.lookback);
    let mut scores = Vec::with_capacity(config.lookback);
    for t in 0..config.lookback {
        let x = tape.constant(node_features(window, t, n, f));
        let u = gcn_layer(tape, gcn, x)?;
        let u = tape.reshape(u, &[b, n * config.gcn_out_dim])?;
        h = gru_cell(tape, cell, u, h)?;
        states.push(h);
        scores.push(attention_score(tape, attention, h)?);
    }
    let scores = tape.concat_cols(&scores)?;
    let alpha = tape.softmax(scores)?;
    let mut context = None;
    for (t, &h_t) in states.iter().enumerate() {
        let a_t = tape.column(alpha, t)?;
        let weighted = tape.scale_rows(h_t, a_t)?;
        context = Some(match context {
            None => weighted,
            Some(acc) => tape.add(acc, weighted)?,
        });
    }
    let context = context.ok_or(Error::Empty("attention context"))?;
    Ok(A3tgcnOutput {
        prediction: dense(tape, head, context)?,
        attention: alpha,
    })
}

/// Runs any of the five architectures over `window: [B, lookback, in]` and
/// returns the `[B, horizon·in]` prediction. Recurrent kinds read the window
/// hour by hour from a zero state and predict from the final hidden state.
pub fn unroll_and_predict(tape: &mut Tape, params: &ModelParams<Var>, config: &ModelConfig, window: &Tensor) -> Result<Var> {
    if params.kind() != config.kind {
        return Err(Error::invalid(format!(
            "parameters are for {} but config is for {}",
            params.kind(),
            config.kind
        )));
    }
    let b = check_window(config, window)?;
    let zeros = |tape: &mut Tape| tape.constant(Tensor::zeros(&[b, config.hidden_dim]));
    match params {
        ModelParams::Fnn { hidden, head } => fnn_forward(tape, hidden, head, config, window),
        ModelParams::Rnn { cell, head } => {
            let mut h = zeros(tape);
            for t in 0..config.lookback {
                let x = tape.constant(hour_slice(window, t));
                h = rnn_cell(tape, cell, x, h)?;
            }
            dense(tape, head, h)
        }
        ModelParams::Lstm { cell, head } => {
            let mut h = zeros(tape);
            let mut c = zeros(tape);
            for t in 0..config.lookback {
                let x = tape.constant(hour_slice(window, t));
                (h, c) = lstm_cell(tape, cell, x, (h, c))?;
            }
            dense(tape, head, h)
        }
        ModelParams::Gru { cell, head } => {
            let mut h = zeros(tape);
            for t in 0..config.lookback {
                let x = tape.constant(hour_slice(window, t));
                h = gru_cell(tape, cell, x, h)?;
            }
            dense(tape, head, h)
        }
        ModelParams::A3tgcn {
            gcn,
            cell,
            attention,
            head,
        } => Ok(a3tgcn_forward(tape, gcn, cell, attention, head, config, window)?.prediction),
    }
}

/// Inference on a fresh tape with frozen parameters.
pub fn predict(params: &ModelParams, config: &ModelConfig, window: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = params.bind_frozen(&mut tape);
    let out = unroll_and_predict(&mut tape, &vars, config, window)?;
    Ok(tape.tensor(out))
}

/// Finite-difference check of the MSE-loss gradient with respect to every
/// parameter; returns the worst relative error (see [`grad_check_many`]).
pub fn loss_grad_check(params: &ModelParams, config: &ModelConfig, window: &Tensor, target: &Tensor, h: f64) -> Result<f64> {
    let mut thetas = Vec::new();
    params.visit(&mut |_, t| thetas.push(t.clone()));
    grad_check_many(
        |tape, vars| {
            let mut leaves = vars.iter().copied();
            let bound = params.map(&mut |_| leaves.next().expect("one leaf per parameter"));
            let pred = unroll_and_predict(tape, &bound, config, window)?;
            let y = tape.constant(target.clone());
            tape.mse(pred, y)
        },
        &thetas,
        h,
    )
}
