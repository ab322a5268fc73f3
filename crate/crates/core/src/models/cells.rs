//! Single-step cells and layers, recorded on a [`Tape`].
//!
//! Weights are stored `[out, in]`, so every product is `x · Wᵀ` on a batch of
//! row vectors `x: [B, in]`.

use super::params::{AttentionParams, DenseLayer, GateParams, GcnLayerParams, GruCellParams, LstmCellParams, RnnCellParams};
use crate::error::Result;
use crate::numcore::{Tape, Var};

pub fn dense(tape: &mut Tape, p: &DenseLayer<Var>, x: Var) -> Result<Var> {
    let z = tape.matmul_t(x, p.weight)?;
    tape.add_row_bias(z, p.bias)
}

/// `x · W_xᵀ + h · W_hᵀ + b`
fn gate_preactivation(tape: &mut Tape, g: &GateParams<Var>, x: Var, h: Var) -> Result<Var> {
    let zx = tape.matmul_t(x, g.w_x)?;
    let zh = tape.matmul_t(h, g.w_h)?;
    let z = tape.add(zx, zh)?;
    tape.add_row_bias(z, g.bias)
}

/// `h_t = tanh(W_xh x_t + W_hh h_prev + b_h)`
pub fn rnn_cell(tape: &mut Tape, p: &RnnCellParams<Var>, x: Var, h_prev: Var) -> Result<Var> {
    let z = gate_preactivation(tape, p, x, h_prev)?;
    tape.tanh(z)
}

/// Returns `(h_t, c_t)`.
pub fn lstm_cell(tape: &mut Tape, p: &LstmCellParams<Var>, x: Var, (h_prev, c_prev): (Var, Var)) -> Result<(Var, Var)> {
    let f = gate_preactivation(tape, &p.forget, x, h_prev)?;
    let f = tape.sigmoid(f)?;
    let i = gate_preactivation(tape, &p.input, x, h_prev)?;
    let i = tape.sigmoid(i)?;
    let o = gate_preactivation(tape, &p.output, x, h_prev)?;
    let o = tape.sigmoid(o)?;
    let g = gate_preactivation(tape, &p.candidate, x, h_prev)?;
    let g = tape.tanh(g)?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// `h_t = (1 − z) ⊙ h_prev + z ⊙ h̃`, with the reset gate applied to `h_prev`
/// before the candidate's recurrent product.
pub fn gru_cell(tape: &mut Tape, p: &GruCellParams<Var>, x: Var, h_prev: Var) -> Result<Var> {
    let z = gate_preactivation(tape, &p.update, x, h_prev)?;
    let z = tape.sigmoid(z)?;
    let r = gate_preactivation(tape, &p.reset, x, h_prev)?;
    let r = tape.sigmoid(r)?;
    let rh = tape.mul(r, h_prev)?;
    let cand = gate_preactivation(tape, &p.candidate, x, rh)?;
    let cand = tape.tanh(cand)?;
    let one_minus_z = tape.one_minus(z)?;
    let keep = tape.mul(one_minus_z, h_prev)?;
    let write = tape.mul(z, cand)?;
    tape.add(keep, write)
}

/// `ReLU(Â · X · Wᵀ)` for node features `x: [B, n, f]`; returns `[B, n, out]`.
pub fn gcn_layer(tape: &mut Tape, p: &GcnLayerParams<Var>, x: Var) -> Result<Var> {
    let mixed = tape.graph_propagate(&p.adjacency, x)?;
    let (b, n, f) = {
        let s = tape.shape(mixed);
        (s[0], s[1], s[2])
    };
    let flat = tape.reshape(mixed, &[b * n, f])?;
    let z = tape.matmul_t(flat, p.weight)?;
    let z = tape.relu(z)?;
    let out = tape.shape(z)[1];
    tape.reshape(z, &[b, n, out])
}

/// Unnormalized score `w2ᵀ tanh(W1 h + b1)` per batch row, as `[B, 1]`.
pub fn attention_score(tape: &mut Tape, p: &AttentionParams<Var>, h: Var) -> Result<Var> {
    let a = tape.shape(p.w2)[0];
    let z = tape.matmul_t(h, p.w1)?;
    let z = tape.add_row_bias(z, p.b1)?;
    let z = tape.tanh(z)?;
    let w2 = tape.reshape(p.w2, &[a, 1])?;
    tape.matmul(z, w2)
}
