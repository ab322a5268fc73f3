//! Forward passes checked against plain per-sample loops that share no code
//! with the tape, plus gradient checks through full unrolls.

use std::sync::Arc;

use loadcast::models::{
    a3tgcn_forward, gcn_layer, gru_cell, init_params, loss_grad_check, lstm_cell, normalize_adjacency, predict,
    rnn_cell, unroll_and_predict, GateParams, GcnLayerParams, ModelConfig, ModelKind, ModelParams,
};
use loadcast::numcore::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mv(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    assert_eq!(cols, x.len());
    (0..rows).map(|i| (0..cols).map(|j| w.get2(i, j) * x[j]).sum()).collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gate(g: &GateParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let a = mv(&g.w_x, x);
    let b = mv(&g.w_h, h);
    a.iter().zip(&b).zip(g.bias.data()).map(|((a, b), c)| a + b + c).collect()
}

fn dense(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    mv(w, x).iter().zip(b.data()).map(|(a, b)| a + b).collect()
}

fn gru_step(cell: &loadcast::models::GruCellParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let z: Vec<f64> = gate(&cell.update, x, h).into_iter().map(sig).collect();
    let r: Vec<f64> = gate(&cell.reset, x, h).into_iter().map(sig).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(r, h)| r * h).collect();
    let c: Vec<f64> = gate(&cell.candidate, x, &rh).into_iter().map(f64::tanh).collect();
    (0..h.len()).map(|i| (1.0 - z[i]) * h[i] + z[i] * c[i]).collect()
}

/// Per-sample reference forward; `window` is `lookback × in` row-major.
fn reference(params: &ModelParams, config: &ModelConfig, window: &[f64]) -> Vec<f64> {
    let d = config.input_dim();
    let hour = |t: usize| &window[t * d..(t + 1) * d];
    let hd = config.hidden_dim;
    match params {
        ModelParams::Fnn { hidden, head } => {
            let z: Vec<f64> = dense(&hidden.weight, &hidden.bias, window).into_iter().map(|v| v.max(0.0)).collect();
            dense(&head.weight, &head.bias, &z)
        }
        ModelParams::Rnn { cell, head } => {
            let mut h = vec![0.0; hd];
            for t in 0..config.lookback {
                h = gate(cell, hour(t), &h).into_iter().map(f64::tanh).collect();
            }
            dense(&head.weight, &head.bias, &h)
        }
        ModelParams::Lstm { cell, head } => {
            let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
            for t in 0..config.lookback {
                let x = hour(t);
                let f: Vec<f64> = gate(&cell.forget, x, &h).into_iter().map(sig).collect();
                let i: Vec<f64> = gate(&cell.input, x, &h).into_iter().map(sig).collect();
                let o: Vec<f64> = gate(&cell.output, x, &h).into_iter().map(sig).collect();
                let g: Vec<f64> = gate(&cell.candidate, x, &h).into_iter().map(f64::tanh).collect();
                for k in 0..hd {
                    c[k] = f[k] * c[k] + i[k] * g[k];
                    h[k] = o[k] * c[k].tanh();
                }
            }
            dense(&head.weight, &head.bias, &h)
        }
        ModelParams::Gru { cell, head } => {
            let mut h = vec![0.0; hd];
            for t in 0..config.lookback {
                h = gru_step(cell, hour(t), &h);
            }
            dense(&head.weight, &head.bias, &h)
        }
        ModelParams::A3tgcn { gcn, cell, attention, head } => {
            let (n, f) = (config.num_nodes, config.node_feature_dim);
            let adj = brute_force_adjacency(&config.edges, n);
            let mut h = vec![0.0; hd];
            let mut states = Vec::new();
            let mut scores = Vec::new();
            for t in 0..config.lookback {
                let row = hour(t);
                let mut u = Vec::new();
                for i in 0..n {
                    let mixed: Vec<f64> =
                        (0..f).map(|k| (0..n).map(|j| adj[i][j] * row[k * n + j]).sum()).collect();
                    u.extend(mv(&gcn.weight, &mixed).into_iter().map(|v| v.max(0.0)));
                }
                h = gru_step(cell, &u, &h);
                let e: Vec<f64> = dense(&attention.w1, &attention.b1, &h).into_iter().map(f64::tanh).collect();
                scores.push(e.iter().zip(attention.w2.data()).map(|(a, b)| a * b).sum::<f64>());
                states.push(h.clone());
            }
            let max = scores.iter().cloned().fold(f64::MIN, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let mut ctx = vec![0.0; hd];
            for (s, e) in states.iter().zip(&exps) {
                for k in 0..hd {
                    ctx[k] += e / total * s[k];
                }
            }
            dense(&head.weight, &head.bias, &ctx)
        }
    }
}

/// `D̃^(−1/2) (A + I) D̃^(−1/2)` by dense matrix products.
fn brute_force_adjacency(edges: &[[usize; 2]], n: usize) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0;
    }
    for &[u, v] in edges {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    let d: Vec<f64> = a.iter().map(|row| row.iter().sum::<f64>().powf(-0.5)).collect();
    let mut left = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let dik = if i == k { d[i] } else { 0.0 };
                left[i][j] += dik * a[k][j];
            }
        }
    }
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let dkj = if k == j { d[j] } else { 0.0 };
                out[i][j] += left[i][k] * dkj;
            }
        }
    }
    out
}

fn tiny_config(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        kind,
        num_nodes: 2,
        node_feature_dim: 2,
        lookback: 5,
        hidden_dim: 3,
        horizon: 1,
        gcn_out_dim: 2,
        attention_dim: 3,
        edges: vec![[0, 1]],
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Randomizes every parameter, including biases that init leaves at zero.
fn randomized(config: &ModelConfig, seed: u64) -> ModelParams {
    let mut p = init_params(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    p.visit_mut(&mut |_, t| {
        for v in t.data_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    });
    p
}

fn zeroed(config: &ModelConfig) -> ModelParams {
    let mut p = init_params(config, 0).unwrap();
    p.visit_mut(&mut |_, t| t.data_mut().fill(0.0));
    p
}

#[test]
fn every_kind_matches_reference_loops() {
    for kind in ModelKind::ALL {
        let mut config = tiny_config(kind);
        if kind == ModelKind::A3tgcn {
            config.num_nodes = 3;
            config.lookback = 3;
            config.hidden_dim = 2;
            config.edges = vec![[0, 1], [1, 2]];
        }
        let params = randomized(&config, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let window = random_tensor(&mut rng, &[3, config.lookback, config.input_dim()], 1.5);
        let out = predict(&params, &config, &window).unwrap();
        assert_eq!(out.shape(), &[3, config.input_dim()]);
        let per = config.lookback * config.input_dim();
        for b in 0..3 {
            let want = reference(&params, &config, &window.data()[b * per..(b + 1) * per]);
            for (k, w) in want.iter().enumerate() {
                let got = out.get2(b, k);
                assert!((got - w).abs() < 1e-12, "{kind} b={b} k={k}: {got} vs {w}");
            }
        }
    }
}

#[test]
fn fnn_by_hand() {
    // lookback 2, one node with 2 features, hidden 3, output 2.
    let config = ModelConfig { kind: ModelKind::Fnn, num_nodes: 1, ..tiny_config(ModelKind::Fnn) };
    let config = ModelConfig { lookback: 2, ..config };
    let mut p = zeroed(&config);
    if let ModelParams::Fnn { hidden, head } = &mut p {
        hidden.weight.data_mut().copy_from_slice(&[1., 0., 0., 0., 0., 1., 0., 0., -1., 1., 1., 1.]);
        hidden.bias.data_mut().copy_from_slice(&[0., 0.5, 0.]);
        head.weight.data_mut().copy_from_slice(&[1., 1., 1., 0., 2., 0.]);
        head.bias.data_mut().copy_from_slice(&[0.25, -1.]);
    }
    let window = Tensor::new(vec![1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
    // hidden pre-activations: [1, 0.5 + 2, -1 + 2 + 3 + 4] = [1, 2.5, 8]
    // head: [1 + 2.5 + 8 + 0.25, 2·2.5 − 1] = [11.75, 4]
    let out = predict(&p, &config, &window).unwrap();
    assert_eq!(out.data(), &[11.75, 4.0]);
}

#[test]
fn zero_weights_give_zero_or_bias_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for kind in ModelKind::ALL {
        let config = tiny_config(kind);
        let p = zeroed(&config);
        let window = random_tensor(&mut rng, &[2, config.lookback, config.input_dim()], 3.0);
        let out = predict(&p, &config, &window).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0), "{kind}");
    }
}

#[test]
fn batch_rows_are_independent_and_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for kind in ModelKind::ALL {
        let config = tiny_config(kind);
        let p = randomized(&config, 3);
        let per = config.lookback * config.input_dim();
        let one = random_tensor(&mut rng, &[1, config.lookback, config.input_dim()], 1.0);
        let twice = Tensor::new(vec![2, config.lookback, config.input_dim()], one.data().repeat(2)).unwrap();
        let a = predict(&p, &config, &one).unwrap();
        let b = predict(&p, &config, &twice).unwrap();
        let d = config.input_dim();
        assert_eq!(&b.data()[..d], a.data());
        assert_eq!(&b.data()[d..], a.data());

        let batch = random_tensor(&mut rng, &[3, config.lookback, d], 1.0);
        let order = [2usize, 0, 1];
        let permuted: Vec<f64> = order.iter().flat_map(|&i| batch.data()[i * per..(i + 1) * per].to_vec()).collect();
        let permuted = Tensor::new(vec![3, config.lookback, d], permuted).unwrap();
        let out = predict(&p, &config, &batch).unwrap();
        let out_p = predict(&p, &config, &permuted).unwrap();
        for (row, &src) in order.iter().enumerate() {
            assert_eq!(&out_p.data()[row * d..(row + 1) * d], &out.data()[src * d..(src + 1) * d], "{kind}");
        }
    }
}

#[test]
fn default_configuration_outputs_one_by_eighty_eight() {
    let edges: Vec<[usize; 2]> = (1..44).filter(|&i| i != 22).map(|i| [i - 1, i]).collect();
    assert_eq!(edges.len(), 42);
    for kind in ModelKind::ALL {
        let config = ModelConfig { edges: edges.clone(), ..ModelConfig::new(kind) };
        let p = init_params(&config, 4).unwrap();
        let window = Tensor::zeros(&[1, 24, 88]);
        let out = predict(&p, &config, &window).unwrap();
        assert_eq!(out.shape(), &[1, 88], "{kind}");
        let again = predict(&p, &config, &window).unwrap();
        assert_eq!(out, again);
    }
}

#[test]
fn horizon_widens_the_head() {
    let config = ModelConfig { horizon: 3, ..tiny_config(ModelKind::Gru) };
    let p = init_params(&config, 0).unwrap();
    let out = predict(&p, &config, &Tensor::zeros(&[2, 5, 4])).unwrap();
    assert_eq!(out.shape(), &[2, 12]);
}

#[test]
fn rnn_without_recurrence_is_a_dense_map_of_the_last_hour() {
    let config = tiny_config(ModelKind::Rnn);
    let mut p = randomized(&config, 8);
    if let ModelParams::Rnn { cell, .. } = &mut p {
        cell.w_h.data_mut().fill(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let window = random_tensor(&mut rng, &[1, 5, 4], 1.0);
    let out = predict(&p, &config, &window).unwrap();
    let ModelParams::Rnn { cell, head } = &p else { unreachable!() };
    let last = &window.data()[16..20];
    let h: Vec<f64> = dense(&cell.w_x, &cell.bias, last).into_iter().map(f64::tanh).collect();
    let want = dense(&head.weight, &head.bias, &h);
    for (g, w) in out.data().iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn cell_closed_forms() {
    let mut tape = Tape::new();
    let zero_gate = || GateParams {
        w_x: Tensor::zeros(&[1, 1]),
        w_h: Tensor::zeros(&[1, 1]),
        bias: Tensor::zeros(&[1]),
    };
    let bind = |tape: &mut Tape, g: &GateParams| g.map(&mut |t| tape.constant(t.clone()));
    let x = tape.constant(Tensor::new(vec![1, 1], vec![0.7]).unwrap());
    let h = tape.constant(Tensor::new(vec![1, 1], vec![-0.3]).unwrap());

    // tanh(0·x + 0·h + 1)
    let mut g = zero_gate();
    g.bias.data_mut()[0] = 1.0;
    let g = bind(&mut tape, &g);
    let h1 = rnn_cell(&mut tape, &g, x, h).unwrap();
    assert!((tape.value(h1)[0] - 1f64.tanh()).abs() < 1e-15);
    assert!((tape.value(h1)[0] - 0.761_594_155_955_764_9).abs() < 1e-12);

    // two steps equal composing the cell twice
    let g = bind(&mut tape, &randomish_gate());
    let a = rnn_cell(&mut tape, &g, x, h).unwrap();
    let b = rnn_cell(&mut tape, &g, x, a).unwrap();
    let gp = randomish_gate();
    let step = |hv: f64| (gp.w_x.data()[0] * 0.7 + gp.w_h.data()[0] * hv + gp.bias.data()[0]).tanh();
    assert!((tape.value(b)[0] - step(step(-0.3))).abs() < 1e-15);

    let zero = zero_gate();
    let lstm = loadcast::models::LstmCellParams {
        forget: bind(&mut tape, &zero),
        input: bind(&mut tape, &zero),
        output: bind(&mut tape, &zero),
        candidate: bind(&mut tape, &zero),
    };
    let c_prev = tape.constant(Tensor::new(vec![1, 1], vec![1.8]).unwrap());
    let (h_t, c_t) = lstm_cell(&mut tape, &lstm, x, (h, c_prev)).unwrap();
    assert!((tape.value(c_t)[0] - 0.9).abs() < 1e-12);
    assert!((tape.value(h_t)[0] - 0.5 * 0.9f64.tanh()).abs() < 1e-12);

    let gru = loadcast::models::GruCellParams {
        update: bind(&mut tape, &zero),
        reset: bind(&mut tape, &zero),
        candidate: bind(&mut tape, &zero),
    };
    let h_t = gru_cell(&mut tape, &gru, x, h).unwrap();
    assert!((tape.value(h_t)[0] + 0.15).abs() < 1e-12);
    let h0 = tape.constant(Tensor::zeros(&[1, 1]));
    let h_t = gru_cell(&mut tape, &gru, x, h0).unwrap();
    assert_eq!(tape.value(h_t)[0], 0.0);
}

fn randomish_gate() -> GateParams {
    GateParams {
        w_x: Tensor::new(vec![1, 1], vec![0.4]).unwrap(),
        w_h: Tensor::new(vec![1, 1], vec![-1.1]).unwrap(),
        bias: Tensor::new(vec![1], vec![0.2]).unwrap(),
    }
}

#[test]
fn lstm_and_gru_tiny_recurrences_by_hand() {
    // hidden 2, input 1, two steps, checked against the reference loops.
    for kind in [ModelKind::Lstm, ModelKind::Gru] {
        let config = ModelConfig { num_nodes: 1, node_feature_dim: 1, lookback: 2, hidden_dim: 2, ..tiny_config(kind) };
        let p = randomized(&config, 77);
        let window = Tensor::new(vec![1, 2, 1], vec![0.5, -1.25]).unwrap();
        let out = predict(&p, &config, &window).unwrap();
        let want = reference(&p, &config, window.data());
        for (g, w) in out.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-13, "{kind}");
        }
    }
}

#[test]
fn gcn_layer_cases() {
    let mut tape = Tape::new();
    let x = Tensor::new(vec![1, 2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
    let identity = GcnLayerParams {
        weight: tape.constant(Tensor::identity(2)),
        adjacency: Arc::new(normalize_adjacency(&[], 2).unwrap()),
    };
    let xv = tape.constant(x.clone());
    let out = gcn_layer(&mut tape, &identity, xv).unwrap();
    assert_eq!(tape.value(out), &[1.0, 0.0, 0.5, 3.0]);

    let single_edge = GcnLayerParams {
        weight: tape.constant(Tensor::new(vec![3, 2], vec![1., 0.5, -1., 2., 0.3, 0.3]).unwrap()),
        adjacency: Arc::new(normalize_adjacency(&[[0, 1]], 2).unwrap()),
    };
    let out = gcn_layer(&mut tape, &single_edge, xv).unwrap();
    let v = tape.value(out);
    assert_eq!(&v[0..3], &v[3..6]);

    let zero = GcnLayerParams { weight: tape.constant(Tensor::zeros(&[3, 2])), ..single_edge };
    let out = gcn_layer(&mut tape, &zero, xv).unwrap();
    assert!(tape.value(out).iter().all(|&v| v == 0.0));
}

#[test]
fn uniform_attention_averages_hidden_states() {
    let config = tiny_config(ModelKind::A3tgcn);
    let mut p = randomized(&config, 12);
    if let ModelParams::A3tgcn { attention, .. } = &mut p {
        attention.w1.data_mut().fill(0.0);
        attention.b1.data_mut().fill(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let window = random_tensor(&mut rng, &[2, 5, 4], 1.0);
    let mut tape = Tape::new();
    let vars = p.bind_frozen(&mut tape);
    let ModelParams::A3tgcn { gcn, cell, attention, head } = &vars else { unreachable!() };
    let out = a3tgcn_forward(&mut tape, gcn, cell, attention, head, &config, &window).unwrap();
    assert!(tape.value(out.attention).iter().all(|&a| (a - 0.2).abs() < 1e-15));

    // zero GRU and GCN weights: every state is zero, output is the head bias.
    let mut z = randomized(&config, 13);
    if let ModelParams::A3tgcn { gcn, cell, .. } = &mut z {
        gcn.weight.data_mut().fill(0.0);
        for g in [&mut cell.update, &mut cell.reset, &mut cell.candidate] {
            g.w_x.data_mut().fill(0.0);
            g.w_h.data_mut().fill(0.0);
            g.bias.data_mut().fill(0.0);
        }
    }
    let ModelParams::A3tgcn { head, .. } = &z else { unreachable!() };
    let out = predict(&z, &config, &window).unwrap();
    assert_eq!(&out.data()[..4], head.bias.data());
    assert_eq!(&out.data()[4..], head.bias.data());
}

#[test]
fn attention_weights_form_a_distribution() {
    for seed in 0..10 {
        let config = tiny_config(ModelKind::A3tgcn);
        let p = randomized(&config, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let window = random_tensor(&mut rng, &[3, 5, 4], 2.0);
        let mut tape = Tape::new();
        let vars = p.bind_frozen(&mut tape);
        let ModelParams::A3tgcn { gcn, cell, attention, head } = &vars else { unreachable!() };
        let out = a3tgcn_forward(&mut tape, gcn, cell, attention, head, &config, &window).unwrap();
        for row in tape.value(out.attention).chunks(5) {
            assert!(row.iter().all(|&a| a > 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn unroll_rejects_mismatched_inputs() {
    let config = tiny_config(ModelKind::Lstm);
    let p = init_params(&config, 0).unwrap();
    assert!(predict(&p, &config, &Tensor::zeros(&[1, 4, 4])).is_err());
    assert!(predict(&p, &config, &Tensor::zeros(&[1, 5, 3])).is_err());
    let other = ModelConfig { kind: ModelKind::Gru, ..config.clone() };
    let mut tape = Tape::new();
    let vars = p.bind_frozen(&mut tape);
    assert!(unroll_and_predict(&mut tape, &vars, &other, &Tensor::zeros(&[1, 5, 4])).is_err());
}

#[test]
fn unrolled_gradients_match_finite_differences() {
    for kind in ModelKind::ALL {
        let config = tiny_config(kind);
        for seed in 0..3 {
            let p = randomized(&config, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
            let window = random_tensor(&mut rng, &[2, 5, 4], 1.0);
            let target = random_tensor(&mut rng, &[2, 4], 1.0);
            let err = loss_grad_check(&p, &config, &window, &target, 1e-5).unwrap();
            assert!(err <= 1e-4, "{kind} seed {seed}: {err}");
        }
    }
}

#[test]
fn adjacency_matches_dense_formula_on_every_small_graph() {
    for n in 1..=5usize {
        let pairs: Vec<[usize; 2]> = (0..n).flat_map(|i| (i + 1..n).map(move |j| [i, j])).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let edges: Vec<[usize; 2]> =
                pairs.iter().enumerate().filter(|(k, _)| mask & (1 << k) != 0).map(|(_, e)| *e).collect();
            let got = normalize_adjacency(&edges, n).unwrap();
            let want = brute_force_adjacency(&edges, n);
            for i in 0..n {
                for j in 0..n {
                    assert!((got.get2(i, j) - want[i][j]).abs() <= 1e-12);
                    assert_eq!(got.get2(i, j), got.get2(j, i));
                }
            }
        }
    }
}
