use loadcast::gridgen::{
    build_network, generate_dataset, target_mean_kw, window, DatasetGenerator, LoadDataset, WindowedSamples,
};
use loadcast::numcore::Tensor;

fn components(n: usize, edges: &[[usize; 2]]) -> usize {
    // Plain DFS, independent of the library's union-find.
    let mut adj = vec![Vec::new(); n];
    for &[a, b] in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut count = 0;
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    count
}

#[test]
fn network_is_two_radial_feeders() {
    for seed in 0..20 {
        let net = build_network(seed);
        assert_eq!(net.nodes.len(), 44);
        assert_eq!(net.edges.len(), 42);
        assert_eq!(components(44, &net.edges), 2);
        assert_eq!(net.component_count(), 2);
        assert!(net.edges.iter().all(|[a, b]| a != b));
        assert_eq!(net, build_network(seed));
    }
}

#[test]
fn one_year_dataset() {
    let net = build_network(11);
    let ds = generate_dataset(&net, 1, 5).unwrap();
    assert_eq!(ds.matrix.shape(), &[8760, 88]);
    assert!(ds.matrix.all_finite());
    assert!(ds.matrix.data().iter().all(|&v| v >= 0.0));
    assert_eq!(ds, generate_dataset(&net, 1, 5).unwrap());
    assert_ne!(ds.matrix, generate_dataset(&net, 1, 6).unwrap().matrix);
    assert_eq!(ds.meta.network_hash, net.hash());

    // Annual energy per node against the sizing constants.
    for node in &net.nodes {
        let annual: f64 = (0..8760).map(|t| ds.row(t)[node.id]).sum();
        let target = target_mean_kw(node).unwrap() * 8760.0;
        assert!((annual / target - 1.0).abs() < 0.02, "node {} {annual} vs {target}", node.id);
    }
    // Q/P follows the power factor.
    for node in &net.nodes {
        let pf: f64 = if node.load_class.is_residential() { 0.95 } else { 0.90 };
        let ratio = pf.acos().tan();
        for t in (0..8760).step_by(97) {
            let (p, q) = (ds.row(t)[node.id], ds.row(t)[44 + node.id]);
            assert!((q - p * ratio).abs() <= 1e-4, "node {} t {t}", node.id);
        }
    }
}

#[test]
fn five_years_extend_one_year() {
    let net = build_network(2);
    let one = generate_dataset(&net, 1, 9).unwrap();
    let five = generate_dataset(&net, 5, 9).unwrap();
    assert_eq!(five.matrix.shape(), &[43800, 88]);
    assert!(five.matrix.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
    assert_eq!(&five.matrix.data()[..8760 * 88], one.matrix.data());
    assert!(generate_dataset(&net, 3, 9).is_err());
}

#[test]
fn noiseless_data_ignores_seed() {
    let net = build_network(4);
    let mut gen = DatasetGenerator::default();
    for p in &mut gen.profiles {
        p.noise_std = 0.0;
    }
    let a = gen.generate(&net, 1, 1).unwrap();
    let b = gen.generate(&net, 1, 2).unwrap();
    assert_eq!(a.matrix, b.matrix);
}

#[test]
fn csv_round_trip_is_exact() {
    let net = build_network(8);
    let ds = generate_dataset(&net, 1, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("load.csv");
    ds.save(&path).unwrap();
    let back = LoadDataset::load(&path).unwrap();
    assert_eq!(back, ds);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("timestamp,P_0,P_1"));
    assert!(lines.next().unwrap().starts_with("2018-01-01T00:00:00,"));
    assert_eq!(text.lines().count(), 8761);
}

#[test]
fn windows_count_and_index() {
    let net = build_network(0);
    let ds = generate_dataset(&net, 1, 0).unwrap();
    let w = window(&ds, 24).unwrap();
    assert_eq!(w.len(), 8736);
    let first = w.input(0);
    assert_eq!(&first[23 * 88..], ds.row(23));
    assert_eq!(w.target(0), ds.row(24));
    // Concatenated targets reproduce rows lookback..T exactly.
    let targets: Vec<f64> = (0..w.len()).flat_map(|i| w.target(i).to_vec()).collect();
    assert_eq!(&targets[..], &ds.matrix.data()[24 * 88..]);
    let (x, y) = w.batch(&[5, 100]).unwrap();
    assert_eq!(x.shape(), &[2, 24, 88]);
    assert_eq!(y.shape(), &[2, 88]);
    assert_eq!(&x.data()[..24 * 88], &ds.matrix.data()[5 * 88..29 * 88]);
}

#[test]
fn window_boundaries() {
    let m = Tensor::new(vec![25, 3], (0..75).map(f64::from).collect()).unwrap();
    let w = WindowedSamples::new(&m, 24, 1).unwrap();
    assert_eq!(w.len(), 1);
    assert_eq!(w.inputs().unwrap().shape(), &[1, 24, 3]);
    assert_eq!(w.targets().unwrap().data(), &[72.0, 73.0, 74.0]);
    let short = Tensor::new(vec![24, 3], vec![0.0; 72]).unwrap();
    assert!(WindowedSamples::new(&short, 24, 1).is_err());
    let w = WindowedSamples::new(&m, 20, 3).unwrap();
    assert_eq!(w.len(), 3);
    assert_eq!(w.target(0), &m.data()[60..69]);
}
