use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Symmetric renormalized adjacency `D̃^(−1/2) (A + I) D̃^(−1/2)`, where `D̃` is
/// the degree matrix of `A + I`.
pub fn normalize_adjacency(edges: &[[usize; 2]], n: usize) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::invalid("graph needs at least one node"));
    }
    let mut seen = HashSet::new();
    let mut degree = vec![1.0f64; n];
    for &[a, b] in edges {
        if a >= n || b >= n {
            return Err(Error::invalid(format!("edge ({a}, {b}) out of range for {n} nodes")));
        }
        if a == b {
            return Err(Error::invalid(format!("self-loop on node {a} in edge list")));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(Error::invalid(format!("duplicate edge ({a}, {b})")));
        }
        degree[a] += 1.0;
        degree[b] += 1.0;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut out = Tensor::zeros(&[n, n]);
    let data = out.data_mut();
    for i in 0..n {
        data[i * n + i] = inv_sqrt[i] * inv_sqrt[i];
    }
    for &(a, b) in &seen {
        let v = inv_sqrt[a] * inv_sqrt[b];
        data[a * n + b] = v;
        data[b * n + a] = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_node() {
        assert_eq!(normalize_adjacency(&[], 1).unwrap().data(), &[1.0]);
    }

    #[test]
    fn single_edge() {
        let a = normalize_adjacency(&[[0, 1]], 2).unwrap();
        for &v in a.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn path_of_three() {
        let a = normalize_adjacency(&[[0, 1], [1, 2]], 3).unwrap();
        assert!((a.get2(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((a.get2(0, 1) - 0.408_248_290_463_863).abs() < 1e-12);
        assert_eq!(a.get2(0, 2), 0.0);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(normalize_adjacency(&[[0, 2]], 2).is_err());
        assert!(normalize_adjacency(&[[1, 1]], 2).is_err());
        assert!(normalize_adjacency(&[[0, 1], [1, 0]], 2).is_err());
    }
}
