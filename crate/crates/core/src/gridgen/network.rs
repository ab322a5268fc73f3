//! The 44-node, two-feeder radial test system.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const NUM_NODES: usize = 44;
pub const NUM_EDGES: usize = 42;
const NUM_FEEDERS: usize = 2;
const COMMERCIAL_NODES: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadClass {
    Residential,
    Hospital,
    Restaurant,
    Retail,
    Hotel,
    Office,
}

impl LoadClass {
    pub const ALL: [LoadClass; 6] = [
        LoadClass::Residential,
        LoadClass::Hospital,
        LoadClass::Restaurant,
        LoadClass::Retail,
        LoadClass::Hotel,
        LoadClass::Office,
    ];
    pub const COMMERCIAL: [LoadClass; 5] = [
        LoadClass::Hospital,
        LoadClass::Restaurant,
        LoadClass::Retail,
        LoadClass::Hotel,
        LoadClass::Office,
    ];

    pub fn is_residential(self) -> bool {
        self == LoadClass::Residential
    }
}

impl fmt::Display for LoadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LoadClass::Residential => "residential",
            LoadClass::Hospital => "hospital",
            LoadClass::Restaurant => "restaurant",
            LoadClass::Retail => "retail",
            LoadClass::Hotel => "hotel",
            LoadClass::Office => "office",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: usize,
    pub load_class: LoadClass,
    /// Household count for residential nodes, floor area in ft² otherwise.
    pub size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionNetwork {
    pub nodes: Vec<Node>,
    pub edges: Vec<[usize; 2]>,
}

/// Grows two radial feeders from nodes 0 and 22. Each new node hangs off one
/// of the three most recent nodes on its feeder, which yields long laterals
/// with occasional branching.
pub fn build_network(seed: u64) -> DistributionNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_feeder = NUM_NODES / NUM_FEEDERS;
    let mut edges = Vec::with_capacity(NUM_EDGES);
    for feeder in 0..NUM_FEEDERS {
        let root = feeder * per_feeder;
        for node in root + 1..root + per_feeder {
            let lo = root.max(node.saturating_sub(3));
            let parent = rng.random_range(lo..node);
            edges.push([parent, node]);
        }
    }

    let mut classes: Vec<LoadClass> = (0..COMMERCIAL_NODES)
        .map(|i| LoadClass::COMMERCIAL[i % LoadClass::COMMERCIAL.len()])
        .collect();
    classes.resize(NUM_NODES, LoadClass::Residential);
    classes.shuffle(&mut rng);

    let (lo, hi) = (20_000f64.ln(), 500_000f64.ln());
    let nodes = classes
        .into_iter()
        .enumerate()
        .map(|(id, load_class)| {
            let size = if load_class.is_residential() {
                rng.random_range(50..=400u32) as f64
            } else {
                rng.random_range(lo..hi).exp().round()
            };
            Node { id, load_class, size }
        })
        .collect();
    DistributionNetwork { nodes, edges }
}

impl DistributionNetwork {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Connected components by union-find.
    pub fn component_count(&self) -> usize {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut count = n;
        for &[a, b] in &self.edges {
            if a >= n || b >= n {
                continue;
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
                count -= 1;
            }
        }
        count
    }

    /// Ids are `0..n` in order, edges are in range, unique and loop-free, and
    /// the graph is a forest.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::Empty("network"));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::invalid(format!("node at position {i} has id {}", node.id)));
            }
            if !(node.size > 0.0 && node.size.is_finite()) {
                return Err(Error::invalid(format!("node {i} has nonpositive size")));
            }
        }
        let mut seen = BTreeSet::new();
        for &[a, b] in &self.edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at node {a}")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::invalid(format!("duplicate edge ({a}, {b})")));
            }
        }
        if self.edges.len() + self.component_count() != n {
            return Err(Error::invalid("network contains a cycle"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("network serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
