//! Synthetic ball networks used as fixtures and benchmarks.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BallNode, PoreNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// `size` unit balls stacked along z.
    Chain,
    /// `size`^3 unit balls on a cubic lattice.
    Grid3d,
    /// `size` balls of radius in [1, 3], each tangent to an earlier one.
    RandomTangent,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Self::Chain),
            "grid3d" => Ok(Self::Grid3d),
            "random_tangent" | "random-tangent" => Ok(Self::RandomTangent),
            _ => Err(Error::Config(format!("unknown network kind {s:?}"))),
        }
    }
}

const MIN_RADIUS: f64 = 1.0;
const MAX_RADIUS: f64 = 3.0;

/// Builds a connected network of tangent balls. Arcs come from the tangency
/// test with contact factor 1. `seed` only matters for random kinds.
pub fn generate_synthetic_network(kind: SyntheticKind, size: usize, seed: u64) -> Result<PoreNetwork> {
    if size == 0 {
        return Err(Error::Domain("network size must be at least 1".into()));
    }
    let nodes = match kind {
        SyntheticKind::Chain => (0..size)
            .map(|k| BallNode::new(k, [0.0, 0.0, 2.0 * k as f64], 1.0))
            .collect(),
        SyntheticKind::Grid3d => {
            let mut nodes = Vec::with_capacity(size * size * size);
            for x in 0..size {
                for y in 0..size {
                    for z in 0..size {
                        let c = [2.0 * x as f64, 2.0 * y as f64, 2.0 * z as f64];
                        nodes.push(BallNode::new(nodes.len(), c, 1.0));
                    }
                }
            }
            nodes
        }
        SyntheticKind::RandomTangent => random_tangent(size, seed),
    };
    PoreNetwork::from_balls_by_tangency(nodes, 1.0)
}

fn random_tangent(size: usize, seed: u64) -> Vec<BallNode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = 2.0 * MAX_RADIUS;
    let key = |c: &[f64; 3]| -> [i64; 3] { [0, 1, 2].map(|a| (c[a] / cell).floor() as i64) };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();

    let r0 = rng.random_range(MIN_RADIUS..=MAX_RADIUS);
    let mut nodes = vec![BallNode::new(0, [0.0; 3], r0)];
    grid.entry(key(&nodes[0].center)).or_default().push(0);

    while nodes.len() < size {
        let parent = rng.random_range(0..nodes.len());
        let r = rng.random_range(MIN_RADIUS..=MAX_RADIUS);
        let z: f64 = rng.random_range(-1.0..=1.0);
        let phi = rng.random_range(0.0..2.0 * PI);
        let s = (1.0 - z * z).sqrt();
        let p = &nodes[parent];
        let d = p.radius + r;
        let c = [
            p.center[0] + d * s * phi.cos(),
            p.center[1] + d * s * phi.sin(),
            p.center[2] + d * z,
        ];
        let k = key(&c);
        let mut clash = false;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &o in ids {
                            if o == parent {
                                continue;
                            }
                            let q = &nodes[o];
                            let dist = ((q.center[0] - c[0]).powi(2)
                                + (q.center[1] - c[1]).powi(2)
                                + (q.center[2] - c[2]).powi(2))
                            .sqrt();
                            if dist < q.radius + r - 1e-9 {
                                clash = true;
                                break 'scan;
                            }
                        }
                    }
                }
            }
        }
        if clash {
            continue;
        }
        let id = nodes.len();
        nodes.push(BallNode::new(id, c, r));
        grid.entry(k).or_default().push(id);
    }
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::connected_components;

    #[test]
    fn chain_of_three() {
        let net = generate_synthetic_network(SyntheticKind::Chain, 3, 0).unwrap();
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.arc_count(), 2);
        assert!(net.arcs().iter().all(|a| a.distance == 2.0));
    }

    #[test]
    fn grid_counts_axis_neighbours() {
        for s in 1..5usize {
            let net = generate_synthetic_network(SyntheticKind::Grid3d, s, 0).unwrap();
            assert_eq!(net.node_count(), s * s * s);
            assert_eq!(net.arc_count(), 3 * s * s * (s - 1));
        }
    }

    #[test]
    fn random_tangent_is_seeded_and_connected() {
        let a = generate_synthetic_network(SyntheticKind::RandomTangent, 300, 7).unwrap();
        let b = generate_synthetic_network(SyntheticKind::RandomTangent, 300, 7).unwrap();
        let c = generate_synthetic_network(SyntheticKind::RandomTangent, 300, 8).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        assert_eq!(a.arcs(), b.arcs());
        assert_ne!(a.nodes(), c.nodes());
        assert_eq!(connected_components(&a, &vec![true; 300]).len(), 1);
        assert!(a.nodes().iter().all(|n| (MIN_RADIUS..=MAX_RADIUS).contains(&n.radius)));
    }

    #[test]
    fn zero_size_rejected() {
        assert!(generate_synthetic_network(SyntheticKind::Chain, 0, 0).is_err());
    }

    #[test]
    fn kind_names() {
        assert_eq!("grid3d".parse::<SyntheticKind>().unwrap(), SyntheticKind::Grid3d);
        assert!("torus".parse::<SyntheticKind>().is_err());
    }
}
