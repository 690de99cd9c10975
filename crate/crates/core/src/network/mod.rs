//! Attributed relational graph of pore-space balls.
//!
//! Nodes are balls (center, radius, volume); arcs carry the center distance
//! and the contact-surface area used by the diffusion operators. The graph is
//! immutable once built and can be shared across workers.

mod components;
mod text;

use std::collections::HashMap;
use std::f64::consts::PI;

pub use components::{connected_components, UnionFind};
pub use text::{load_network, load_network_with, read_network, save_network, write_network, LoadOptions, NetworkFormat};

use crate::error::{Error, Result};

/// Slack used when deriving arcs from ball tangency, in voxels.
pub const TANGENCY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BallNode {
    pub id: usize,
    pub center: [f64; 3],
    pub radius: f64,
    pub volume: f64,
}

impl BallNode {
    /// Ball with volume derived from its radius.
    pub fn new(id: usize, center: [f64; 3], radius: f64) -> Self {
        Self {
            id,
            center,
            radius,
            volume: ball_volume(radius),
        }
    }

    pub fn with_volume(mut self, volume: f64) -> Self {
        self.volume = volume;
        self
    }

    pub fn distance_to(&self, other: &BallNode) -> f64 {
        euclidean(&self.center, &other.center)
    }
}

pub fn ball_volume(radius: f64) -> f64 {
    4.0 / 3.0 * PI * radius * radius * radius
}

fn euclidean(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// An undirected arc; `i < j` after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyArc {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub contact_area: f64,
}

impl AdjacencyArc {
    pub fn other(&self, node: usize) -> usize {
        if self.i == node {
            self.j
        } else {
            self.i
        }
    }
}

/// Contact-surface area between two adjacent balls: `alpha * pi * min(r_i, r_j)^2`.
pub fn compute_contact_area(r_i: f64, r_j: f64, alpha: f64) -> Result<f64> {
    if !(r_i > 0.0 && r_j > 0.0) || !r_i.is_finite() || !r_j.is_finite() {
        return Err(Error::Domain(format!(
            "radii must be positive, got {r_i} and {r_j}"
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!(
            "contact factor must lie in (0, 1], got {alpha}"
        )));
    }
    let r = r_i.min(r_j);
    Ok(alpha * PI * r * r)
}

#[derive(Debug, Clone)]
pub struct PoreNetwork {
    nodes: Vec<BallNode>,
    arcs: Vec<AdjacencyArc>,
    adjacency: Vec<Vec<usize>>,
    external_ids: Vec<i64>,
}

impl PoreNetwork {
    /// Builds and validates a network. Arc endpoints are canonicalized to `i < j`.
    pub fn new(nodes: Vec<BallNode>, arcs: Vec<AdjacencyArc>) -> Result<Self> {
        let external_ids = (0..nodes.len() as i64).collect();
        Self::with_external_ids(nodes, arcs, external_ids)
    }

    pub(crate) fn with_external_ids(
        mut nodes: Vec<BallNode>,
        mut arcs: Vec<AdjacencyArc>,
        external_ids: Vec<i64>,
    ) -> Result<Self> {
        for (k, node) in nodes.iter_mut().enumerate() {
            node.id = k;
            if !(node.radius > 0.0) || !node.radius.is_finite() {
                return Err(Error::Validation(format!(
                    "ball {} has non-positive radius {}",
                    external_ids[k], node.radius
                )));
            }
            if !(node.volume > 0.0) || !node.volume.is_finite() {
                return Err(Error::Validation(format!(
                    "ball {} has non-positive volume {}",
                    external_ids[k], node.volume
                )));
            }
            if node.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::Validation(format!(
                    "ball {} has a non-finite center",
                    external_ids[k]
                )));
            }
        }

        let n = nodes.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = HashMap::with_capacity(arcs.len());
        for (k, arc) in arcs.iter_mut().enumerate() {
            if arc.i >= n || arc.j >= n {
                return Err(Error::Validation(format!(
                    "arc ({}, {}) references a node outside 0..{n}",
                    arc.i, arc.j
                )));
            }
            if arc.i == arc.j {
                return Err(Error::Validation(format!("self-loop on node {}", arc.i)));
            }
            if arc.i > arc.j {
                std::mem::swap(&mut arc.i, &mut arc.j);
            }
            if !(arc.distance > 0.0) || !arc.distance.is_finite() {
                return Err(Error::Validation(format!(
                    "arc ({}, {}) has non-positive distance {}",
                    arc.i, arc.j, arc.distance
                )));
            }
            if !(arc.contact_area > 0.0) || !arc.contact_area.is_finite() {
                return Err(Error::Validation(format!(
                    "arc ({}, {}) has non-positive contact area {}",
                    arc.i, arc.j, arc.contact_area
                )));
            }
            if seen.insert((arc.i, arc.j), k).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate arc ({}, {})",
                    arc.i, arc.j
                )));
            }
            adjacency[arc.i].push(k);
            adjacency[arc.j].push(k);
        }

        Ok(Self {
            nodes,
            arcs,
            adjacency,
            external_ids,
        })
    }

    /// Builds a network whose arcs connect every tangent or intersecting pair
    /// of balls (`|c_i - c_j| <= r_i + r_j + TANGENCY_EPS`).
    pub fn from_balls_by_tangency(nodes: Vec<BallNode>, alpha: f64) -> Result<Self> {
        let arcs = derive_tangency_arcs(&nodes, alpha)?;
        Self::new(nodes, arcs)
    }

    pub fn nodes(&self) -> &[BallNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &BallNode {
        &self.nodes[id]
    }

    pub fn arcs(&self) -> &[AdjacencyArc] {
        &self.arcs
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Indices into `arcs()` of the arcs incident to `node`.
    pub fn incident_arcs(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[node]
            .iter()
            .map(move |&k| self.arcs[k].other(node))
    }

    /// Identifier of each node in the file it was loaded from.
    pub fn external_ids(&self) -> &[i64] {
        &self.external_ids
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.volume).collect()
    }

    pub fn total_volume(&self) -> f64 {
        self.nodes.iter().map(|n| n.volume).sum()
    }

    /// Copy of the network with every contact area recomputed from the ball
    /// radii as `alpha * pi * min(r_i, r_j)^2`.
    pub fn with_contact_factor(&self, alpha: f64) -> Result<Self> {
        let mut out = self.clone();
        for arc in &mut out.arcs {
            arc.contact_area =
                compute_contact_area(self.nodes[arc.i].radius, self.nodes[arc.j].radius, alpha)?;
        }
        Ok(out)
    }
}

pub(crate) fn derive_tangency_arcs(nodes: &[BallNode], alpha: f64) -> Result<Vec<AdjacencyArc>> {
    if nodes.is_empty() {
        return Ok(Vec::new());
    }
    let max_r = nodes.iter().map(|n| n.radius).fold(0.0_f64, f64::max);
    let cell = (2.0 * max_r + TANGENCY_EPS).max(f64::MIN_POSITIVE);
    let key = |c: &[f64; 3]| -> (i64, i64, i64) {
        (
            (c[0] / cell).floor() as i64,
            (c[1] / cell).floor() as i64,
            (c[2] / cell).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (k, n) in nodes.iter().enumerate() {
        grid.entry(key(&n.center)).or_default().push(k);
    }

    let mut arcs = Vec::new();
    for (i, a) in nodes.iter().enumerate() {
        let (cx, cy, cz) = key(&a.center);
        let mut candidates = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        candidates.extend(bucket.iter().copied().filter(|&j| j > i));
                    }
                }
            }
        }
        candidates.sort_unstable();
        for j in candidates {
            let b = &nodes[j];
            let d = a.distance_to(b);
            if d <= a.radius + b.radius + TANGENCY_EPS {
                arcs.push(AdjacencyArc {
                    i,
                    j,
                    distance: d,
                    contact_area: compute_contact_area(a.radius, b.radius, alpha)?,
                });
            }
        }
    }
    Ok(arcs)
}
