use super::PoreNetwork;

/// Disjoint sets with union by size and path halving.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Partitions the active nodes into maximal sets connected through arcs
/// whose endpoints are both active.
///
/// Components are ordered by their smallest node id and each is sorted.
pub fn connected_components(net: &PoreNetwork, active: &[bool]) -> Vec<Vec<usize>> {
    assert_eq!(
        active.len(),
        net.node_count(),
        "active mask length must equal node count"
    );
    let mut uf = UnionFind::new(net.node_count());
    for arc in net.arcs() {
        if active[arc.i] && active[arc.j] {
            uf.union(arc.i, arc.j);
        }
    }
    let mut slot = vec![usize::MAX; net.node_count()];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for v in (0..net.node_count()).filter(|&v| active[v]) {
        let root = uf.find(v);
        if slot[root] == usize::MAX {
            slot[root] = out.len();
            out.push(Vec::new());
        }
        out[slot[root]].push(v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{AdjacencyArc, BallNode};

    fn net(n: usize, pairs: &[(usize, usize)]) -> PoreNetwork {
        let nodes = (0..n)
            .map(|k| BallNode::new(k, [0.0, 0.0, 2.0 * k as f64], 1.0))
            .collect();
        let arcs = pairs
            .iter()
            .map(|&(i, j)| AdjacencyArc {
                i,
                j,
                distance: 2.0,
                contact_area: 1.0,
            })
            .collect();
        PoreNetwork::new(nodes, arcs).unwrap()
    }

    #[test]
    fn simple_cases() {
        let g = net(2, &[(0, 1)]);
        assert_eq!(connected_components(&g, &[true, true]), vec![vec![0, 1]]);
        assert_eq!(connected_components(&g, &[true, false]), vec![vec![0]]);
        let g = net(4, &[(0, 1), (2, 3)]);
        assert_eq!(
            connected_components(&g, &[true; 4]),
            vec![vec![0, 1], vec![2, 3]]
        );
    }

    #[test]
    fn inactive_node_splits_path() {
        let g = net(3, &[(0, 1), (1, 2)]);
        assert_eq!(
            connected_components(&g, &[true, false, true]),
            vec![vec![0], vec![2]]
        );
    }

    #[test]
    fn union_find_reports_redundant_unions() {
        let mut uf = UnionFind::new(3);
        assert!(uf.union(0, 1));
        assert!(uf.union(1, 2));
        assert!(!uf.union(0, 2));
        assert_eq!(uf.find(0), uf.find(2));
    }
}
