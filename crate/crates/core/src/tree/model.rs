use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::HISTOGRAM_TOL;

/// Undirected edge `(a, b)` with potential table `ψ[x_a, x_b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    pub potential: DMatrix<f64>,
}

impl TreeEdge {
    pub fn new(a: usize, b: usize, potential: DMatrix<f64>) -> Self {
        Self { a, b, potential }
    }
}

/// Pairwise model `p(x) ∝ Π ψ_ab(x_a, x_b)` on a tree, with aggregate
/// histograms attached to some of its leaves.
#[derive(Debug, Clone)]
pub struct TreeModel {
    cards: Vec<usize>,
    edges: Vec<TreeEdge>,
    observed: BTreeMap<usize, DVector<f64>>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl TreeModel {
    /// Checks that the edges form a spanning tree over `cards.len()` nodes and
    /// that every potential is shaped to its endpoints and strictly positive.
    pub fn new(cards: Vec<usize>, edges: Vec<TreeEdge>) -> Result<Self> {
        let n = cards.len();
        if n == 0 {
            return Err(Error::NotATree("no nodes".into()));
        }
        if let Some(i) = cards.iter().position(|&c| c == 0) {
            return Err(Error::InvalidDimensions(format!("node {i} has no states")));
        }
        if edges.len() != n - 1 {
            return Err(Error::NotATree(format!(
                "{} edges for {n} nodes, expected {}",
                edges.len(),
                n - 1
            )));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (e, edge) in edges.iter().enumerate() {
            if edge.a >= n || edge.b >= n || edge.a == edge.b {
                return Err(Error::NotATree(format!(
                    "edge {e} joins ({}, {})",
                    edge.a, edge.b
                )));
            }
            let want = (cards[edge.a], cards[edge.b]);
            if edge.potential.shape() != want {
                return Err(Error::DimensionMismatch(format!(
                    "potential on edge {e} has shape {:?}, expected {want:?}",
                    edge.potential.shape()
                )));
            }
            if edge.potential.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidDimensions(format!(
                    "potential on edge {e} has a non-positive entry"
                )));
            }
            adjacency[edge.a].push((edge.b, e));
            adjacency[edge.b].push((edge.a, e));
        }
        let model = Self {
            cards,
            edges,
            observed: BTreeMap::new(),
            adjacency,
        };
        let (order, _) = model.bfs(0);
        if order.len() != n {
            return Err(Error::NotATree("graph is disconnected".into()));
        }
        Ok(model)
    }

    /// Attaches a normalized histogram to leaf `node`.
    pub fn observe(&mut self, node: usize, histogram: DVector<f64>) -> Result<()> {
        if node >= self.num_nodes() {
            return Err(Error::InvalidDimensions(format!(
                "node {node} does not exist"
            )));
        }
        if self.degree(node) != 1 {
            return Err(Error::ObservedNotLeaf(node));
        }
        if histogram.len() != self.cards[node] {
            return Err(Error::DimensionMismatch(format!(
                "histogram for node {node} has {} entries, expected {}",
                histogram.len(),
                self.cards[node]
            )));
        }
        let sum = histogram.sum();
        if histogram.iter().any(|v| *v < 0.0 || !v.is_finite()) || (sum - 1.0).abs() > HISTOGRAM_TOL
        {
            return Err(Error::Format(format!(
                "histogram for node {node} is not a probability vector (sum {sum})"
            )));
        }
        self.observed.insert(node, histogram);
        Ok(())
    }

    pub fn with_observation(mut self, node: usize, histogram: DVector<f64>) -> Result<Self> {
        self.observe(node, histogram)?;
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.cards.len()
    }

    pub fn cardinality(&self, node: usize) -> usize {
        self.cards[node]
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn edges(&self) -> &[TreeEdge] {
        &self.edges
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    /// `(neighbor, edge index)` pairs of `node`.
    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    /// Observed leaves with their histograms, in ascending node order.
    pub fn observed(&self) -> &BTreeMap<usize, DVector<f64>> {
        &self.observed
    }

    pub fn histogram(&self, node: usize) -> Option<&DVector<f64>> {
        self.observed.get(&node)
    }

    /// Breadth-first order from `root` and the `(parent, edge)` of each
    /// reached node.
    pub(crate) fn bfs(&self, root: usize) -> (Vec<usize>, Vec<Option<(usize, usize)>>) {
        let mut parent = vec![None; self.num_nodes()];
        let mut seen = vec![false; self.num_nodes()];
        let mut order = Vec::with_capacity(self.num_nodes());
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(v, e) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some((u, e));
                    queue.push_back(v);
                }
            }
        }
        (order, parent)
    }

    /// Directed steps `(from, edge)` along the unique path `from → to`.
    pub(crate) fn path(&self, from: usize, to: usize) -> Vec<(usize, usize)> {
        let (_, parent) = self.bfs(to);
        let mut steps = Vec::new();
        let mut u = from;
        while u != to {
            let (p, e) = parent[u].expect("tree is connected");
            steps.push((u, e));
            u = p;
        }
        steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_element(r, c, 1.0)
    }

    #[test]
    fn rejects_cycles_and_forests() {
        let cycle = vec![
            TreeEdge::new(0, 1, ones(2, 2)),
            TreeEdge::new(1, 2, ones(2, 2)),
            TreeEdge::new(2, 0, ones(2, 2)),
        ];
        assert!(matches!(
            TreeModel::new(vec![2; 3], cycle),
            Err(Error::NotATree(_))
        ));
        let forest = vec![
            TreeEdge::new(0, 1, ones(2, 2)),
            TreeEdge::new(0, 1, ones(2, 2)),
        ];
        assert!(matches!(
            TreeModel::new(vec![2; 3], forest),
            Err(Error::NotATree(_))
        ));
    }

    #[test]
    fn rejects_non_positive_potentials() {
        let mut psi = ones(2, 2);
        psi[(0, 1)] = 0.0;
        assert!(TreeModel::new(vec![2, 2], vec![TreeEdge::new(0, 1, psi)]).is_err());
    }

    #[test]
    fn observations_only_on_leaves() {
        let edges = vec![
            TreeEdge::new(0, 1, ones(2, 2)),
            TreeEdge::new(1, 2, ones(2, 2)),
        ];
        let mut m = TreeModel::new(vec![2; 3], edges).unwrap();
        let y = DVector::from_vec(vec![0.5, 0.5]);
        assert!(matches!(
            m.observe(1, y.clone()),
            Err(Error::ObservedNotLeaf(1))
        ));
        m.observe(2, y).unwrap();
        assert_eq!(m.observed().len(), 1);
    }

    #[test]
    fn path_walks_through_the_tree() {
        let edges = vec![
            TreeEdge::new(0, 1, ones(2, 2)),
            TreeEdge::new(1, 2, ones(2, 2)),
            TreeEdge::new(1, 3, ones(2, 2)),
        ];
        let m = TreeModel::new(vec![2; 4], edges).unwrap();
        assert_eq!(m.path(2, 3), vec![(2, 1), (1, 2)]);
        assert!(m.path(3, 3).is_empty());
    }
}
