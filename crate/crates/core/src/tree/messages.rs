use nalgebra::{DMatrix, DVector};

use super::model::TreeModel;
use crate::simplex::{normalize, normalize_floored, uniform, FLOOR};

/// Both directed messages of every edge. Message `from → to` is a
/// normalized, strictly positive vector over the states of `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet {
    msgs: Vec<DVector<f64>>,
}

/// Node and edge marginals over a tree, indexed like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeMarginals {
    pub nodes: Vec<DVector<f64>>,
    /// `edges[e][(x_a, x_b)]` for edge `e = (a, b)`.
    pub edges: Vec<DMatrix<f64>>,
}

fn slot(model: &TreeModel, from: usize, edge: usize) -> usize {
    if model.edges()[edge].a == from {
        2 * edge
    } else {
        2 * edge + 1
    }
}

impl MessageSet {
    pub(crate) fn uniform(model: &TreeModel) -> Self {
        let msgs = model
            .edges()
            .iter()
            .flat_map(|e| {
                [
                    uniform(model.cardinality(e.b)),
                    uniform(model.cardinality(e.a)),
                ]
            })
            .collect();
        Self { msgs }
    }

    /// Message sent along `edge` by `from`.
    pub fn get(&self, model: &TreeModel, from: usize, edge: usize) -> &DVector<f64> {
        &self.msgs[slot(model, from, edge)]
    }

    pub(crate) fn set(&mut self, model: &TreeModel, from: usize, edge: usize, msg: DVector<f64>) {
        let i = slot(model, from, edge);
        self.msgs[i] = msg;
    }

    /// Largest entrywise change between two message sets of the same model.
    pub fn max_abs_diff(&self, other: &MessageSet) -> f64 {
        self.msgs
            .iter()
            .zip(&other.msgs)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }

    /// Product of the messages arriving at `node`, skipping edge `except`.
    pub(crate) fn incoming_product(
        &self,
        model: &TreeModel,
        node: usize,
        except: Option<usize>,
    ) -> DVector<f64> {
        let mut prod = DVector::from_element(model.cardinality(node), 1.0);
        for &(k, e) in model.neighbors(node) {
            if Some(e) != except {
                prod.component_mul_assign(self.get(model, k, e));
            }
        }
        prod
    }

    /// Standard sum-product update of `from → other end of edge`, normalized.
    pub(crate) fn standard_update(
        &self,
        model: &TreeModel,
        from: usize,
        edge: usize,
    ) -> DVector<f64> {
        let prod = self.incoming_product(model, from, Some(edge));
        let mut out = push_through(model, from, edge, &prod);
        normalize_floored(&mut out);
        out
    }

    /// Scaling update at an observed leaf: pushes `y / m_{j→i}` through the
    /// potential so that the leaf's marginal reproduces its histogram.
    pub(crate) fn scaling_update(
        &self,
        model: &TreeModel,
        leaf: usize,
        edge: usize,
        histogram: &DVector<f64>,
    ) -> DVector<f64> {
        let (j, _) = model.neighbors(leaf)[0];
        let ratio = scaling_ratio(histogram, self.get(model, j, edge));
        let mut out = push_through(model, leaf, edge, &ratio);
        normalize_floored(&mut out);
        out
    }

    /// Recomputes the outgoing message of `from` along `edge`, using the
    /// scaling form when `from` is an observed leaf.
    pub(crate) fn update(&self, model: &TreeModel, from: usize, edge: usize) -> DVector<f64> {
        match model.histogram(from) {
            Some(y) => self.scaling_update(model, from, edge, y),
            None => self.standard_update(model, from, edge),
        }
    }

    /// Leaf-to-root then root-to-leaf sweep. With `hold_observed`, messages
    /// leaving observed leaves are kept as they are.
    pub(crate) fn sweep(&mut self, model: &TreeModel, hold_observed: bool) {
        let (order, parent) = model.bfs(0);
        for &u in order.iter().rev() {
            if let Some((_, e)) = parent[u] {
                if !(hold_observed && model.histogram(u).is_some()) {
                    let m = self.update(model, u, e);
                    self.set(model, u, e, m);
                }
            }
        }
        for &u in &order {
            if hold_observed && model.histogram(u).is_some() {
                continue;
            }
            for &(v, e) in model.neighbors(u) {
                if parent[v].map(|(p, _)| p) == Some(u) {
                    let m = self.update(model, u, e);
                    self.set(model, u, e, m);
                }
            }
        }
    }

    /// Node and edge marginals implied by the current messages. Observed
    /// leaves take their histogram as node marginal and act on their edge
    /// through the factor `y / m_{j→i}`, so the leaf side of every observed
    /// edge table sums exactly to the histogram.
    pub fn marginals(&self, model: &TreeModel) -> TreeMarginals {
        let nodes = (0..model.num_nodes())
            .map(|i| match model.histogram(i) {
                Some(y) => y.clone(),
                None => {
                    let mut n = self.incoming_product(model, i, None);
                    normalize(&mut n);
                    n
                }
            })
            .collect();
        let edges = model
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                let fa = self.endpoint_factor(model, edge.a, e);
                let fb = self.endpoint_factor(model, edge.b, e);
                let mut joint =
                    DMatrix::from_fn(edge.potential.nrows(), edge.potential.ncols(), |i, j| {
                        fa[i] * edge.potential[(i, j)] * fb[j]
                    });
                crate::simplex::normalize_matrix(&mut joint);
                joint
            })
            .collect();
        TreeMarginals { nodes, edges }
    }

    fn endpoint_factor(&self, model: &TreeModel, node: usize, edge: usize) -> DVector<f64> {
        match model.histogram(node) {
            Some(y) => {
                let (j, _) = model.neighbors(node)[0];
                scaling_ratio(y, self.get(model, j, edge))
            }
            None => self.incoming_product(model, node, Some(edge)),
        }
    }
}

fn scaling_ratio(histogram: &DVector<f64>, incoming: &DVector<f64>) -> DVector<f64> {
    histogram.zip_map(incoming, |y, m| y / m.max(FLOOR))
}

/// `Σ_{x_from} ψ(x_from, x_to) · input(x_from)`.
fn push_through(model: &TreeModel, from: usize, edge: usize, input: &DVector<f64>) -> DVector<f64> {
    let e = &model.edges()[edge];
    if e.a == from {
        e.potential.tr_mul(input)
    } else {
        &e.potential * input
    }
}
