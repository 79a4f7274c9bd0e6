use super::messages::TreeMarginals;
use super::model::TreeModel;
use crate::error::{Error, Result};
use crate::simplex::{col_sums, neg_entropy, row_sums};

/// Marginals must satisfy consistency and normalization this tightly before
/// their energy is evaluated.
pub const BETHE_CONSISTENCY_TOL: f64 = 1e-6;

/// Bethe free energy
/// `Σ_(a,b) Σ n_ab ln(n_ab / ψ_ab) − Σ_i (deg_i − 1) Σ n_i ln n_i`,
/// with `0 ln 0 = 0`.
pub fn bethe_free_energy(model: &TreeModel, marginals: &TreeMarginals) -> Result<f64> {
    check_marginals(model, marginals)?;
    let mut energy = 0.0;
    for (edge, joint) in model.edges().iter().zip(&marginals.edges) {
        for (n, psi) in joint.iter().zip(edge.potential.iter()) {
            if *n > 0.0 {
                energy += n * (n / psi).ln();
            }
        }
    }
    for (i, node) in marginals.nodes.iter().enumerate() {
        let weight = model.degree(i) as f64 - 1.0;
        if weight != 0.0 {
            energy -= weight * neg_entropy(node.iter());
        }
    }
    Ok(energy)
}

fn check_marginals(model: &TreeModel, m: &TreeMarginals) -> Result<()> {
    if m.nodes.len() != model.num_nodes() || m.edges.len() != model.edges().len() {
        return Err(Error::DimensionMismatch(format!(
            "marginals cover {} nodes and {} edges, model has {} and {}",
            m.nodes.len(),
            m.edges.len(),
            model.num_nodes(),
            model.edges().len()
        )));
    }
    for (i, n) in m.nodes.iter().enumerate() {
        if n.len() != model.cardinality(i) {
            return Err(Error::DimensionMismatch(format!(
                "node {i} marginal has wrong length"
            )));
        }
        let defect = (n.sum() - 1.0).abs();
        if defect > BETHE_CONSISTENCY_TOL || n.iter().any(|&v| v < 0.0) {
            return Err(Error::ConstraintViolation(format!(
                "node {i} marginal is not normalized (off by {defect:e})"
            )));
        }
    }
    for (e, (edge, joint)) in model.edges().iter().zip(&m.edges).enumerate() {
        if joint.shape() != edge.potential.shape() {
            return Err(Error::DimensionMismatch(format!(
                "edge {e} marginal has wrong shape"
            )));
        }
        let defect = (row_sums(joint) - &m.nodes[edge.a])
            .amax()
            .max((col_sums(joint) - &m.nodes[edge.b]).amax());
        if defect > BETHE_CONSISTENCY_TOL || joint.iter().any(|&v| v < 0.0) {
            return Err(Error::ConstraintViolation(format!(
                "edge {e} marginal disagrees with its nodes by {defect:e}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};

    use super::*;
    use crate::tree::TreeEdge;

    #[test]
    fn uniform_edge_energy_is_log_quarter() {
        let m = TreeModel::new(
            vec![2, 2],
            vec![TreeEdge::new(0, 1, DMatrix::from_element(2, 2, 1.0))],
        )
        .unwrap();
        let marg = TreeMarginals {
            nodes: vec![DVector::from_element(2, 0.5); 2],
            edges: vec![DMatrix::from_element(2, 2, 0.25)],
        };
        let f = bethe_free_energy(&m, &marg).unwrap();
        assert!((f - (-1.3862943611198906)).abs() < 1e-15, "{f}");
    }

    #[test]
    fn normalized_potential_gives_minus_log_partition() {
        let psi = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let z = psi.sum();
        let joint = &psi / z;
        let m = TreeModel::new(vec![2, 3], vec![TreeEdge::new(0, 1, psi)]).unwrap();
        let marg = TreeMarginals {
            nodes: vec![row_sums(&joint), col_sums(&joint)],
            edges: vec![joint],
        };
        let f = bethe_free_energy(&m, &marg).unwrap();
        assert!((f + z.ln()).abs() < 1e-14, "{f} vs {}", -z.ln());
    }

    #[test]
    fn inconsistent_marginals_are_rejected() {
        let m = TreeModel::new(
            vec![2, 2],
            vec![TreeEdge::new(0, 1, DMatrix::from_element(2, 2, 1.0))],
        )
        .unwrap();
        let marg = TreeMarginals {
            nodes: vec![
                DVector::from_vec(vec![0.9, 0.1]),
                DVector::from_element(2, 0.5),
            ],
            edges: vec![DMatrix::from_element(2, 2, 0.25)],
        };
        assert!(matches!(
            bethe_free_energy(&m, &marg),
            Err(Error::ConstraintViolation(_))
        ));
    }
}
