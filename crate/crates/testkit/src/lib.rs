//! Reference oracles for the aggregate-hmm test suites.
//!
//! Everything here works on plain `Vec<f64>` tables and deliberately shares no
//! code with the library: joint distributions are enumerated state by state,
//! energies are summed term by term. Only suitable for tiny models.

/// Deterministic 64-bit generator (SplitMix64) for building random fixtures.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// Strictly positive probability vector, bounded away from zero.
    pub fn simplex(&mut self, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| 0.05 + self.uniform()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }

    pub fn stochastic(&mut self, rows: usize, cols: usize) -> Vec<Vec<f64>> {
        (0..rows).map(|_| self.simplex(cols)).collect()
    }

    /// Random labelled tree on `n` nodes: node `i > 0` attaches to a uniformly
    /// chosen earlier node.
    pub fn tree_edges(&mut self, n: usize) -> Vec<(usize, usize)> {
        (1..n).map(|i| (self.below(i), i)).collect()
    }
}

/// Iterates every assignment of a mixed-radix counter with the given radices.
pub fn for_each_assignment(cards: &[usize], mut f: impl FnMut(&[usize])) {
    let mut state = vec![0usize; cards.len()];
    if cards.iter().any(|&c| c == 0) {
        return;
    }
    loop {
        f(&state);
        let mut pos = 0;
        loop {
            if pos == cards.len() {
                return;
            }
            state[pos] += 1;
            if state[pos] < cards[pos] {
                break;
            }
            state[pos] = 0;
            pos += 1;
        }
    }
}

/// A pairwise potential `table[x_a][x_b]` on edge `(a, b)`.
pub type EdgeTable = (usize, usize, Vec<Vec<f64>>);

/// Exact node and edge marginals of `p(x) ∝ Π ψ_ab(x_a, x_b)`, conditioned on
/// `evidence` (node, state) pairs, by summing over every joint assignment.
pub fn tree_marginals(
    cards: &[usize],
    edges: &[EdgeTable],
    evidence: &[(usize, usize)],
) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let mut nodes: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    let mut pairs: Vec<Vec<Vec<f64>>> = edges
        .iter()
        .map(|(a, b, _)| vec![vec![0.0; cards[*b]]; cards[*a]])
        .collect();
    let mut total = 0.0;
    for_each_assignment(cards, |x| {
        if evidence.iter().any(|&(node, s)| x[node] != s) {
            return;
        }
        let mut w = 1.0;
        for (a, b, table) in edges {
            w *= table[x[*a]][x[*b]];
        }
        total += w;
        for (i, &xi) in x.iter().enumerate() {
            nodes[i][xi] += w;
        }
        for (e, (a, b, _)) in edges.iter().enumerate() {
            pairs[e][x[*a]][x[*b]] += w;
        }
    });
    for v in nodes.iter_mut() {
        v.iter_mut().for_each(|p| *p /= total);
    }
    for m in pairs.iter_mut() {
        m.iter_mut().flatten().for_each(|p| *p /= total);
    }
    (nodes, pairs)
}

/// Posterior summaries of an HMM path computed by enumerating all `d^T`
/// hidden paths.
#[derive(Debug, Clone)]
pub struct HmmEnumeration {
    /// `ln Σ_x p(x, o)`.
    pub log_likelihood: f64,
    /// `p(x_t | o)` per t.
    pub node: Vec<Vec<f64>>,
    /// `p(x_t, x_{t+1} | o)` per t.
    pub edge: Vec<Vec<Vec<f64>>>,
}

/// Enumerates an HMM given per-time emission likelihoods `lik[t][x]`
/// (discrete `B[x][o_t]` or a density value).
pub fn hmm_enumerate(pi: &[f64], a: &[Vec<f64>], lik: &[Vec<f64>]) -> HmmEnumeration {
    let d = pi.len();
    let horizon = lik.len();
    let mut node = vec![vec![0.0; d]; horizon];
    let mut edge = vec![vec![vec![0.0; d]; d]; horizon.saturating_sub(1)];
    let mut total = 0.0;
    for_each_assignment(&vec![d; horizon], |x| {
        let mut w = pi[x[0]] * lik[0][x[0]];
        for t in 1..horizon {
            w *= a[x[t - 1]][x[t]] * lik[t][x[t]];
        }
        total += w;
        for t in 0..horizon {
            node[t][x[t]] += w;
        }
        for t in 0..horizon.saturating_sub(1) {
            edge[t][x[t]][x[t + 1]] += w;
        }
    });
    if total > 0.0 {
        node.iter_mut().flatten().for_each(|p| *p /= total);
        edge.iter_mut()
            .flatten()
            .flatten()
            .for_each(|p| *p /= total);
    }
    HmmEnumeration {
        log_likelihood: total.ln(),
        node,
        edge,
    }
}

/// Discrete-emission convenience wrapper around [`hmm_enumerate`].
pub fn hmm_enumerate_discrete(
    pi: &[f64],
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    obs: &[usize],
) -> HmmEnumeration {
    let lik: Vec<Vec<f64>> = obs
        .iter()
        .map(|&o| b.iter().map(|row| row[o]).collect())
        .collect();
    hmm_enumerate(pi, a, &lik)
}

/// Bethe free energy by direct summation:
/// `Σ_edges Σ n_ab ln(n_ab / ψ_ab) − Σ_i (deg_i − 1) Σ n_i ln n_i`.
pub fn bethe_direct(
    cards: &[usize],
    edges: &[EdgeTable],
    node_marginals: &[Vec<f64>],
    edge_marginals: &[Vec<Vec<f64>>],
) -> f64 {
    let mut degree = vec![0usize; cards.len()];
    for (a, b, _) in edges {
        degree[*a] += 1;
        degree[*b] += 1;
    }
    let mut energy = 0.0;
    for (e, (_, _, psi)) in edges.iter().enumerate() {
        for (i, row) in psi.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                let n = edge_marginals[e][i][j];
                if n > 0.0 {
                    energy += n * (n / p).ln();
                }
            }
        }
    }
    for (i, marg) in node_marginals.iter().enumerate() {
        let weight = degree[i] as f64 - 1.0;
        for &n in marg {
            if n > 0.0 {
                energy -= weight * n * n.ln();
            }
        }
    }
    energy
}

/// Multivariate normal density for dimension 1 or 2 via explicit inverse.
pub fn gaussian_density(o: &[f64], mean: &[f64], cov: &[Vec<f64>]) -> f64 {
    use std::f64::consts::PI;
    match o.len() {
        1 => {
            let var = cov[0][0];
            let z = o[0] - mean[0];
            (-0.5 * z * z / var).exp() / (2.0 * PI * var).sqrt()
        }
        2 => {
            let (a, b, c, d) = (cov[0][0], cov[0][1], cov[1][0], cov[1][1]);
            let det = a * d - b * c;
            let z0 = o[0] - mean[0];
            let z1 = o[1] - mean[1];
            let quad = (d * z0 * z0 - (b + c) * z0 * z1 + a * z1 * z1) / det;
            (-0.5 * quad).exp() / (2.0 * PI * det.sqrt())
        }
        n => panic!("gaussian_density oracle supports dimension 1 or 2, got {n}"),
    }
}

/// Central difference `(f(x + h) − f(x − h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_of_independent_chain_is_uniform() {
        let flat = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let (nodes, pairs) = tree_marginals(&[2, 2], &[(0, 1, flat)], &[]);
        assert_eq!(nodes, vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert_eq!(pairs[0], vec![vec![0.25, 0.25], vec![0.25, 0.25]]);
    }

    #[test]
    fn hmm_enumeration_uniform_likelihood() {
        let pi = vec![0.5, 0.5];
        let a = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let b = vec![vec![0.25; 4], vec![0.25; 4]];
        let e = hmm_enumerate_discrete(&pi, &a, &b, &[0, 3, 2]);
        assert!((e.log_likelihood - 3.0 * 0.25f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn bethe_direct_uniform_edge() {
        let psi = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let f = bethe_direct(
            &[2, 2],
            &[(0, 1, psi)],
            &[vec![0.5, 0.5], vec![0.5, 0.5]],
            &[vec![vec![0.25, 0.25], vec![0.25, 0.25]]],
        );
        assert!((f - 0.25f64.ln()).abs() < 1e-15);
    }
}
