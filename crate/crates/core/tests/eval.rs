use aggregate_hmm::eval::{
    delta_nll, nll, nll_report, param_distance, param_distance_permuted, LOG_FLOOR,
};
use aggregate_hmm::model::{
    DiscreteEmission, Emission, GaussianEmission, HmmParams, Observations, TrajectorySet,
};
use aggregate_hmm_testkit::{
    for_each_assignment, gaussian_density, hmm_enumerate_discrete, SplitMix64,
};
use nalgebra::{DMatrix, DVector};

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn random_discrete(rng: &mut SplitMix64, d: usize, s: usize, horizon: usize) -> HmmParams {
    HmmParams {
        horizon,
        initial: DVector::from_vec(rng.simplex(d)),
        transition: matrix(&rng.stochastic(d, d)),
        emission: Emission::Discrete(DiscreteEmission {
            probs: matrix(&rng.stochastic(d, s)),
        }),
    }
}

fn symbol_set(paths: Vec<Vec<usize>>, s: usize) -> TrajectorySet {
    TrajectorySet {
        hidden: paths.iter().map(|p| vec![0; p.len()]).collect(),
        observations: Observations::Discrete {
            num_symbols: s,
            paths,
        },
    }
}

fn enumerated_log_likelihood(p: &HmmParams, path: &[usize]) -> f64 {
    let b = &p.discrete().unwrap().probs;
    hmm_enumerate_discrete(p.initial.as_slice(), &rows(&p.transition), &rows(b), path)
        .log_likelihood
}

#[test]
fn uniform_model_scores_t_log_s() {
    let (d, s, horizon) = (3, 5, 4);
    let p = HmmParams {
        horizon,
        initial: DVector::from_element(d, 1.0 / d as f64),
        transition: DMatrix::from_element(d, d, 1.0 / d as f64),
        emission: Emission::Discrete(DiscreteEmission {
            probs: DMatrix::from_element(d, s, 1.0 / s as f64),
        }),
    };
    let mut rng = SplitMix64::new(1);
    let paths = (0..7)
        .map(|_| (0..horizon).map(|_| rng.below(s)).collect())
        .collect();
    let v = nll(&p, &symbol_set(paths, s)).unwrap();
    assert!((v - horizon as f64 * (s as f64).ln()).abs() < 1e-12);
}

#[test]
fn single_path_matches_enumeration() {
    let mut rng = SplitMix64::new(2);
    for _ in 0..20 {
        let p = random_discrete(&mut rng, 2, 3, 3);
        let path: Vec<usize> = (0..3).map(|_| rng.below(3)).collect();
        let want = -enumerated_log_likelihood(&p, &path);
        let got = nll(&p, &symbol_set(vec![path], 3)).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn single_gaussian_state_is_a_density_sum() {
    let mean = DVector::from_row_slice(&[0.5, -1.0]);
    let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let p = HmmParams {
        horizon: 3,
        initial: DVector::from_element(1, 1.0),
        transition: DMatrix::from_element(1, 1, 1.0),
        emission: Emission::Gaussian(GaussianEmission {
            means: vec![mean.clone()],
            covs: vec![cov.clone()],
        }),
    };
    let mut rng = SplitMix64::new(3);
    let paths: Vec<Vec<DVector<f64>>> = (0..4)
        .map(|_| {
            (0..3)
                .map(|_| DVector::from_fn(2, |_, _| rng.range(-3.0, 3.0)))
                .collect()
        })
        .collect();
    // The library adds 1e-9 to the covariance diagonal before factorizing.
    let jittered = rows(&(&cov + DMatrix::identity(2, 2) * 1e-9));
    let want: f64 = -paths
        .iter()
        .flatten()
        .map(|o| gaussian_density(o.as_slice(), mean.as_slice(), &jittered).ln())
        .sum::<f64>()
        / 4.0;
    let traj = TrajectorySet {
        hidden: vec![vec![0; 3]; 4],
        observations: Observations::Continuous { dim: 2, paths },
    };
    assert!((nll(&p, &traj).unwrap() - want).abs() < 1e-10);
}

#[test]
fn delta_is_zero_on_identity_and_antisymmetric() {
    let mut rng = SplitMix64::new(4);
    let a = random_discrete(&mut rng, 3, 3, 4);
    let b = random_discrete(&mut rng, 3, 3, 4);
    let paths = (0..10)
        .map(|_| (0..4).map(|_| rng.below(3)).collect())
        .collect();
    let test = symbol_set(paths, 3);
    assert_eq!(delta_nll(&a, &a, &test).unwrap(), 0.0);
    assert_eq!(
        delta_nll(&a, &b, &test).unwrap(),
        -delta_nll(&b, &a, &test).unwrap()
    );
}

#[test]
fn nll_ignores_test_order() {
    let mut rng = SplitMix64::new(5);
    let p = random_discrete(&mut rng, 3, 4, 5);
    let paths: Vec<Vec<usize>> = (0..25)
        .map(|_| (0..5).map(|_| rng.below(4)).collect())
        .collect();
    let mut reversed = paths.clone();
    reversed.reverse();
    let a = nll(&p, &symbol_set(paths, 4)).unwrap();
    let b = nll(&p, &symbol_set(reversed, 4)).unwrap();
    assert!((a - b).abs() <= 1e-12 * a.abs());
}

#[test]
fn uniform_model_loses_to_spiked_truth_in_expectation() {
    let truth = HmmParams {
        horizon: 2,
        initial: DVector::from_row_slice(&[0.9, 0.1]),
        transition: DMatrix::from_row_slice(2, 2, &[0.95, 0.05, 0.1, 0.9]),
        emission: Emission::Discrete(DiscreteEmission {
            probs: DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]),
        }),
    };
    let uniform = HmmParams {
        initial: DVector::from_element(2, 0.5),
        transition: DMatrix::from_element(2, 2, 0.5),
        emission: Emission::Discrete(DiscreteEmission {
            probs: DMatrix::from_element(2, 2, 0.5),
        }),
        ..truth.clone()
    };
    let mut expected = 0.0;
    for_each_assignment(&[2, 2], |o| {
        let prob = enumerated_log_likelihood(&truth, o).exp();
        let single = symbol_set(vec![o.to_vec()], 2);
        expected += prob * delta_nll(&uniform, &truth, &single).unwrap();
    });
    assert!(expected > 0.0, "{expected}");
}

#[test]
fn impossible_paths_are_floored_and_counted() {
    let p = HmmParams {
        horizon: 2,
        initial: DVector::from_row_slice(&[1.0, 0.0]),
        transition: DMatrix::identity(2, 2),
        emission: Emission::Discrete(DiscreteEmission {
            probs: DMatrix::identity(2, 2),
        }),
    };
    let r = nll_report(&p, &symbol_set(vec![vec![0, 0], vec![1, 1]], 2)).unwrap();
    assert_eq!(r.floored, 1);
    assert!((r.nll - (-LOG_FLOOR / 2.0)).abs() < 1e-9);
}

#[test]
fn distances_are_symmetric_and_permutation_aware() {
    let mut rng = SplitMix64::new(6);
    for _ in 0..10 {
        let a = random_discrete(&mut rng, 4, 3, 3);
        let b = random_discrete(&mut rng, 4, 3, 3);
        assert_eq!(
            param_distance(&a, &b).unwrap(),
            param_distance(&b, &a).unwrap()
        );
        assert_eq!(param_distance(&a, &a).unwrap().max(), 0.0);
        let perm = [2, 0, 3, 1];
        let mut c = a.clone();
        c.initial = DVector::from_fn(4, |x, _| a.initial[perm[x]]);
        c.transition = DMatrix::from_fn(4, 4, |x, y| a.transition[(perm[x], perm[y])]);
        let ba = &a.discrete().unwrap().probs;
        c.emission = Emission::Discrete(DiscreteEmission {
            probs: DMatrix::from_fn(4, 3, |x, o| ba[(perm[x], o)]),
        });
        let (dist, found) = param_distance_permuted(&c, &a).unwrap();
        assert_eq!(found, perm.to_vec());
        assert_eq!(dist.max(), 0.0);
    }
}

#[test]
fn mismatched_shapes_are_rejected() {
    let mut rng = SplitMix64::new(7);
    let a = random_discrete(&mut rng, 3, 3, 3);
    let b = random_discrete(&mut rng, 3, 4, 3);
    assert!(param_distance(&a, &b).is_err());
    let c = random_discrete(&mut rng, 2, 3, 3);
    assert!(param_distance_permuted(&a, &c).is_err());
}
