use aggregate_hmm::learning::EmOptions;
use aggregate_hmm::model::{DiscreteEmission, Emission, HmmParams, Observations};
use aggregate_hmm::synth::{
    aggregate, aggregate_continuous, gen_ground_truth, sample_trajectories, EmissionKind,
    ExperimentSpec,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn spec(d: usize, emission: EmissionKind, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        d,
        horizon: 5,
        individuals: 200,
        population: 10,
        emission,
        seed,
        em: EmOptions::default(),
    }
}

const DISCRETE: EmissionKind = EmissionKind::Discrete { num_symbols: None };

#[test]
fn same_seed_same_bytes() {
    let s = spec(4, DISCRETE, 77);
    let a = gen_ground_truth(&s).unwrap();
    let b = gen_ground_truth(&s).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let ta = sample_trajectories(&a, 50, 5, 3).unwrap();
    let tb = sample_trajectories(&b, 50, 5, 3).unwrap();
    assert_eq!(ta, tb);
    assert_ne!(ta, sample_trajectories(&a, 50, 5, 4).unwrap());
}

#[test]
fn three_state_truth_has_one_dominant_entry_per_row() {
    for seed in 0..50 {
        let p = gen_ground_truth(&spec(3, DISCRETE, seed)).unwrap();
        let b = p.discrete().unwrap().probs.clone();
        for m in [&p.transition, &b] {
            for row in m.row_iter() {
                assert_eq!(
                    row.iter().filter(|&&v| v > 0.5).count(),
                    1,
                    "seed {seed}: {row}"
                );
            }
        }
        let mut cols: Vec<usize> = p
            .transition
            .row_iter()
            .map(|r| r.transpose().iamax())
            .collect();
        cols.sort_unstable();
        assert_eq!(cols, vec![0, 1, 2], "dominant entries form a permutation");
    }
}

#[test]
fn gaussian_truth_respects_ranges() {
    for seed in 0..20 {
        let p = gen_ground_truth(&spec(5, EmissionKind::Gaussian { dim: 2 }, seed)).unwrap();
        assert!(p.validate().is_empty());
        let g = p.gaussian().unwrap();
        for (mu, cov) in g.means.iter().zip(&g.covs) {
            assert!(mu.iter().all(|v| v.abs() <= 25.0));
            let var = cov[(0, 0)];
            assert!((1.0..=5.0).contains(&var));
            assert_eq!(cov, &(DMatrix::identity(2, 2) * var));
        }
    }
}

#[test]
fn deterministic_chain_yields_the_forced_path() {
    let shift = DMatrix::from_fn(3, 3, |i, j| if j == (i + 1) % 3 { 1.0 } else { 0.0 });
    let p = HmmParams {
        horizon: 5,
        initial: DVector::from_row_slice(&[1.0, 0.0, 0.0]),
        transition: shift.clone(),
        emission: Emission::Discrete(DiscreteEmission { probs: shift }),
    };
    let traj = sample_trajectories(&p, 30, 5, 9).unwrap();
    assert!(traj.hidden.iter().all(|x| x == &vec![0, 1, 2, 0, 1]));
    let Observations::Discrete { paths, .. } = &traj.observations else {
        panic!("symbol observations expected")
    };
    assert!(paths.iter().all(|o| o == &vec![1, 2, 0, 1, 2]));
}

#[test]
fn empirical_histograms_approach_model_marginals() {
    let p = gen_ground_truth(&spec(
        3,
        EmissionKind::Discrete {
            num_symbols: Some(4),
        },
        5,
    ))
    .unwrap();
    let traj = sample_trajectories(&p, 20_000, 3, 1).unwrap();
    let y = aggregate(&traj, 20_000).unwrap();
    let b = &p.discrete().unwrap().probs;
    let mut state = p.initial.clone();
    for t in 0..3 {
        let expected = b.transpose() * &state;
        assert!((&y[0].histograms[t] - &expected).amax() < 0.02, "t = {t}");
        state = p.transition.transpose() * state;
    }
}

#[test]
fn aggregation_checks_the_grouping() {
    let p = gen_ground_truth(&spec(2, DISCRETE, 1)).unwrap();
    let traj = sample_trajectories(&p, 12, 5, 1).unwrap();
    assert!(aggregate(&traj, 5).is_err());
    assert!(aggregate(&traj, 0).is_err());
    assert!(aggregate_continuous(&traj, 4).is_err());
    let g = gen_ground_truth(&spec(2, EmissionKind::Gaussian { dim: 1 }, 1)).unwrap();
    let vtraj = sample_trajectories(&g, 12, 5, 1).unwrap();
    assert!(aggregate(&vtraj, 4).is_err());
    let seqs = aggregate_continuous(&vtraj, 4).unwrap();
    assert_eq!(seqs.len(), 3);
    assert_eq!(seqs[0].population(), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn aggregates_are_count_histograms(d in 1usize..5, s in 1usize..6, groups in 1usize..5, m in 1usize..8, seed: u64) {
        let sp = ExperimentSpec {
            individuals: groups * m,
            population: m,
            ..spec(d, EmissionKind::Discrete { num_symbols: Some(s) }, seed)
        };
        let p = gen_ground_truth(&sp).unwrap();
        let traj = sample_trajectories(&p, sp.individuals, sp.horizon, seed).unwrap();
        let seqs = aggregate(&traj, m).unwrap();
        prop_assert_eq!(seqs.len(), groups);
        for y in &seqs {
            prop_assert!(y.validate().is_empty());
            prop_assert_eq!(y.population, m);
        }
    }
}
