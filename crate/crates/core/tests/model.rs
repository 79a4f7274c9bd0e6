use aggregate_hmm::model::{
    random_init, AggregateSequence, EmissionSpec, HmmParams, TrajectorySet,
};
use aggregate_hmm::synth::{aggregate, sample_trajectories};
use proptest::prelude::*;

fn emission_spec(gaussian: bool, k: usize) -> EmissionSpec {
    if gaussian {
        EmissionSpec::Gaussian {
            dim: k,
            mean_range: (-5.0, 5.0),
        }
    } else {
        EmissionSpec::Discrete { num_symbols: k }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_init_is_always_valid(d in 1usize..20, horizon in 1usize..8, k in 1usize..6, gaussian: bool, seed: u64) {
        let p = random_init(d, horizon, &emission_spec(gaussian, k), seed).unwrap();
        prop_assert!(p.validate().is_empty(), "{:?}", p.validate());
    }

    #[test]
    fn model_json_round_trips_exactly(d in 1usize..8, k in 1usize..5, gaussian: bool, seed: u64) {
        let p = random_init(d, 3, &emission_spec(gaussian, k), seed).unwrap();
        let back = HmmParams::from_json(&p.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(back.snapshot_hash(), p.snapshot_hash());
    }

    #[test]
    fn sequences_and_trajectories_round_trip(d in 1usize..5, s in 1usize..5, seed: u64) {
        let p = random_init(d, 4, &EmissionSpec::Discrete { num_symbols: s }, seed).unwrap();
        let traj = sample_trajectories(&p, 6, 4, seed ^ 1).unwrap();
        let mut buf = Vec::new();
        traj.write_jsonl(&mut buf).unwrap();
        let back = TrajectorySet::read_jsonl(buf.as_slice(), Some(s)).unwrap();
        prop_assert_eq!(&back.observations, &traj.observations);
        for y in aggregate(&traj, 3).unwrap() {
            let again = AggregateSequence::from_json(&y.to_json().unwrap()).unwrap();
            prop_assert_eq!(again, y);
        }
    }
}
