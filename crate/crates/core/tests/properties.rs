mod common;

use proptest::prelude::*;
use rand::Rng;

use reid::attacks::{hamming_attack, weighted_hamming_attack, PopularityEstimate, WeightedHamming};
use reid::bounds::{
    check_k_anonymity, check_ldp, construct_ldp_kanon_counterexample, exact_random_user_accuracy, fano_bound,
    kanon_accuracy_bound, ldp_accuracy_bound, max_accuracy_bound, optimal_full_info_rule, LdpParams,
};
use reid::harness::{mean_fraction_interval, wilson_interval};
use reid::model::{posterior_matrix, sample_observation};
use reid::topics::{
    empirical_popularity, generate_population, get_topic, per_epoch_matrix, PopulationModel, SiteObservations,
    TopicsConfig,
};
use reid::{FinitePrior, ObservationVector, PriorComponent, Purpose, SeedSpec, StreamLabel};

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exact_accuracy_never_exceeds_bound(seed in any::<u64>(), n in 1usize..=50, m in 1usize..=20) {
        let mut s = synthetic_stream(seed, 0);
        let p = random_matrix(&mut s, n, m);
        let (a, _) = random_rule(&mut s, n, m);
        let acc = exact_random_user_accuracy(&p, &a).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&acc));
        prop_assert!(acc <= max_accuracy_bound(&p) + 1e-12);
    }

    #[test]
    fn optimal_rule_attains_bound(seed in any::<u64>(), n in 1usize..=50, m in 1usize..=20) {
        let p = random_matrix(&mut synthetic_stream(seed, 1), n, m);
        let acc = exact_random_user_accuracy(&p, &optimal_full_info_rule(&p)).unwrap();
        prop_assert!((acc - max_accuracy_bound(&p)).abs() <= 1e-12);
    }

    #[test]
    fn ldp_delta_matches_event_enumeration_and_implies_bound(
        seed in any::<u64>(), n in 2usize..=8, m in 1usize..=6, eps in 0.0f64..3.0,
    ) {
        let mut s = synthetic_stream(seed, 2);
        let rows = random_rows(&mut s, n, m);
        let p = reid::RepresentationMatrix::from_rows(rows.clone()).unwrap();
        let delta = check_ldp(&p, eps).unwrap();
        prop_assert!((delta - ldp_delta_by_events(&rows, eps)).abs() <= 1e-12);
        let bound = ldp_accuracy_bound(LdpParams::new(eps, delta).unwrap(), n, m).unwrap();
        prop_assert!(max_accuracy_bound(&p) <= bound + 1e-12);
    }

    #[test]
    fn ldp_delta_is_monotone_in_epsilon(seed in any::<u64>(), e1 in 0.0f64..3.0, e2 in 0.0f64..3.0) {
        let p = random_matrix(&mut synthetic_stream(seed, 3), 5, 4);
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(check_ldp(&p, hi).unwrap() <= check_ldp(&p, lo).unwrap() + 1e-12);
    }

    #[test]
    fn k_anonymity_implies_bound(seed in any::<u64>(), n in 1usize..=60, m in 1usize..=10) {
        let (p, _) = random_one_hot(&mut synthetic_stream(seed, 4), n, m);
        let k = check_k_anonymity(&p);
        prop_assert!(k >= 1);
        prop_assert!(max_accuracy_bound(&p) <= kanon_accuracy_bound(k).unwrap() + 1e-12);
    }

    #[test]
    fn fano_bound_decreases_in_n(mi in 0.0f64..10.0, n in 2.0f64..1e6) {
        prop_assert!(fano_bound(mi, n * 2.0).unwrap() < fano_bound(mi, n).unwrap());
    }

    #[test]
    fn posterior_is_a_valid_matrix(seed in any::<u64>(), comps in 1usize..=3, n in 1usize..=6, m in 1usize..=5) {
        let mut s = synthetic_stream(seed, 5);
        let mut weights: Vec<f64> = (0..comps).map(|_| s.gen_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let components: Vec<PriorComponent> = weights
            .iter()
            .map(|&weight| PriorComponent { weight, matrix: random_matrix(&mut s, n, m) })
            .collect();
        let source = components[0].matrix.clone();
        let prior = FinitePrior::new(components).unwrap();
        let w: Vec<usize> = (0..n).map(|i| sample_observation(&source, i, &mut s).unwrap()).collect();
        let post = posterior_matrix(&prior, &ObservationVector::new(w, m).unwrap()).unwrap();
        prop_assert!(post.validate().is_empty());
    }

    #[test]
    fn labelled_streams_replay(master in any::<u64>(), trial in any::<u64>(), user in any::<u64>()) {
        let seeds = SeedSpec::new(master);
        let label = StreamLabel::new(Purpose::Observation).trial(trial).user(user);
        let a: Vec<u64> = (0..8).map({ let mut s = seeds.stream(label); move |_| s.gen() }).collect();
        let b: Vec<u64> = (0..8).map({ let mut s = seeds.stream(label); move |_| s.gen() }).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn wilson_interval_brackets_estimate(trials in 1u64..100_000, frac in 0.0f64..=1.0) {
        let successes = (trials as f64 * frac).floor() as u64;
        let (lo, hi) = wilson_interval(successes, trials);
        let phat = successes as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= phat && phat <= hi && hi <= 1.0);
    }

    #[test]
    fn mean_fraction_interval_is_ordered(trials in 2u64..500, units in 1u64..20, seed in any::<u64>()) {
        let mut s = synthetic_stream(seed, 6);
        let counts: Vec<u64> = (0..trials).map(|_| s.gen_range(0..=units)).collect();
        let sum: u64 = counts.iter().sum();
        let sum_sq: u64 = counts.iter().map(|c| c * c).sum();
        let (lo, hi) = mean_fraction_interval(sum, sum_sq, trials, units);
        prop_assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn population_invariants(seed in any::<u64>(), n_topics in 5usize..40, k in 1usize..5, p in 0.0f64..1.0) {
        let k = k.min(n_topics);
        let config = TopicsConfig::new(n_topics, k, p, 2).unwrap();
        let seeds = SeedSpec::new(seed);
        let table = generate_population(200, &config, &PopulationModel::zipf(1.0), &seeds).unwrap();
        for s in 0..2 {
            let total: f64 = empirical_popularity(&table, s, n_topics).values.iter().sum();
            prop_assert!((total - k as f64).abs() < 1e-9);
            prop_assert!(per_epoch_matrix(&table, s, &config).unwrap().validate().is_empty());
        }
        let first = get_topic(3, 17, 1, &table, &config, &seeds);
        for _ in 0..10 {
            prop_assert_eq!(get_topic(3, 17, 1, &table, &config, &seeds), first);
        }
    }

    #[test]
    fn equal_popularity_collapses_weighted_to_hamming(seed in any::<u64>(), r in 1usize..6, users in 2usize..60) {
        let config = TopicsConfig::new(12, 3, 0.1, r).unwrap();
        let mut s = synthetic_stream(seed, 7);
        let site1: Vec<Vec<u32>> = (0..users).map(|_| (0..r).map(|_| s.gen_range(0..12)).collect()).collect();
        let site1 = SiteObservations::from_sequences(&site1).unwrap();
        let level = s.gen_range(0.01..0.9);
        let model = WeightedHamming::new(&vec![PopularityEstimate::exact(vec![level; 12]); r], &config);
        for _ in 0..20 {
            let o: Vec<u32> = (0..r).map(|_| s.gen_range(0..12)).collect();
            prop_assert_eq!(
                hamming_attack(&site1, &o).unwrap(),
                weighted_hamming_attack(&site1, &o, &model).unwrap()
            );
        }
    }
}

#[test]
fn counterexample_is_neither_ldp_nor_k_anonymous() {
    for n in [3usize, 7, 10, 64, 100, 257] {
        let p = construct_ldp_kanon_counterexample(n).unwrap();
        assert_eq!(check_k_anonymity(&p), 0, "n={n}");
        for eps in [0.0, 0.1, 1.0, 5.0, 20.0] {
            assert_eq!(check_ldp(&p, eps).unwrap(), 1.0, "n={n} eps={eps}");
        }
        assert!((max_accuracy_bound(&p) - 2.0 / n as f64).abs() < 1e-15);
    }
    // At n = 2 the rows are (1, 0) and (0, 1): one-hot, hence 1-anonymous.
    let p = construct_ldp_kanon_counterexample(2).unwrap();
    assert_eq!(check_k_anonymity(&p), 1);
    assert_eq!(max_accuracy_bound(&p), 1.0);
}
