use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsfd_core::bench::{apply_bias, generate_universe, random_problem, sample_problem, BenchConfig};
use tsfd_core::bvn::random_doubly_stochastic;
use tsfd_core::{
    decompose, ConcaveFn, MatcherStrategy, MetricReport, RankingProblem, Scope, UserGroup,
};

fn problem(seed: u64, n: usize, intents: usize, groups: usize) -> RankingProblem {
    random_problem(n, intents, groups, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn universe() -> &'static RankingProblem {
    static U: OnceLock<RankingProblem> = OnceLock::new();
    U.get_or_init(|| generate_universe(&BenchConfig::default()).unwrap())
}

fn strategy(pick: usize, seed: u64) -> MatcherStrategy {
    match pick % 4 {
        0 => MatcherStrategy::LocalSearchInit,
        1 => MatcherStrategy::LocalSearchRandomInit { seed },
        2 => MatcherStrategy::ExhaustiveSearch { level: pick % 3 },
        _ => MatcherStrategy::UtilityOnly,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn problem_json_round_trips(seed in any::<u64>(), n in 2usize..8, intents in 1usize..4, groups in 1usize..4) {
        let p = problem(seed, n, intents, groups);
        let back = RankingProblem::from_json(&p.to_json()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn population_intent_ignores_group_order(seed in any::<u64>(), n in 2usize..6, intents in 1usize..4) {
        let p = problem(seed, n, intents, 3);
        let mut groups: Vec<UserGroup> = p.user_groups().to_vec();
        groups.reverse();
        let q = RankingProblem::new(
            p.items().to_vec(),
            p.intents().to_vec(),
            p.relevance_rows().to_vec(),
            groups,
            p.exposure().to_vec(),
        )
        .unwrap();
        for (a, b) in p.population_intent().iter().zip(q.population_intent()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((p.population_intent().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn population_relevance_mixes_group_relevance(seed in any::<u64>(), n in 2usize..6, groups in 1usize..4) {
        let p = problem(seed, n, 3, groups);
        let pop = p.expected_relevance(Scope::Population).unwrap();
        for (m, r) in pop.iter().enumerate() {
            let mixed: f64 = p
                .user_groups()
                .iter()
                .map(|g| g.proportion * p.expected_relevance(Scope::UserGroup(&g.id)).unwrap()[m])
                .sum();
            prop_assert!((r - mixed).abs() < 1e-12);
            let by_intent: f64 = p
                .intents()
                .iter()
                .zip(p.population_intent())
                .map(|(i, w)| w * p.expected_relevance(Scope::Intent(i)).unwrap()[m])
                .sum();
            prop_assert!((r - by_intent).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_is_invertible(seed in any::<u64>(), b in -0.9f64..3.0) {
        let p = sample_problem(universe(), 10, seed).unwrap();
        let back = apply_bias(&apply_bias(&p, b).unwrap(), 1.0 / (1.0 + b) - 1.0).unwrap();
        for (x, y) in p.relevance_rows().iter().flatten().zip(back.relevance_rows().iter().flatten()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn decompose_reproduces_marginals(seed in any::<u64>(), n in 2usize..7, pick in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(n, 2, 2, &mut rng);
        let sigma = random_doubly_stochastic(n, &mut rng);
        let pi = decompose(&p, &sigma, &ConcaveFn::shifted_log(0.0001), strategy(pick, seed)).unwrap();
        prop_assert!(pi.marginal_matrix().max_abs_diff(&sigma) <= 1e-6);
        prop_assert!((pi.atoms().iter().map(|a| a.1).sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn metric_bounds_hold(seed in any::<u64>(), n in 2usize..7, pick in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(n, 3, 2, &mut rng);
        let sigma = random_doubly_stochastic(n, &mut rng);
        let g = ConcaveFn::shifted_log(0.0001);
        let pi = decompose(&p, &sigma, &g, strategy(pick, seed)).unwrap();
        let r = MetricReport::evaluate(&p, &pi, &ConcaveFn::shifted_log(0.0001), &g).unwrap();
        prop_assert!(r.bound_violations(1e-9).is_empty(), "{:?}", r.bound_violations(1e-9));
        prop_assert!(r.item_unfairness >= 0.0);
        prop_assert!(r.utility >= 0.0);
    }
}
