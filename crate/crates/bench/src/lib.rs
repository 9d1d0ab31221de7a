//! Fixed workloads shared by the benchmarks.

use tsfd_core::bench::{generate_universe, sample_problem, BenchConfig};
use tsfd_core::{solve_fair, ConcaveFn, DoublyStochasticMatrix, FairOptConfig, ItemConstraint, RankingProblem};

/// Master seed of every workload.
pub const SEED: u64 = 17;

/// `count` benchmark samples from the default universe.
pub fn samples(count: usize) -> Vec<RankingProblem> {
    let config = BenchConfig::default();
    let universe = generate_universe(&config).expect("default bench config is valid");
    (0..count as u64)
        .map(|i| sample_problem(&universe, config.sample_size, SEED + i).expect("sample size fits the universe"))
        .collect()
}

/// Step-1 configuration used by the pipeline defaults.
pub fn fair_config() -> FairOptConfig {
    FairOptConfig::user_fairness(ConcaveFn::shifted_log(-0.6)).with_constraint(ItemConstraint::OneSided)
}

/// Marginal matrices to decompose, one per problem.
pub fn marginals(problems: &[RankingProblem]) -> Vec<DoublyStochasticMatrix> {
    problems
        .iter()
        .map(|p| solve_fair(p, &fair_config()).expect("benchmark samples are solvable").sigma)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workloads_are_deterministic() {
        let (a, b) = (samples(2), samples(2));
        assert_eq!(a, b);
        assert_eq!(marginals(&a).len(), 2);
    }
}
