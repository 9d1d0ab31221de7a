//! Decomposition of a doubly stochastic matrix into a ranking policy,
//! choosing each peeled permutation for diversity.

mod matching;
mod search;

pub use matching::{
    complete_matching, min_cost_perfect_matching, perfect_matching, random_perfect_matching,
    MatchGraph,
};
pub use search::{
    exhaustive_search_match, local_search_match, max_utility_perfect_matching,
    MAX_EXHAUSTIVE_LEVEL,
};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concave::ConcaveFn;
use crate::error::{Error, Result};
use crate::problem::RankingProblem;
use crate::ranking::{DoublyStochasticMatrix, Ranking, RankingPolicy};

/// Entries at or below this are not edges of the residual graph.
pub const EDGE_EPS: f64 = 1e-9;
/// Accepted marginal deviation of the input matrix.
pub const INPUT_TOL: f64 = 1e-6;
const REPAIR_TOL: f64 = 1e-9;
const REPAIR_ROUNDS: usize = 50;
/// Residual mass per item below which decomposition stops.
const RESIDUAL_PER_ITEM: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum MatcherStrategy {
    /// Local search from the max-utility matching.
    #[default]
    LocalSearchInit,
    /// Local search from a random perfect matching.
    LocalSearchRandomInit { seed: u64 },
    /// Exhaustive search over the top `level` positions.
    ExhaustiveSearch { level: usize },
    /// Max-utility matching, no diversity search.
    UtilityOnly,
}


impl fmt::Display for MatcherStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatcherStrategy::LocalSearchInit => write!(f, "lsi"),
            MatcherStrategy::LocalSearchRandomInit { .. } => write!(f, "lsni"),
            MatcherStrategy::ExhaustiveSearch { level } => write!(f, "es{level}"),
            MatcherStrategy::UtilityOnly => write!(f, "utility"),
        }
    }
}

impl FromStr for MatcherStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lsi" => Ok(MatcherStrategy::LocalSearchInit),
            "lsni" => Ok(MatcherStrategy::LocalSearchRandomInit { seed: 0 }),
            "utility" => Ok(MatcherStrategy::UtilityOnly),
            _ => match s.strip_prefix("es").and_then(|l| l.parse::<usize>().ok()) {
                Some(level) if level <= MAX_EXHAUSTIVE_LEVEL => {
                    Ok(MatcherStrategy::ExhaustiveSearch { level })
                }
                _ => Err(Error::Unsupported(format!(
                    "matcher `{s}`; expected lsi, lsni, es0..es3 or utility"
                ))),
            },
        }
    }
}

fn marginal_deviation(n: usize, data: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let row: f64 = data[i * n..(i + 1) * n].iter().sum();
        let col: f64 = (0..n).map(|m| data[m * n + i]).sum();
        worst = worst.max((row - 1.0).abs()).max((col - 1.0).abs());
    }
    worst
}

fn sinkhorn_round(n: usize, data: &mut [f64]) {
    for m in 0..n {
        let s: f64 = data[m * n..(m + 1) * n].iter().sum();
        if s > 0.0 {
            data[m * n..(m + 1) * n].iter_mut().for_each(|v| *v /= s);
        }
    }
    for k in 0..n {
        let s: f64 = (0..n).map(|m| data[m * n + k]).sum();
        if s > 0.0 {
            (0..n).for_each(|m| data[m * n + k] /= s);
        }
    }
}

/// Clips negatives and, if marginals are off by more than `1e-9`, applies
/// alternating row/column normalization.
fn repair(n: usize, data: &mut [f64]) {
    for v in data.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    if marginal_deviation(n, data) > REPAIR_TOL {
        for _ in 0..REPAIR_ROUNDS {
            sinkhorn_round(n, data);
        }
    }
}

/// Greedy Birkhoff–von Neumann decomposition: repeatedly pick a perfect
/// matching of the residual support (by `strategy`), peel it off with the
/// smallest residual entry along it as weight.
pub fn decompose(
    problem: &RankingProblem,
    sigma: &DoublyStochasticMatrix,
    g: &ConcaveFn,
    strategy: MatcherStrategy,
) -> Result<RankingPolicy> {
    let n = problem.n_items();
    if sigma.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: sigma.dim(),
        });
    }
    let dev = sigma.max_marginal_deviation();
    if dev > INPUT_TOL {
        return Err(Error::NotDoublyStochastic(format!(
            "row/column sums deviate from 1 by {dev:.3e}"
        )));
    }
    if let MatcherStrategy::ExhaustiveSearch { level } = strategy {
        if level > MAX_EXHAUSTIVE_LEVEL {
            return Err(Error::Unsupported(format!("exhaustive search level {level}")));
        }
    }
    let mut residual = sigma.as_slice().to_vec();
    repair(n, &mut residual);
    let mut rng = match strategy {
        MatcherStrategy::LocalSearchRandomInit { seed } => ChaCha8Rng::seed_from_u64(seed),
        _ => ChaCha8Rng::seed_from_u64(0),
    };
    let mut atoms: Vec<(Ranking, f64)> = Vec::new();
    let stop = n as f64 * RESIDUAL_PER_ITEM;
    let max_atoms = n * n + 1;
    loop {
        let mass: f64 = residual.iter().sum();
        if mass < stop {
            break;
        }
        if atoms.len() >= max_atoms {
            return Err(Error::DecompositionStalled { residual: mass });
        }
        let graph = MatchGraph::from_entries(n, &residual, EDGE_EPS);
        let pick = match strategy {
            MatcherStrategy::UtilityOnly => max_utility_perfect_matching(problem, &graph),
            MatcherStrategy::LocalSearchInit => max_utility_perfect_matching(problem, &graph)
                .and_then(|init| local_search_match(problem, g, &graph, &init)),
            MatcherStrategy::LocalSearchRandomInit { .. } => {
                random_perfect_matching(&graph, &mut rng)
                    .and_then(|init| local_search_match(problem, g, &graph, &init))
            }
            MatcherStrategy::ExhaustiveSearch { level } => {
                exhaustive_search_match(problem, g, &graph, level)
            }
        };
        let ranking = match pick {
            Ok(r) => r,
            Err(Error::NoPerfectMatching) | Err(Error::NoCompletion { .. }) => {
                return Err(Error::DecompositionStalled { residual: mass })
            }
            Err(other) => return Err(other),
        };
        let (mut arg, mut weight) = (0, f64::INFINITY);
        for (m, &k) in ranking.positions().iter().enumerate() {
            if residual[m * n + k] < weight {
                weight = residual[m * n + k];
                arg = m * n + k;
            }
        }
        for (m, &k) in ranking.positions().iter().enumerate() {
            residual[m * n + k] -= weight;
        }
        residual[arg] = 0.0;
        for v in residual.iter_mut() {
            if *v < EDGE_EPS {
                *v = 0.0;
            }
        }
        atoms.push((ranking, weight));
    }
    let total: f64 = atoms.iter().map(|(_, w)| w).sum();
    for (_, w) in atoms.iter_mut() {
        *w /= total;
    }
    RankingPolicy::new(atoms)
}

/// Largest atom count any decomposition of an `n × n` matrix needs.
pub fn atom_bound(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        (n - 1) * (n - 1) + 1
    }
}

/// Positive random matrix made doubly stochastic by normalization.
pub fn random_doubly_stochastic<R: rand::Rng>(n: usize, rng: &mut R) -> DoublyStochasticMatrix {
    let mut data: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.01..1.0)).collect();
    for _ in 0..1000 {
        sinkhorn_round(n, &mut data);
        if marginal_deviation(n, &data) < 1e-14 {
            break;
        }
    }
    DoublyStochasticMatrix::from_raw(n, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{diversity_upper_bound, policy_diversity};
    use crate::problem::{Item, UserGroup};

    fn flat_problem(n: usize) -> RankingProblem {
        RankingProblem::new(
            (0..n).map(|m| Item { id: format!("d{m}"), group: "A".into() }).collect(),
            vec!["i0".into(), "i1".into()],
            (0..n).map(|m| vec![(m % 2) as f64 + 0.1, ((m + 1) % 2) as f64]).collect(),
            vec![UserGroup { id: "u".into(), proportion: 1.0, intent_dist: vec![0.6, 0.4] }],
            (0..n).map(|k| 1.0 / (k + 1) as f64).collect(),
        )
        .unwrap()
    }

    fn g() -> ConcaveFn {
        ConcaveFn::shifted_log(0.0001)
    }

    #[test]
    fn identity_is_one_atom() {
        let p = flat_problem(4);
        let s = DoublyStochasticMatrix::permutation(&Ranking::identity(4));
        let pi = decompose(&p, &s, &g(), MatcherStrategy::LocalSearchInit).unwrap();
        assert_eq!(pi.atoms(), &[(Ranking::identity(4), 1.0)]);
    }

    #[test]
    fn uniform_small_cases() {
        let p = flat_problem(2);
        let pi = decompose(&p, &DoublyStochasticMatrix::uniform(2), &g(), MatcherStrategy::UtilityOnly).unwrap();
        assert_eq!(pi.len(), 2);
        assert!(pi.atoms().iter().all(|(_, w)| (w - 0.5).abs() < 1e-12));
        let p = flat_problem(3);
        for strategy in ["lsi", "lsni", "es0", "es1", "es2", "es3", "utility"] {
            let st: MatcherStrategy = strategy.parse().unwrap();
            let pi = decompose(&p, &DoublyStochasticMatrix::uniform(3), &g(), st).unwrap();
            assert_eq!(pi.len(), 3, "{strategy}");
            assert!(pi.atoms().iter().all(|(_, w)| (w - 1.0 / 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn reconstruction_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=7 {
            let p = flat_problem(n);
            for _ in 0..10 {
                let s = random_doubly_stochastic(n, &mut rng);
                for st in [
                    MatcherStrategy::LocalSearchInit,
                    MatcherStrategy::LocalSearchRandomInit { seed: 4 },
                    MatcherStrategy::ExhaustiveSearch { level: 2 },
                    MatcherStrategy::UtilityOnly,
                ] {
                    let pi = decompose(&p, &s, &g(), st).unwrap();
                    assert!(pi.marginal_matrix().max_abs_diff(&s) <= 1e-6);
                    assert!(pi.len() <= atom_bound(n));
                    let d = policy_diversity(&p, &pi, &g()).unwrap();
                    assert!(d <= diversity_upper_bound(&p, &s, &g()).unwrap() + 1e-9);
                }
            }
        }
    }

    #[test]
    fn rejects_non_stochastic_input() {
        let p = flat_problem(2);
        let bad = DoublyStochasticMatrix::with_tolerance(2, vec![0.6, 0.6, 0.4, 0.4], 1.0).unwrap();
        assert!(matches!(
            decompose(&p, &bad, &g(), MatcherStrategy::UtilityOnly),
            Err(Error::NotDoublyStochastic(_))
        ));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in ["lsi", "lsni", "es0", "es3", "utility"] {
            assert_eq!(s.parse::<MatcherStrategy>().unwrap().to_string(), s);
        }
        assert!("es4".parse::<MatcherStrategy>().is_err());
        assert!("greedy".parse::<MatcherStrategy>().is_err());
    }
}
