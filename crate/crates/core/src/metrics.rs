//! Evaluation quantities computed from a marginal rank matrix or a policy.
//!
//! Everything additive (utility, group utilities, exposure) only depends on
//! the exposure each item receives, `Σ e`, so those functions reduce the
//! matrix to that vector first.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::concave::ConcaveFn;
use crate::error::{Error, Result};
use crate::problem::RankingProblem;
use crate::ranking::{DoublyStochasticMatrix, Ranking, RankingPolicy};

/// An intent counts as covered when its utility exceeds this.
pub const COVERAGE_EPS: f64 = 1e-12;

/// Exact intent-coverage search limits.
pub const MAX_COVERAGE_INTENTS: usize = 12;
pub const MAX_COVERAGE_ITEMS: usize = 20;

/// How item-group merit is assigned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeritRule {
    /// Mean population-expected relevance of the group's items.
    #[default]
    AverageRelevance,
    /// Every group has merit one.
    Equal,
}

fn check_dim(problem: &RankingProblem, sigma: &DoublyStochasticMatrix) -> Result<()> {
    if sigma.dim() != problem.n_items() {
        return Err(Error::DimensionMismatch {
            expected: problem.n_items(),
            actual: sigma.dim(),
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exposure received by each item under `sigma`.
pub fn item_exposure(problem: &RankingProblem, sigma: &DoublyStochasticMatrix) -> Result<Vec<f64>> {
    check_dim(problem, sigma)?;
    Ok(sigma.item_exposure(problem.exposure()))
}

/// `(r^U)ᵀ Σ e`.
pub fn utility(problem: &RankingProblem, sigma: &DoublyStochasticMatrix) -> Result<f64> {
    let x = item_exposure(problem, sigma)?;
    Ok(dot(problem.population_relevance(), &x))
}

/// `(r^UG)ᵀ Σ e` for user group `group`.
pub fn group_utility(
    problem: &RankingProblem,
    sigma: &DoublyStochasticMatrix,
    group: &str,
) -> Result<f64> {
    let g = problem.user_group_index(group)?;
    let x = item_exposure(problem, sigma)?;
    Ok(dot(problem.group_relevance(g), &x))
}

pub(crate) fn group_utilities_from_exposure(problem: &RankingProblem, x: &[f64]) -> Vec<f64> {
    (0..problem.user_groups().len())
        .map(|g| dot(problem.group_relevance(g), x))
        .collect()
}

pub(crate) fn welfare(problem: &RankingProblem, utilities: &[f64], f: &ConcaveFn) -> Result<f64> {
    problem
        .user_groups()
        .iter()
        .zip(utilities)
        .map(|(g, &u)| Ok(g.proportion * f.eval(u)?))
        .sum()
}

/// `Σ_UG ρ_UG f(U(Σ|UG))`.
pub fn user_fairness(
    problem: &RankingProblem,
    sigma: &DoublyStochasticMatrix,
    f: &ConcaveFn,
) -> Result<f64> {
    let x = item_exposure(problem, sigma)?;
    welfare(problem, &group_utilities_from_exposure(problem, &x), f)
}

/// Average exposure per item of item group `group`.
pub fn group_exposure(
    problem: &RankingProblem,
    sigma: &DoublyStochasticMatrix,
    group: &str,
) -> Result<f64> {
    let gi = problem.item_group_position(group)?;
    let x = item_exposure(problem, sigma)?;
    Ok(group_exposures_from_exposure(problem, &x)[gi])
}

pub(crate) fn group_exposures_from_exposure(problem: &RankingProblem, x: &[f64]) -> Vec<f64> {
    let k = problem.item_groups().len();
    let mut total = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (m, &g) in problem.item_group_index().iter().enumerate() {
        total[g] += x[m];
        count[g] += 1;
    }
    total.iter().zip(&count).map(|(t, &c)| t / c as f64).collect()
}

/// Merit of item group `group`: mean population-expected relevance.
pub fn merit(problem: &RankingProblem, group: &str) -> Result<f64> {
    let gi = problem.item_group_position(group)?;
    Ok(merits(problem, MeritRule::AverageRelevance)?[gi])
}

/// Merits of all item groups (in [`RankingProblem::item_groups`] order).
pub fn merits(problem: &RankingProblem, rule: MeritRule) -> Result<Vec<f64>> {
    let k = problem.item_groups().len();
    let values = match rule {
        MeritRule::Equal => vec![1.0; k],
        MeritRule::AverageRelevance => {
            let mut total = vec![0.0; k];
            let mut count = vec![0usize; k];
            for (m, &g) in problem.item_group_index().iter().enumerate() {
                total[g] += problem.population_relevance()[m];
                count[g] += 1;
            }
            total.iter().zip(&count).map(|(t, &c)| t / c as f64).collect()
        }
    };
    for (id, &v) in problem.item_groups().iter().zip(&values) {
        if !(v > 0.0) {
            return Err(Error::MeritNonPositive {
                group: id.clone(),
                merit: v,
            });
        }
    }
    Ok(values)
}

/// Largest one-sided disparate-treatment violation: for every pair of item
/// groups with `M(lo) < M(hi)`, `max(0, E(hi)/M(hi) - E(lo)/M(lo))`.
/// Zero when there is at most one item group.
pub fn item_unfairness(problem: &RankingProblem, sigma: &DoublyStochasticMatrix) -> Result<f64> {
    item_unfairness_with(problem, sigma, MeritRule::AverageRelevance)
}

pub fn item_unfairness_with(
    problem: &RankingProblem,
    sigma: &DoublyStochasticMatrix,
    rule: MeritRule,
) -> Result<f64> {
    let x = item_exposure(problem, sigma)?;
    let m = merits(problem, rule)?;
    let e = group_exposures_from_exposure(problem, &x);
    let mut worst: f64 = 0.0;
    for lo in 0..m.len() {
        for hi in 0..m.len() {
            if m[lo] < m[hi] {
                worst = worst.max(e[hi] / m[hi] - e[lo] / m[lo]);
            }
        }
    }
    Ok(worst)
}

/// `(l^DG ∘ r^U)ᵀ Σ e`.
pub fn item_group_utility(
    problem: &RankingProblem,
    sigma: &DoublyStochasticMatrix,
    group: &str,
) -> Result<f64> {
    let gi = problem.item_group_position(group)?;
    let x = item_exposure(problem, sigma)?;
    Ok(item_group_utilities_from_exposure(problem, &x)[gi])
}

pub(crate) fn item_group_utilities_from_exposure(problem: &RankingProblem, x: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; problem.item_groups().len()];
    for (m, &g) in problem.item_group_index().iter().enumerate() {
        u[g] += problem.population_relevance()[m] * x[m];
    }
    u
}

/// Utility of every intent under a single ranking: `U(σ|i) = Σ_d e(σ(d)) r(d,i)`.
pub fn intent_utilities(problem: &RankingProblem, ranking: &Ranking) -> Vec<f64> {
    let e = problem.exposure();
    let mut u = vec![0.0; problem.intents().len()];
    for (m, row) in problem.relevance_rows().iter().enumerate() {
        let ex = e[ranking.position_of(m)];
        if ex == 0.0 {
            continue;
        }
        for (ui, r) in u.iter_mut().zip(row) {
            *ui += ex * r;
        }
    }
    u
}

pub fn ranking_intent_utility(problem: &RankingProblem, ranking: &Ranking, intent: &str) -> Result<f64> {
    let i = problem.intent_index(intent)?;
    Ok(intent_utilities(problem, ranking)[i])
}

/// `E_i[g(u_i)]` under the population intent distribution.
pub(crate) fn diversity_of_utilities(problem: &RankingProblem, u: &[f64], g: &ConcaveFn) -> Result<f64> {
    problem
        .population_intent()
        .iter()
        .zip(u)
        .map(|(&p, &ui)| Ok(p * g.eval(ui)?))
        .sum()
}

/// `D(σ) = E_i[g(U(σ|i))]`.
pub fn ranking_diversity(problem: &RankingProblem, ranking: &Ranking, g: &ConcaveFn) -> Result<f64> {
    diversity_of_utilities(problem, &intent_utilities(problem, ranking), g)
}

/// Atom-weighted average of ranking diversity.
pub fn policy_diversity(problem: &RankingProblem, policy: &RankingPolicy, g: &ConcaveFn) -> Result<f64> {
    policy
        .atoms()
        .iter()
        .map(|(r, w)| Ok(w * ranking_diversity(problem, r, g)?))
        .sum()
}

/// `E_i[g((r^i)ᵀ Σ e)]`, an upper bound on the diversity of any policy
/// with marginal matrix `sigma`.
pub fn diversity_upper_bound(
    problem: &RankingProblem,
    sigma: &DoublyStochasticMatrix,
    g: &ConcaveFn,
) -> Result<f64> {
    let x = item_exposure(problem, sigma)?;
    let u: Vec<f64> = (0..problem.intents().len())
        .map(|i| {
            problem
                .relevance_rows()
                .iter()
                .zip(&x)
                .map(|(row, xm)| row[i] * xm)
                .sum()
        })
        .collect();
    diversity_of_utilities(problem, &u, g)
}

/// Population intent mass of the intents a ranking gives positive utility.
pub fn intent_coverage(problem: &RankingProblem, ranking: &Ranking) -> f64 {
    intent_utilities(problem, ranking)
        .iter()
        .zip(problem.population_intent())
        .filter(|(u, _)| **u > COVERAGE_EPS)
        .map(|(_, p)| p)
        .sum()
}

/// Largest intent coverage achievable by any ranking.
///
/// An intent set is coverable iff some set of at most `K` items (`K` =
/// positions with positive exposure) touches every intent in it; the
/// minimum cover size of every intent subset is found by a 0/1 DP over
/// items.
pub fn max_intent_coverage(problem: &RankingProblem) -> Result<f64> {
    let n_int = problem.intents().len();
    if n_int > MAX_COVERAGE_INTENTS {
        return Err(Error::InstanceTooLarge {
            what: "intent count",
            size: n_int,
            limit: MAX_COVERAGE_INTENTS,
        });
    }
    if problem.n_items() > MAX_COVERAGE_ITEMS {
        return Err(Error::InstanceTooLarge {
            what: "item count",
            size: problem.n_items(),
            limit: MAX_COVERAGE_ITEMS,
        });
    }
    let slots = problem.exposure().iter().filter(|&&e| e > 0.0).count();
    let full = 1usize << n_int;
    const UNREACHED: usize = usize::MAX;
    let mut fewest = vec![UNREACHED; full];
    fewest[0] = 0;
    for row in problem.relevance_rows() {
        let mask = row
            .iter()
            .enumerate()
            .filter(|(_, &r)| r > 0.0)
            .fold(0usize, |acc, (i, _)| acc | (1 << i));
        if mask == 0 {
            continue;
        }
        // Descending order so each item is used at most once per chain.
        for s in (0..full).rev() {
            if fewest[s] != UNREACHED {
                let t = s | mask;
                fewest[t] = fewest[t].min(fewest[s] + 1);
            }
        }
    }
    let mass = |s: usize| -> f64 {
        (0..n_int)
            .filter(|i| s & (1 << i) != 0)
            .map(|i| problem.population_intent()[i])
            .sum()
    };
    Ok((0..full)
        .filter(|&s| fewest[s] <= slots)
        .map(mass)
        .fold(0.0, f64::max))
}

/// Summary of one policy's performance on one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub utility: f64,
    pub user_fairness: f64,
    pub item_unfairness: f64,
    pub diversity: f64,
    pub diversity_ub: f64,
    /// `f⁻¹(user_fairness)`.
    pub user_fairness_scaled: f64,
    /// `g⁻¹(diversity)`.
    pub diversity_scaled: f64,
    /// `g⁻¹(diversity_ub)`.
    pub diversity_ub_scaled: f64,
    pub per_user_group_utility: BTreeMap<String, f64>,
    pub per_item_group_utility: BTreeMap<String, f64>,
    pub per_item_group_exposure: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn evaluate(
        problem: &RankingProblem,
        policy: &RankingPolicy,
        f: &ConcaveFn,
        g: &ConcaveFn,
    ) -> Result<Self> {
        let sigma = policy.marginal_matrix();
        let x = item_exposure(problem, &sigma)?;
        let ug = group_utilities_from_exposure(problem, &x);
        let user_fairness = welfare(problem, &ug, f)?;
        let diversity = policy_diversity(problem, policy, g)?;
        let diversity_ub = diversity_upper_bound(problem, &sigma, g)?;
        let dg_ids = problem.item_groups();
        Ok(Self {
            utility: dot(problem.population_relevance(), &x),
            user_fairness,
            item_unfairness: item_unfairness(problem, &sigma)?,
            diversity,
            diversity_ub,
            user_fairness_scaled: f.inverse(user_fairness),
            diversity_scaled: g.inverse(diversity),
            diversity_ub_scaled: g.inverse(diversity_ub),
            per_user_group_utility: problem
                .user_groups()
                .iter()
                .map(|g| g.id.clone())
                .zip(ug)
                .collect(),
            per_item_group_utility: dg_ids
                .iter()
                .cloned()
                .zip(item_group_utilities_from_exposure(problem, &x))
                .collect(),
            per_item_group_exposure: dg_ids
                .iter()
                .cloned()
                .zip(group_exposures_from_exposure(problem, &x))
                .collect(),
        })
    }

    /// Violated bound inequalities (diversity ≤ UB, f⁻¹(UF) ≤ U, g⁻¹(D) ≤ U).
    pub fn bound_violations(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.diversity > self.diversity_ub + tol {
            out.push(format!(
                "diversity {} exceeds its upper bound {}",
                self.diversity, self.diversity_ub
            ));
        }
        if self.user_fairness_scaled > self.utility + tol {
            out.push(format!(
                "f^-1(UF) = {} exceeds utility {}",
                self.user_fairness_scaled, self.utility
            ));
        }
        if self.diversity_scaled > self.utility + tol {
            out.push(format!(
                "g^-1(D) = {} exceeds utility {}",
                self.diversity_scaled, self.utility
            ));
        }
        out
    }

    /// Column names after `method`. Fairness and diversity columns are
    /// reported on the utility scale (`f⁻¹`, `g⁻¹`); per-group columns follow
    /// sorted by group id.
    pub fn csv_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = [
            "utility",
            "item_unfairness",
            "user_fairness",
            "diversity",
            "diversity_ub",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        cols.extend(self.per_user_group_utility.keys().map(|k| format!("utility[{k}]")));
        cols.extend(self.per_item_group_utility.keys().map(|k| format!("item_utility[{k}]")));
        cols.extend(self.per_item_group_exposure.keys().map(|k| format!("exposure[{k}]")));
        cols
    }

    /// Values matching [`Self::csv_columns`].
    pub fn csv_values(&self) -> Vec<f64> {
        let mut v = vec![
            self.utility,
            self.item_unfairness,
            self.user_fairness_scaled,
            self.diversity_scaled,
            self.diversity_ub_scaled,
        ];
        v.extend(self.per_user_group_utility.values());
        v.extend(self.per_item_group_utility.values());
        v.extend(self.per_item_group_exposure.values());
        v
    }
}
