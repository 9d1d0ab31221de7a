//! End-to-end policies: the two-step fair and diverse ranking pipeline and
//! the four single-objective baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bvn::{decompose, MatcherStrategy};
use crate::concave::ConcaveFn;
use crate::diversity::greedy_diverse_ranking;
use crate::error::{Error, Result};
use crate::fairopt::{prp_policy, solve_fair, FairOptConfig, ItemConstraint, Objective, SolveResult};
use crate::metrics::MeritRule;
use crate::problem::RankingProblem;
use crate::ranking::RankingPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tsfd,
    Utility,
    #[serde(rename = "userfair")]
    UserFairness,
    #[serde(rename = "itemfair")]
    ItemFairness,
    Diversity,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Tsfd,
        Method::Utility,
        Method::UserFairness,
        Method::ItemFairness,
        Method::Diversity,
    ];

    /// Short command-line name.
    pub fn name(self) -> &'static str {
        match self {
            Method::Tsfd => "tsfd",
            Method::Utility => "utility",
            Method::UserFairness => "userfair",
            Method::ItemFairness => "itemfair",
            Method::Diversity => "diversity",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Unsupported(format!(
                    "method `{s}`; expected tsfd, utility, userfair, itemfair or diversity"
                ))
            })
    }
}

/// Settings shared by all methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// User-fairness welfare function.
    pub f: ConcaveFn,
    /// Intent diversity function.
    pub g: ConcaveFn,
    /// Item constraint used by the pipeline and the item-fairness baseline.
    pub item_constraint: ItemConstraint,
    pub merit_rule: MeritRule,
    pub strategy: MatcherStrategy,
    pub max_iterations: usize,
    pub duality_gap_tol: f64,
    pub constraint_tol: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let solver = FairOptConfig::default();
        Self {
            f: ConcaveFn::shifted_log(-0.6),
            g: ConcaveFn::shifted_log(0.0001),
            item_constraint: ItemConstraint::OneSided,
            merit_rule: MeritRule::AverageRelevance,
            strategy: MatcherStrategy::LocalSearchInit,
            max_iterations: solver.max_iterations,
            duality_gap_tol: solver.duality_gap_tol,
            constraint_tol: solver.constraint_tol,
        }
    }
}

impl PipelineConfig {
    fn solver(&self, objective: Objective, constraint: ItemConstraint) -> FairOptConfig {
        FairOptConfig {
            objective,
            item_constraint: constraint,
            merit_rule: self.merit_rule,
            max_iterations: self.max_iterations,
            duality_gap_tol: self.duality_gap_tol,
            constraint_tol: self.constraint_tol,
        }
    }
}

/// A produced policy plus the step-one solve, when there was one.
#[derive(Debug, Clone)]
pub struct PolicyOutcome {
    pub policy: RankingPolicy,
    pub solve: Option<SolveResult>,
}

impl PolicyOutcome {
    /// False only when a step-one solve missed its tolerances.
    pub fn converged(&self) -> bool {
        self.solve.as_ref().is_none_or(|s| s.converged)
    }
}

fn solve_then_decompose(
    problem: &RankingProblem,
    solver: &FairOptConfig,
    g: &ConcaveFn,
    strategy: MatcherStrategy,
) -> Result<PolicyOutcome> {
    let solve = solve_fair(problem, solver)?;
    let policy = decompose(problem, &solve.sigma, g, strategy)?;
    Ok(PolicyOutcome {
        policy,
        solve: Some(solve),
    })
}

/// Runs one method on one problem.
pub fn run_method(problem: &RankingProblem, method: Method, config: &PipelineConfig) -> Result<PolicyOutcome> {
    match method {
        Method::Tsfd => solve_then_decompose(
            problem,
            &config.solver(Objective::UserFairness { f: config.f.clone() }, config.item_constraint),
            &config.g,
            config.strategy,
        ),
        Method::Utility => Ok(PolicyOutcome {
            policy: prp_policy(problem),
            solve: None,
        }),
        Method::UserFairness => solve_then_decompose(
            problem,
            &config.solver(Objective::UserFairness { f: config.f.clone() }, ItemConstraint::None),
            &config.g,
            config.strategy,
        ),
        Method::ItemFairness => solve_then_decompose(
            problem,
            &config.solver(Objective::Utility, config.item_constraint),
            &config.g,
            config.strategy,
        ),
        Method::Diversity => Ok(PolicyOutcome {
            policy: RankingPolicy::deterministic(greedy_diverse_ranking(problem, &config.g)?),
            solve: None,
        }),
    }
}

/// Fair and diverse ranking: maximize user-fairness welfare `f` under the
/// item constraint, then decompose for diversity `g`.
pub fn tsfd_rank(
    problem: &RankingProblem,
    f: &ConcaveFn,
    g: &ConcaveFn,
    item_constraint: ItemConstraint,
    strategy: MatcherStrategy,
) -> Result<RankingPolicy> {
    let config = PipelineConfig {
        f: f.clone(),
        g: g.clone(),
        item_constraint,
        strategy,
        ..PipelineConfig::default()
    };
    run_method(problem, Method::Tsfd, &config).map(|o| o.policy)
}

/// One of the single-objective baselines.
pub fn baseline(
    problem: &RankingProblem,
    which: Method,
    f: &ConcaveFn,
    g: &ConcaveFn,
    strategy: MatcherStrategy,
) -> Result<RankingPolicy> {
    if which == Method::Tsfd {
        return Err(Error::Unsupported("tsfd is not a baseline".into()));
    }
    let config = PipelineConfig {
        f: f.clone(),
        g: g.clone(),
        strategy,
        ..PipelineConfig::default()
    };
    run_method(problem, which, &config).map(|o| o.policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{fixture, nonzero_utility_welfare_fn};
    use crate::metrics::{group_utility, intent_coverage, item_group_utility, item_unfairness, utility};

    fn g() -> ConcaveFn {
        ConcaveFn::shifted_log(0.0001)
    }

    fn coverage(p: &RankingProblem, pi: &RankingPolicy) -> f64 {
        pi.atoms().iter().map(|(r, w)| w * intent_coverage(p, r)).sum()
    }

    #[test]
    fn fig1_utility_and_item_fairness_baselines() {
        let p = fixture("fig1").unwrap().problem;
        let f = ConcaveFn::log();
        for which in [Method::Utility, Method::ItemFairness] {
            let pi = baseline(&p, which, &f, &g(), MatcherStrategy::LocalSearchInit).unwrap();
            let s = pi.marginal_matrix();
            assert!(group_utility(&p, &s, "UG1").unwrap().abs() < 1e-9, "{which}");
            assert!((coverage(&p, &pi) - 0.5).abs() < 1e-9, "{which}");
        }
    }

    #[test]
    fn fig1_diversity_with_one_slot() {
        let p = fixture("fig1").unwrap().problem;
        let p = p.with_exposure((0..18).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect()).unwrap();
        let pi = baseline(&p, Method::Diversity, &ConcaveFn::log(), &g(), MatcherStrategy::LocalSearchInit).unwrap();
        let s = pi.marginal_matrix();
        assert!(group_utility(&p, &s, "UG1").unwrap().abs() < 1e-9);
        assert!(item_group_utility(&p, &s, "DG2").unwrap().abs() < 1e-9);
    }

    #[test]
    fn fig1_tsfd_reaches_every_group() {
        let p = fixture("fig1").unwrap().problem;
        let f = nonzero_utility_welfare_fn(&p, 1.0).unwrap();
        let config = PipelineConfig {
            f,
            item_constraint: ItemConstraint::TwoSided,
            merit_rule: MeritRule::Equal,
            ..PipelineConfig::default()
        };
        let out = run_method(&p, Method::Tsfd, &config).unwrap();
        assert!(out.converged());
        let s = out.policy.marginal_matrix();
        for ug in ["UG1", "UG2"] {
            assert!(group_utility(&p, &s, ug).unwrap() > 1e-9);
        }
        for dg in ["DG1", "DG2"] {
            assert!(item_group_utility(&p, &s, dg).unwrap() > 1e-9);
        }
    }

    #[test]
    fn single_group_tsfd_is_prp_utility() {
        let p = fixture("ex4").unwrap().problem;
        let pi = tsfd_rank(&p, &ConcaveFn::log(), &g(), ItemConstraint::OneSided, MatcherStrategy::LocalSearchInit).unwrap();
        let u = utility(&p, &pi.marginal_matrix()).unwrap();
        let prp = utility(&p, &prp_policy(&p).marginal_matrix()).unwrap();
        assert!((u - prp).abs() < 1e-6);
        assert!((coverage(&p, &pi) - 0.9).abs() < 1e-9);
    }

    #[test]
    fn ex3_tsfd_satisfies_constraint() {
        let p = fixture("ex3").unwrap().problem;
        let pi = tsfd_rank(&p, &ConcaveFn::log(), &g(), ItemConstraint::OneSided, MatcherStrategy::UtilityOnly).unwrap();
        assert!(item_unfairness(&p, &pi.marginal_matrix()).unwrap() <= 1e-6);
    }

    #[test]
    fn names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("best".parse::<Method>().is_err());
        assert!(baseline(&fixture("ex2").unwrap().problem, Method::Tsfd, &ConcaveFn::log(), &g(), MatcherStrategy::UtilityOnly).is_err());
    }
}
