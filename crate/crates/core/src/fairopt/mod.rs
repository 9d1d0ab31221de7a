//! Concave maximization over doubly stochastic marginal rank matrices,
//! optionally under an item-group exposure constraint.

mod lmo;
mod oracle;
mod solver;

pub use oracle::{brute_force_optimum, pareto_dominating_point, BRUTE_FORCE_MAX_ITEMS};

pub(crate) use lmo::ConstraintSpec;

use serde::{Deserialize, Serialize};

use crate::concave::ConcaveFn;
use crate::error::{Error, Result};
use crate::metrics::MeritRule;
use crate::problem::RankingProblem;
use crate::ranking::{DoublyStochasticMatrix, Ranking, RankingPolicy};

use lmo::{extreme_vertex, lmo, sort_positions, LmoPoint};
use solver::{Engine, Psi};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// `Σ_g ρ_g f(U_g)`.
    UserFairness { f: ConcaveFn },
    /// Population utility.
    Utility,
}

/// Item-group exposure constraint between two item groups.
///
/// With merits `M(lo) ≤ M(hi)`, one-sided requires
/// `E(lo)/M(lo) ≥ E(hi)/M(hi)`; two-sided requires equality.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemConstraint {
    #[default]
    None,
    OneSided,
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FairOptConfig {
    pub objective: Objective,
    pub item_constraint: ItemConstraint,
    pub merit_rule: MeritRule,
    pub max_iterations: usize,
    pub duality_gap_tol: f64,
    pub constraint_tol: f64,
}

impl Default for FairOptConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Utility,
            item_constraint: ItemConstraint::None,
            merit_rule: MeritRule::AverageRelevance,
            max_iterations: 2000,
            duality_gap_tol: 1e-6,
            constraint_tol: 1e-8,
        }
    }
}

impl FairOptConfig {
    pub fn user_fairness(f: ConcaveFn) -> Self {
        Self {
            objective: Objective::UserFairness { f },
            ..Self::default()
        }
    }

    pub fn utility() -> Self {
        Self::default()
    }

    pub fn with_constraint(mut self, c: ItemConstraint) -> Self {
        self.item_constraint = c;
        self
    }

    pub fn with_merit_rule(mut self, rule: MeritRule) -> Self {
        self.merit_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Unsupported("max_iterations must be at least 1".into()));
        }
        if !(self.duality_gap_tol > 0.0) || !(self.constraint_tol > 0.0) {
            return Err(Error::Unsupported("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub sigma: DoublyStochasticMatrix,
    pub objective_value: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub constraint_violation: f64,
    /// Gap and constraint tolerances were both met.
    pub converged: bool,
    /// Objective after every iteration.
    pub objective_trace: Vec<f64>,
    /// Permutations (item → position) and weights realizing `sigma`.
    pub support: Vec<(Ranking, f64)>,
}

impl SolveResult {
    /// The solver's own decomposition as a policy.
    pub fn support_policy(&self) -> Result<RankingPolicy> {
        RankingPolicy::new(self.support.clone())
    }
}

#[derive(Serialize)]
struct SolveResultFile<'a> {
    sigma: Vec<Vec<f64>>,
    objective_value: f64,
    duality_gap: f64,
    iterations: usize,
    constraint_violation: f64,
    converged: bool,
    objective_trace: &'a [f64],
}

impl Serialize for SolveResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SolveResultFile {
            sigma: self.sigma.to_rows(),
            objective_value: self.objective_value,
            duality_gap: self.duality_gap,
            iterations: self.iterations,
            constraint_violation: self.constraint_violation,
            converged: self.converged,
            objective_trace: &self.objective_trace,
        }
        .serialize(s)
    }
}

/// Deterministic policy ranking by population-expected relevance.
pub fn prp_policy(problem: &RankingProblem) -> RankingPolicy {
    let pos = sort_positions(problem.population_relevance());
    RankingPolicy::deterministic(Ranking::from_positions_unchecked(pos))
}

fn uniform_point(n: usize) -> LmoPoint {
    LmoPoint {
        parts: (0..n)
            .map(|j| ((0..n).map(|m| (m + j) % n).collect(), 1.0 / n as f64))
            .collect(),
    }
}

fn blend(a: &LmoPoint, b: &LmoPoint, t: f64) -> LmoPoint {
    let mut parts: Vec<(Vec<usize>, f64)> =
        a.parts.iter().map(|(p, w)| (p.clone(), (1.0 - t) * w)).collect();
    parts.extend(b.parts.iter().map(|(p, w)| (p.clone(), t * w)));
    parts.retain(|(_, w)| *w > 0.0);
    LmoPoint { parts }
}

/// A feasible starting point: uniform, moved onto the hyperplane for
/// two-sided constraints.
fn feasible_start(problem: &RankingProblem, con: Option<&ConstraintSpec>) -> Result<LmoPoint> {
    let e = problem.exposure();
    let uniform = uniform_point(problem.n_items());
    let Some(con) = con.filter(|c| c.two_sided) else {
        return Ok(uniform);
    };
    let s_u = con.value(&uniform.exposure(e));
    if s_u == 0.0 {
        return Ok(uniform);
    }
    let sign = if s_u > 0.0 { -1.0 } else { 1.0 };
    let v = extreme_vertex(&con.h, problem.population_relevance(), sign);
    let vp = LmoPoint { parts: vec![(v, 1.0)] };
    let s_v = con.value(&vp.exposure(e));
    if s_v * s_u > 0.0 {
        return Err(Error::Infeasible(
            "no ranking policy gives the two item groups merit-proportional exposure".into(),
        ));
    }
    Ok(blend(&uniform, &vp, s_u / (s_u - s_v)))
}

fn config_f(objective: &Objective) -> &ConcaveFn {
    match objective {
        Objective::UserFairness { f } => f,
        Objective::Utility => unreachable!("only called for welfare objectives"),
    }
}

/// Maximizes the configured objective over doubly stochastic matrices.
///
/// A result that misses the gap or constraint tolerance is still returned,
/// with `converged = false`.
pub fn solve_fair(problem: &RankingProblem, config: &FairOptConfig) -> Result<SolveResult> {
    config.validate()?;
    let con = ConstraintSpec::build(problem, config.item_constraint, config.merit_rule)?;
    let start = feasible_start(problem, con.as_ref())?;
    let mut trace = Vec::new();
    let max_iter = config.max_iterations;
    let tol = config.duality_gap_tol;

    let (engine, psi, outcome) = match &config.objective {
        Objective::Utility => {
            let mut engine = Engine::new(problem, con.as_ref(), &start);
            let psi = Psi::Linear;
            let out = engine.run(&psi, max_iter, tol, &mut trace, |_| false)?;
            (engine, psi, out)
        }
        Objective::UserFairness {
            f: ConcaveFn::PiecewiseLinear(pl),
        } => {
            // Softmin smoothing with a decreasing temperature; the last stage
            // brings the smoothing error under half the gap tolerance.
            let pieces = pl.pieces();
            let spread = (pieces.len() as f64).ln();
            let mut engine = Engine::new(problem, con.as_ref(), &start);
            let mut tau = 1e-2;
            let mut used = 0;
            let last = loop {
                let final_stage = tau * spread <= 0.5 * tol;
                let psi = Psi::SmoothPieces { pieces: pieces.clone(), tau };
                let target = if final_stage { 0.5 * tol } else { tau.max(0.5 * tol) };
                let budget = max_iter.saturating_sub(used).max(1);
                let out = engine.run(&psi, budget, target, &mut trace, |_| false)?;
                used += out.iterations;
                if final_stage || used >= max_iter {
                    break (psi, out);
                }
                tau *= 0.1;
            };
            let (psi, mut out) = last;
            let Psi::SmoothPieces { tau, .. } = psi else { unreachable!() };
            let gap = if out.converged { out.gap } else { engine.gap(&psi)? };
            out.gap = gap + tau * spread;
            out.converged = out.gap <= tol;
            out.iterations = used;
            (engine, Psi::Welfare(config_f(&config.objective)), out)
        }
        Objective::UserFairness { f } => {
            let psi = Psi::Welfare(f);
            let mut engine = Engine::new(problem, con.as_ref(), &start);
            let mut used = 0;
            if psi.value(&engine.rho, &engine.u).is_none() {
                let lp = lmo(problem.population_relevance(), problem.exposure(), con.as_ref())?;
                let nudged = blend(&start, &lp, 0.99);
                engine = Engine::new(problem, con.as_ref(), &nudged);
            }
            if psi.value(&engine.rho, &engine.u).is_none() {
                engine = Engine::new(problem, con.as_ref(), &start);
                let scale = problem
                    .exposure()
                    .iter()
                    .sum::<f64>()
                    .max(f64::MIN_POSITIVE);
                let phase1 = Psi::SoftMin { beta: 50.0 / scale };
                let lb = f.domain_lower_bound();
                let margin = 1e-9 * (1.0 + lb.abs());
                let inside = |u: &[f64]| u.iter().all(|&v| v > lb + margin);
                let out = engine.run(&phase1, max_iter, 0.0, &mut Vec::new(), inside)?;
                used = out.iterations;
                if !out.stopped {
                    let worst = engine.u.iter().copied().fold(f64::INFINITY, f64::min);
                    return Err(f.domain_error(worst));
                }
            }
            let mut out = engine.run(&psi, max_iter, tol, &mut trace, |_| false)?;
            out.iterations += used;
            (engine, psi, out)
        }
    };
    let mut engine = engine;
    let objective_value = psi
        .value(&engine.rho, &engine.u)
        .expect("iterates stay inside the objective domain");
    let duality_gap = match (&psi, outcome.converged) {
        (_, true) => outcome.gap,
        (Psi::Welfare(ConcaveFn::PiecewiseLinear(_)), false) => outcome.gap,
        (_, false) => engine.gap(&psi)?,
    };
    let constraint_violation = engine.constraint_violation();
    let support: Vec<(Ranking, f64)> = engine
        .support()
        .into_iter()
        .map(|(p, w)| (Ranking::from_positions_unchecked(p), w))
        .collect();
    let n = problem.n_items();
    let mut data = vec![0.0; n * n];
    for (r, w) in &support {
        for (m, &k) in r.positions().iter().enumerate() {
            data[m * n + k] += w;
        }
    }
    Ok(SolveResult {
        sigma: DoublyStochasticMatrix::from_raw(n, data),
        objective_value,
        duality_gap,
        iterations: outcome.iterations,
        constraint_violation,
        converged: outcome.converged && constraint_violation <= config.constraint_tol,
        objective_trace: trace,
        support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::fixture;
    use crate::metrics::{item_unfairness, user_fairness, utility};

    #[test]
    fn ex2_log_welfare_is_uniform() {
        let p = fixture("ex2").unwrap().problem;
        let r = solve_fair(&p, &FairOptConfig::user_fairness(ConcaveFn::log())).unwrap();
        assert!(r.converged);
        for v in r.sigma.as_slice() {
            assert!((v - 0.5).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn ex3_two_sided_utility() {
        let p = fixture("ex3").unwrap().problem;
        let cfg = FairOptConfig::utility().with_constraint(ItemConstraint::TwoSided);
        let r = solve_fair(&p, &cfg).unwrap();
        assert!(r.converged);
        assert!((r.sigma.get(0, 0) - 11.0 / 19.0).abs() < 1e-9, "{}", r.sigma.get(0, 0));
        assert!(r.constraint_violation < 1e-12);
        assert!(item_unfairness(&p, &r.sigma).unwrap() < 1e-12);
    }

    #[test]
    fn utility_without_constraint_is_prp() {
        let p = fixture("fig1").unwrap().problem;
        let r = solve_fair(&p, &FairOptConfig::utility()).unwrap();
        let prp = prp_policy(&p).marginal_matrix();
        assert_eq!(r.sigma, prp);
        assert!((r.objective_value - utility(&p, &prp).unwrap()).abs() < 1e-12);
        // the three relevance-0.5 items come first
        let order = prp_policy(&p).atoms()[0].0.order();
        assert_eq!(&order[..3], &[6, 7, 8]);
    }

    #[test]
    fn one_sided_with_single_group_is_prp() {
        let p = fixture("ex4").unwrap().problem;
        let cfg = FairOptConfig::utility().with_constraint(ItemConstraint::OneSided);
        let r = solve_fair(&p, &cfg).unwrap();
        assert_eq!(r.sigma, prp_policy(&p).marginal_matrix());
    }

    #[test]
    fn trace_is_monotone() {
        let p = fixture("fig1").unwrap().problem;
        let cfg = FairOptConfig::user_fairness(ConcaveFn::log());
        let r = solve_fair(&p, &cfg).unwrap();
        assert!(r.converged, "gap {}", r.duality_gap);
        for w in r.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        let direct = user_fairness(&p, &r.sigma, &ConcaveFn::log()).unwrap();
        assert!((direct - r.objective_value).abs() < 1e-9);
        // both groups end at utility 1.5 with DG2 unexposed
        let x = r.sigma.item_exposure(p.exposure());
        assert!(x[9..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn undomained_start_falls_back() {
        // The best worst-off utility is 0.9·1.5/1.9 ≈ 0.7105.
        let p = fixture("ex2").unwrap().problem;
        let cfg = FairOptConfig::user_fairness(ConcaveFn::shifted_log(-0.72));
        let err = solve_fair(&p, &cfg);
        assert!(matches!(err, Err(Error::Domain { .. })), "{err:?}");
        // Uniform (UG2 at 0.675) and the nudged utility-max point are both
        // outside the domain here, so the search phase has to find a start.
        let cfg = FairOptConfig::user_fairness(ConcaveFn::shifted_log(-0.7));
        let r = solve_fair(&p, &cfg).unwrap();
        assert!(r.converged);
        let uf = user_fairness(&p, &r.sigma, &ConcaveFn::shifted_log(-0.7)).unwrap();
        assert!(uf.is_finite());
    }

    #[test]
    fn two_sided_without_exposure_differences_is_infeasible() {
        let p = fixture("ex3").unwrap().problem.with_exposure(vec![1.0, 1.0]).unwrap();
        let cfg = FairOptConfig::utility().with_constraint(ItemConstraint::TwoSided);
        assert!(matches!(solve_fair(&p, &cfg), Err(Error::Infeasible(_))));
    }

    #[test]
    fn equal_merit_two_sided_splits_exposure() {
        // both items in different groups, but only one position has exposure
        let p = fixture("ex3").unwrap().problem.with_exposure(vec![1.0, 0.0]).unwrap();
        let cfg = FairOptConfig::utility()
            .with_constraint(ItemConstraint::TwoSided)
            .with_merit_rule(MeritRule::Equal);
        let r = solve_fair(&p, &cfg).unwrap();
        assert!((r.sigma.get(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let cfg = FairOptConfig { max_iterations: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = FairOptConfig { duality_gap_tol: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let json = serde_json::to_string(&FairOptConfig::user_fairness(ConcaveFn::log())).unwrap();
        let back: FairOptConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.objective, Objective::UserFairness { f: ConcaveFn::log() });
    }
}
