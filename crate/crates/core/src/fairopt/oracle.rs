//! Dense grid search over mixtures of permutation matrices, for checking
//! the solver on tiny instances.
//!
//! The objective depends on a mixture only through the user-group
//! utilities (plus the constraint value), so an optimum is attained by a
//! mixture of at most `groups + 2` permutations. Every subset of that size
//! is searched on a simplex grid and the best points refined locally.

use itertools::Itertools;
use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem as LpProblem, Variable};

use crate::concave::ConcaveFn;
use crate::error::{Error, Result};
use crate::metrics::merits;
use crate::problem::RankingProblem;
use crate::ranking::{DoublyStochasticMatrix, Ranking};

use super::{FairOptConfig, ItemConstraint, Objective, SolveResult};

pub const BRUTE_FORCE_MAX_ITEMS: usize = 4;

const GRID_STEPS: usize = 50;
const COARSE_STEPS: usize = 10;
const REFINE_STEPS: [f64; 4] = [0.01, 0.005, 0.002, 0.001];
const KEEP_COARSE: usize = 64;

struct Vertex {
    positions: Vec<usize>,
    u: Vec<f64>,
    s: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    /// All weights free; one-sided feasibility filtered.
    Free,
    /// Last two weights solved so that the constraint holds with equality.
    OnPlane,
}

struct Search<'a> {
    vertices: Vec<Vertex>,
    rho: Vec<f64>,
    objective: &'a Objective,
    constraint: Option<bool>,
    tol: f64,
}

impl Search<'_> {
    fn value(&self, u: &[f64]) -> Option<f64> {
        match self.objective {
            Objective::Utility => Some(self.rho.iter().zip(u).map(|(r, v)| r * v).sum()),
            Objective::UserFairness { f } => {
                let mut total = 0.0;
                for (r, &v) in self.rho.iter().zip(u) {
                    total += r * f.eval(v).ok()?;
                }
                Some(total)
            }
        }
    }

    /// Full weights for subset `set` from free coordinates `t`.
    fn weights(&self, set: &[usize], mode: Mode, t: &[f64]) -> Option<Vec<f64>> {
        let used: f64 = t.iter().sum();
        if t.iter().any(|&v| v < -1e-12) || used > 1.0 + 1e-12 {
            return None;
        }
        let rest = (1.0 - used).max(0.0);
        let mut w = t.to_vec();
        match mode {
            Mode::Free => {
                w.push(rest);
                let s: f64 = set.iter().zip(&w).map(|(&v, wi)| wi * self.vertices[v].s).sum();
                if self.constraint == Some(true) && s.abs() > self.tol {
                    return None;
                }
                if self.constraint == Some(false) && s < -self.tol {
                    return None;
                }
            }
            Mode::OnPlane => {
                let k = set.len();
                let partial: f64 = set[..k - 2]
                    .iter()
                    .zip(t)
                    .map(|(&v, wi)| wi * self.vertices[v].s)
                    .sum();
                let (sa, sb) = (self.vertices[set[k - 2]].s, self.vertices[set[k - 1]].s);
                if sa == sb {
                    return None;
                }
                let a = (-partial - rest * sb) / (sa - sb);
                let b = rest - a;
                if a < -1e-12 || b < -1e-12 {
                    return None;
                }
                w.push(a.max(0.0));
                w.push(b.max(0.0));
            }
        }
        Some(w)
    }

    fn utilities(&self, set: &[usize], w: &[f64]) -> Vec<f64> {
        let g = self.rho.len();
        let mut u = vec![0.0; g];
        for (&v, wi) in set.iter().zip(w) {
            for (ug, vu) in u.iter_mut().zip(&self.vertices[v].u) {
                *ug += wi * vu;
            }
        }
        u
    }

    fn eval(&self, set: &[usize], mode: Mode, t: &[f64]) -> Option<(f64, Vec<f64>)> {
        let w = self.weights(set, mode, t)?;
        let u = self.utilities(set, &w);
        Some((self.value(&u)?, u))
    }

    fn free_dims(set: &[usize], mode: Mode) -> Option<usize> {
        match mode {
            Mode::Free => Some(set.len() - 1),
            Mode::OnPlane => set.len().checked_sub(2),
        }
    }

    fn modes(&self) -> Vec<Mode> {
        match self.constraint {
            None => vec![Mode::Free],
            Some(true) => vec![Mode::Free, Mode::OnPlane],
            Some(false) => vec![Mode::Free, Mode::OnPlane],
        }
    }

    fn max_subset(&self) -> usize {
        let extra = if self.constraint.is_some() { 2 } else { 1 };
        (self.rho.len() + extra).min(self.vertices.len())
    }

    /// Visits every grid point of every subset and mode.
    fn for_each_point(&self, steps: usize, mut visit: impl FnMut(&[usize], Mode, &[f64])) {
        for k in 1..=self.max_subset() {
            for set in (0..self.vertices.len()).combinations(k) {
                for mode in self.modes() {
                    let Some(d) = Self::free_dims(&set, mode) else { continue };
                    if mode == Mode::OnPlane && k < 2 {
                        continue;
                    }
                    for_each_grid(d, steps, |t| visit(&set, mode, t));
                }
            }
        }
    }

    fn refine(&self, set: &[usize], mode: Mode, start: Vec<f64>) -> (f64, Vec<f64>) {
        let mut t = start;
        let mut best = self.eval(set, mode, &t).map_or(f64::NEG_INFINITY, |v| v.0);
        let d = t.len();
        for &delta in &REFINE_STEPS {
            loop {
                let mut improved = false;
                let mut moves: Vec<Vec<f64>> = Vec::new();
                for i in 0..d {
                    for sign in [1.0, -1.0] {
                        let mut m = vec![0.0; d];
                        m[i] = sign * delta;
                        moves.push(m);
                    }
                    for j in 0..d {
                        if i != j {
                            let mut m = vec![0.0; d];
                            m[i] = delta;
                            m[j] = -delta;
                            moves.push(m);
                        }
                    }
                }
                for m in moves {
                    let cand: Vec<f64> = t.iter().zip(&m).map(|(a, b)| a + b).collect();
                    if let Some((v, _)) = self.eval(set, mode, &cand) {
                        if v > best + 1e-15 {
                            best = v;
                            t = cand;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
        }
        (best, t)
    }
}

/// Calls `visit` with every `t ∈ (1/steps)·ℕ^d` with `Σ t ≤ 1`.
fn for_each_grid(d: usize, steps: usize, mut visit: impl FnMut(&[f64])) {
    let mut counts = vec![0usize; d];
    let mut t = vec![0.0; d];
    loop {
        for (ti, &c) in t.iter_mut().zip(&counts) {
            *ti = c as f64 / steps as f64;
        }
        visit(&t);
        // Odometer increment under the budget Σ counts ≤ steps.
        let mut i = 0;
        loop {
            if i == d {
                return;
            }
            counts[i] += 1;
            if counts.iter().sum::<usize>() <= steps {
                break;
            }
            counts[i] = 0;
            i += 1;
        }
    }
}

fn setup<'a>(problem: &RankingProblem, config: &'a FairOptConfig) -> Result<Search<'a>> {
    let n = problem.n_items();
    if n > BRUTE_FORCE_MAX_ITEMS {
        return Err(Error::InstanceTooLarge {
            what: "item count",
            size: n,
            limit: BRUTE_FORCE_MAX_ITEMS,
        });
    }
    let groups = problem.item_groups().len();
    let mut coef = vec![0.0; n];
    let mut constraint = None;
    if config.item_constraint != ItemConstraint::None && groups == 2 {
        let m = merits(problem, config.merit_rule)?;
        let two_sided = config.item_constraint == ItemConstraint::TwoSided;
        if two_sided || m[0] != m[1] {
            let lo = if m[0] <= m[1] { 0 } else { 1 };
            let sizes = problem.item_group_sizes();
            for (c, &g) in coef.iter_mut().zip(problem.item_group_index()) {
                let size = sizes[&problem.item_groups()[g]] as f64;
                let sign = if g == lo { 1.0 } else { -1.0 };
                *c = sign / (size * m[g]);
            }
            constraint = Some(two_sided);
        }
    } else if config.item_constraint != ItemConstraint::None && groups > 2 {
        return Err(Error::Unsupported(
            "item-fairness constraints support at most two item groups".into(),
        ));
    }
    let e = problem.exposure();
    let mut vertices: Vec<Vertex> = Vec::new();
    for order in (0..n).permutations(n) {
        let mut positions = vec![0; n];
        for (k, &m) in order.iter().enumerate() {
            positions[m] = k;
        }
        let x: Vec<f64> = positions.iter().map(|&k| e[k]).collect();
        let u: Vec<f64> = (0..problem.user_groups().len())
            .map(|g| problem.group_relevance(g).iter().zip(&x).map(|(r, xm)| r * xm).sum())
            .collect();
        let s: f64 = coef.iter().zip(&x).map(|(c, xm)| c * xm).sum();
        let same = |v: &Vertex| {
            (v.s - s).abs() < 1e-12 && v.u.iter().zip(&u).all(|(a, b)| (a - b).abs() < 1e-12)
        };
        if !vertices.iter().any(same) {
            vertices.push(Vertex { positions, u, s });
        }
    }
    Ok(Search {
        vertices,
        rho: problem.user_groups().iter().map(|g| g.proportion).collect(),
        objective: &config.objective,
        constraint,
        tol: config.constraint_tol,
    })
}

/// Global optimum of the configured problem by grid search (`n ≤ 4`).
pub fn brute_force_optimum(problem: &RankingProblem, config: &FairOptConfig) -> Result<SolveResult> {
    let search = setup(problem, config)?;
    // Coarse pass ranks subsets; the best are searched on the fine grid.
    let mut coarse: Vec<(f64, Vec<usize>, Mode)> = Vec::new();
    search.for_each_point(COARSE_STEPS, |set, mode, t| {
        let Some((v, _)) = search.eval(set, mode, t) else { return };
        match coarse.last_mut() {
            Some(last) if last.1 == set && last.2 == mode => last.0 = last.0.max(v),
            _ => coarse.push((v, set.to_vec(), mode)),
        }
    });
    coarse.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut fine_sets: Vec<(Vec<usize>, Mode)> =
        coarse.into_iter().take(KEEP_COARSE).map(|(_, set, mode)| (set, mode)).collect();
    // Small subsets are always searched on the fine grid.
    for k in 1..=search.max_subset() {
        for set in (0..search.vertices.len()).combinations(k) {
            for mode in search.modes() {
                let Some(d) = Search::free_dims(&set, mode) else { continue };
                if (mode == Mode::OnPlane && k < 2) || d > 1 {
                    continue;
                }
                if !fine_sets.iter().any(|(s, m)| *s == set && *m == mode) {
                    fine_sets.push((set.clone(), mode));
                }
            }
        }
    }
    let mut candidates: Vec<(f64, usize, Vec<f64>)> = Vec::new();
    for (i, (set, mode)) in fine_sets.iter().enumerate() {
        let d = Search::free_dims(set, *mode).expect("listed subsets have free dims");
        let mut best: Option<(f64, Vec<f64>)> = None;
        for_each_grid(d, GRID_STEPS, |t| {
            if let Some((v, _)) = search.eval(set, *mode, t) {
                if best.as_ref().is_none_or(|b| v > b.0) {
                    best = Some((v, t.to_vec()));
                }
            }
        });
        if let Some((v, t)) = best {
            candidates.push((v, i, t));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    candidates.truncate(8);
    let mut winner: Option<(f64, usize, Vec<f64>)> = None;
    for (_, i, t) in candidates {
        let (set, mode) = &fine_sets[i];
        let (v, t) = search.refine(set, *mode, t);
        if winner.as_ref().is_none_or(|w| v > w.0) {
            winner = Some((v, i, t));
        }
    }
    let Some((value, i, t)) = winner else {
        return match &config.objective {
            Objective::UserFairness { f } => Err(no_domain_point(f)),
            Objective::Utility => Err(Error::Infeasible("no feasible grid point".into())),
        };
    };
    let (set, mode) = &fine_sets[i];
    let w = search.weights(set, *mode, &t).expect("refined point is feasible");
    let n = problem.n_items();
    let mut data = vec![0.0; n * n];
    let mut support = Vec::new();
    let mut s = 0.0;
    for (&v, &wi) in set.iter().zip(&w) {
        let vert = &search.vertices[v];
        s += wi * vert.s;
        if wi > 0.0 {
            for (m, &k) in vert.positions.iter().enumerate() {
                data[m * n + k] += wi;
            }
            support.push((Ranking::from_positions_unchecked(vert.positions.clone()), wi));
        }
    }
    let violation = match search.constraint {
        Some(true) => s.abs(),
        Some(false) => (-s).max(0.0),
        None => 0.0,
    };
    Ok(SolveResult {
        sigma: DoublyStochasticMatrix::from_raw(n, data),
        objective_value: value,
        duality_gap: f64::NAN,
        iterations: 0,
        constraint_violation: violation,
        converged: true,
        objective_trace: Vec::new(),
        support,
    })
}

fn no_domain_point(f: &ConcaveFn) -> Error {
    f.domain_error(f.domain_lower_bound())
}

/// Utilities of a feasible mixture that are all at least `utilities` and
/// exceed one of them by more than `tol`, if any.
///
/// One linear program per user group over the weights of all permutations:
/// maximize that group's utility subject to every group keeping its level.
pub fn pareto_dominating_point(
    problem: &RankingProblem,
    config: &FairOptConfig,
    utilities: &[f64],
    tol: f64,
) -> Result<Option<Vec<f64>>> {
    let utility_config = FairOptConfig {
        objective: Objective::Utility,
        ..config.clone()
    };
    let search = setup(problem, &utility_config)?;
    for target in 0..utilities.len() {
        let mut lp = LpProblem::new(OptimizationDirection::Maximize);
        let w: Vec<Variable> = search
            .vertices
            .iter()
            .map(|v| lp.add_var(v.u[target], (0.0, f64::INFINITY)))
            .collect();
        let expr = |coef: &dyn Fn(&Vertex) -> f64| {
            let mut e = LinearExpr::empty();
            for (var, v) in w.iter().zip(&search.vertices) {
                e.add(*var, coef(v));
            }
            e
        };
        lp.add_constraint(expr(&|_| 1.0), ComparisonOp::Eq, 1.0);
        for (g, &level) in utilities.iter().enumerate() {
            lp.add_constraint(expr(&|v| v.u[g]), ComparisonOp::Ge, level);
        }
        if let Some(two_sided) = search.constraint {
            lp.add_constraint(expr(&|v| v.s), ComparisonOp::Ge, -search.tol);
            if two_sided {
                lp.add_constraint(expr(&|v| v.s), ComparisonOp::Le, search.tol);
            }
        }
        let Ok(solution) = lp.solve() else { continue };
        if solution.objective() > utilities[target] + tol {
            let u = (0..utilities.len())
                .map(|g| w.iter().zip(&search.vertices).map(|(var, v)| solution[*var] * v.u[g]).sum())
                .collect();
            return Ok(Some(u));
        }
    }
    Ok(None)
}
