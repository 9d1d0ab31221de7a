//! Choosing which perfect matching of the residual graph to peel off.

use crate::concave::ConcaveFn;
use crate::error::{Error, Result};
use crate::metrics::{diversity_of_utilities, intent_utilities};
use crate::problem::RankingProblem;
use crate::ranking::Ranking;

use super::matching::{complete_matching, min_cost_perfect_matching, perfect_matching, MatchGraph};

pub const MAX_EXHAUSTIVE_LEVEL: usize = 3;
const IMPROVEMENT_EPS: f64 = 1e-12;

/// Perfect matching of `graph` maximizing population utility.
pub fn max_utility_perfect_matching(problem: &RankingProblem, graph: &MatchGraph) -> Result<Ranking> {
    let n = problem.n_items();
    let r = problem.population_relevance();
    if graph.is_full() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| r[b].total_cmp(&r[a]).then(a.cmp(&b)));
        return Ranking::from_order(&order);
    }
    let e = problem.exposure();
    let cost: Vec<f64> = (0..n * n).map(|i| -e[i % n] * r[i / n]).collect();
    min_cost_perfect_matching(graph, &cost)
}

fn diversity(problem: &RankingProblem, u: &[f64], g: &ConcaveFn) -> Option<f64> {
    diversity_of_utilities(problem, u, g).ok()
}

/// Pairwise-swap local search: scans item pairs lexicographically,
/// applies the first legal swap that strictly raises diversity, and
/// restarts until no swap helps.
pub fn local_search_match(
    problem: &RankingProblem,
    g: &ConcaveFn,
    graph: &MatchGraph,
    init: &Ranking,
) -> Result<Ranking> {
    let n = problem.n_items();
    let e = problem.exposure();
    let rel = problem.relevance_rows();
    let mut cur = init.clone();
    let mut u = intent_utilities(problem, &cur);
    let mut best = diversity_of_utilities(problem, &u, g)?;
    let mut cand = vec![0.0; u.len()];
    'scan: loop {
        for a in 0..n {
            for b in a + 1..n {
                let (pa, pb) = (cur.position_of(a), cur.position_of(b));
                if !graph.allows(a, pb) || !graph.allows(b, pa) {
                    continue;
                }
                let de = e[pb] - e[pa];
                if de == 0.0 {
                    continue;
                }
                for (i, c) in cand.iter_mut().enumerate() {
                    *c = u[i] + de * (rel[a][i] - rel[b][i]);
                }
                if let Some(d) = diversity(problem, &cand, g) {
                    if d > best + IMPROVEMENT_EPS {
                        cur.swap_items(a, b);
                        std::mem::swap(&mut u, &mut cand);
                        best = d;
                        continue 'scan;
                    }
                }
            }
        }
        return Ok(cur);
    }
}

/// Best-diversity completion over every assignment of the top `level`
/// positions; level 0 returns some perfect matching. The level-`l − 1`
/// result competes at level `l`, so diversity never drops with level.
pub fn exhaustive_search_match(
    problem: &RankingProblem,
    g: &ConcaveFn,
    graph: &MatchGraph,
    level: usize,
) -> Result<Ranking> {
    if level > MAX_EXHAUSTIVE_LEVEL {
        return Err(Error::Unsupported(format!(
            "exhaustive search level {level} exceeds {MAX_EXHAUSTIVE_LEVEL}"
        )));
    }
    let n = problem.n_items();
    let base = perfect_matching(graph)?;
    let mut best_ranking = base.clone();
    let mut best = diversity_of_utilities(problem, &intent_utilities(problem, &base), g)?;
    for l in 1..=level.min(n) {
        let mut any = false;
        let mut fixed: Vec<(usize, usize)> = Vec::with_capacity(l);
        let mut used = vec![false; n];
        enumerate_prefix(graph, l, &mut fixed, &mut used, &mut |prefix| {
            if let Some(r) = complete_matching(graph, prefix) {
                any = true;
                let u = intent_utilities(problem, &r);
                if let Some(d) = diversity(problem, &u, g) {
                    if d > best + IMPROVEMENT_EPS {
                        best = d;
                        best_ranking = r;
                    }
                }
            }
        });
        if !any {
            return Err(Error::NoCompletion { level: l });
        }
    }
    Ok(best_ranking)
}

fn enumerate_prefix(
    graph: &MatchGraph,
    l: usize,
    fixed: &mut Vec<(usize, usize)>,
    used: &mut [bool],
    visit: &mut dyn FnMut(&[(usize, usize)]),
) {
    let k = fixed.len();
    if k == l {
        visit(fixed);
        return;
    }
    for m in 0..used.len() {
        if !used[m] && graph.allows(m, k) {
            used[m] = true;
            fixed.push((m, k));
            enumerate_prefix(graph, l, fixed, used, visit);
            fixed.pop();
            used[m] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ranking_diversity;
    use crate::problem::{Item, UserGroup};

    fn problem(relevance: Vec<Vec<f64>>, intent: Vec<f64>, exposure: Vec<f64>) -> RankingProblem {
        let n = relevance.len();
        let k = intent.len();
        RankingProblem::new(
            (0..n).map(|m| Item { id: format!("d{m}"), group: "A".into() }).collect(),
            (0..k).map(|i| format!("i{i}")).collect(),
            relevance,
            vec![UserGroup { id: "u".into(), proportion: 1.0, intent_dist: intent }],
            exposure,
        )
        .unwrap()
    }

    fn g() -> ConcaveFn {
        ConcaveFn::shifted_log(0.0001)
    }

    #[test]
    fn single_edge_graph_returns_init() {
        let p = problem(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.5, 0.5], vec![1.0, 1.0, 0.0]);
        let init = Ranking::from_order(&[0, 2, 1]).unwrap();
        let graph = MatchGraph::from_ranking(&init);
        assert_eq!(local_search_match(&p, &g(), &graph, &init).unwrap(), init);
    }

    #[test]
    fn equal_diversity_keeps_init() {
        let p = problem(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5], vec![1.0, 1.0]);
        let init = Ranking::identity(2);
        assert_eq!(local_search_match(&p, &g(), &MatchGraph::full(2), &init).unwrap(), init);
    }

    #[test]
    fn improving_swap_is_taken() {
        // init covers intent 0 twice; swapping in item 2 covers both
        let p = problem(vec![vec![1.0, 0.0], vec![0.9, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5], vec![1.0, 1.0, 0.0]);
        let init = Ranking::from_order(&[0, 1, 2]).unwrap();
        let before = ranking_diversity(&p, &init, &g()).unwrap();
        let out = local_search_match(&p, &g(), &MatchGraph::full(3), &init).unwrap();
        let after = ranking_diversity(&p, &out, &g()).unwrap();
        assert!(after > before);
        assert_eq!(out.order()[2], 1);
    }

    #[test]
    fn exhaustive_levels() {
        let p = problem(
            vec![vec![1.0, 0.0], vec![0.9, 0.0], vec![0.0, 1.0], vec![0.0, 0.2]],
            vec![0.7, 0.3],
            vec![1.0, 0.5, 0.2, 0.0],
        );
        let graph = MatchGraph::full(4);
        let mut prev = f64::NEG_INFINITY;
        for l in 0..=3 {
            let r = exhaustive_search_match(&p, &g(), &graph, l).unwrap();
            let d = ranking_diversity(&p, &r, &g()).unwrap();
            assert!(d >= prev);
            prev = d;
        }
        assert!(exhaustive_search_match(&p, &g(), &graph, 4).is_err());
        let only = Ranking::from_order(&[3, 1, 0, 2]).unwrap();
        let single = MatchGraph::from_ranking(&only);
        assert_eq!(exhaustive_search_match(&p, &g(), &single, 1).unwrap(), only);
    }

    #[test]
    fn utility_matching_on_full_graph_is_prp() {
        let p = problem(vec![vec![0.2], vec![0.5], vec![0.5]], vec![1.0], vec![1.0, 0.5, 0.1]);
        let r = max_utility_perfect_matching(&p, &MatchGraph::full(3)).unwrap();
        assert_eq!(r.order(), vec![1, 2, 0]);
        let only = Ranking::from_order(&[0, 2, 1]).unwrap();
        let r = max_utility_perfect_matching(&p, &MatchGraph::from_ranking(&only)).unwrap();
        assert_eq!(r, only);
    }
}
