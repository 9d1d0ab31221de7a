//! Diversity-maximizing single rankings: a greedy over (item, position)
//! pairs under the item and position partition matroids, and an
//! enumeration oracle for small instances.

use itertools::Itertools;

use crate::concave::ConcaveFn;
use crate::error::{Error, Result};
use crate::metrics::diversity_of_utilities;
use crate::problem::RankingProblem;
use crate::ranking::Ranking;

pub const BRUTE_FORCE_MAX_ITEMS: usize = 7;
const TIE_EPS: f64 = 1e-12;

fn exposed_positions(problem: &RankingProblem) -> usize {
    problem.exposure().iter().filter(|&&e| e > 0.0).count()
}

fn add(u: &mut [f64], row: &[f64], e: f64) {
    for (ui, r) in u.iter_mut().zip(row) {
        *ui += e * r;
    }
}

/// Places the unassigned items on the unassigned positions in ascending order.
fn fill(n: usize, placed: &[(usize, usize)]) -> Ranking {
    let mut pos = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for &(m, k) in placed {
        pos[m] = k;
        taken[k] = true;
    }
    let mut free = (0..n).filter(|&k| !taken[k]);
    for p in pos.iter_mut().filter(|p| **p == usize::MAX) {
        *p = free.next().expect("as many free positions as items");
    }
    Ranking::from_positions_unchecked(pos)
}

/// Greedy ranking plus the diversity gain of each selected pair.
pub fn greedy_diverse_ranking_with_gains(
    problem: &RankingProblem,
    g: &ConcaveFn,
) -> Result<(Ranking, Vec<f64>)> {
    let n = problem.n_items();
    let e = problem.exposure();
    let rel = problem.relevance_rows();
    let slots = exposed_positions(problem);
    let mut u = vec![0.0; problem.intents().len()];
    let mut current = diversity_of_utilities(problem, &u, g)?;
    let mut item_used = vec![false; n];
    let mut placed = Vec::with_capacity(n);
    let mut gains = Vec::with_capacity(slots);
    let mut cand = u.clone();
    for _ in 0..slots {
        let mut best: Option<(f64, usize, usize)> = None;
        for k in (0..slots).filter(|k| !placed.iter().any(|&(_, q)| q == *k)) {
            for m in (0..n).filter(|&m| !item_used[m]) {
                cand.copy_from_slice(&u);
                add(&mut cand, &rel[m], e[k]);
                let d = diversity_of_utilities(problem, &cand, g)?;
                if best.is_none_or(|(b, _, _)| d > b + TIE_EPS) {
                    best = Some((d, m, k));
                }
            }
        }
        let (d, m, k) = best.expect("a free pair exists while slots remain");
        add(&mut u, &rel[m], e[k]);
        gains.push(d - current);
        current = d;
        item_used[m] = true;
        placed.push((m, k));
    }
    Ok((fill(n, &placed), gains))
}

/// Greedy diversity-maximizing ranking.
pub fn greedy_diverse_ranking(problem: &RankingProblem, g: &ConcaveFn) -> Result<Ranking> {
    greedy_diverse_ranking_with_gains(problem, g).map(|(r, _)| r)
}

/// Diversity gain of adding `(item, position)` to a partial assignment.
pub fn marginal_gain(
    problem: &RankingProblem,
    g: &ConcaveFn,
    partial: &[(usize, usize)],
    item: usize,
    position: usize,
) -> Result<f64> {
    let e = problem.exposure();
    let rel = problem.relevance_rows();
    let mut u = vec![0.0; problem.intents().len()];
    for &(m, k) in partial {
        add(&mut u, &rel[m], e[k]);
    }
    let before = diversity_of_utilities(problem, &u, g)?;
    add(&mut u, &rel[item], e[position]);
    Ok(diversity_of_utilities(problem, &u, g)? - before)
}

/// Diversity-maximal ranking by enumerating all assignments of items to
/// positions with positive exposure (`n ≤ 7`).
pub fn brute_force_diverse_ranking(problem: &RankingProblem, g: &ConcaveFn) -> Result<Ranking> {
    let n = problem.n_items();
    if n > BRUTE_FORCE_MAX_ITEMS {
        return Err(Error::InstanceTooLarge {
            what: "item count",
            size: n,
            limit: BRUTE_FORCE_MAX_ITEMS,
        });
    }
    let e = problem.exposure();
    let rel = problem.relevance_rows();
    let slots = exposed_positions(problem);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for items in (0..n).permutations(slots) {
        let mut u = vec![0.0; problem.intents().len()];
        for (k, &m) in items.iter().enumerate() {
            add(&mut u, &rel[m], e[k]);
        }
        let d = diversity_of_utilities(problem, &u, g)?;
        if best.as_ref().is_none_or(|(b, _)| d > *b + TIE_EPS) {
            best = Some((d, items));
        }
    }
    let (_, items) = best.expect("at least one assignment");
    let placed: Vec<(usize, usize)> = items.iter().enumerate().map(|(k, &m)| (m, k)).collect();
    Ok(fill(n, &placed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::fixture;
    use crate::metrics::ranking_diversity;
    use crate::problem::{Item, UserGroup};

    fn g() -> ConcaveFn {
        ConcaveFn::shifted_log(0.0001)
    }

    #[test]
    fn fig1_single_slot_takes_heaviest_intent() {
        let p = fixture("fig1").unwrap().problem;
        let one = p
            .with_exposure((0..18).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect())
            .unwrap();
        let r = greedy_diverse_ranking(&one, &g()).unwrap();
        assert_eq!(r.order()[0] / 3, 2);
    }

    #[test]
    fn two_slots_cover_two_intents() {
        let p = RankingProblem::new(
            (0..3).map(|m| Item { id: format!("d{m}"), group: "A".into() }).collect(),
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![UserGroup { id: "u".into(), proportion: 1.0, intent_dist: vec![0.5, 0.5] }],
            vec![1.0, 1.0, 0.0],
        )
        .unwrap();
        let r = greedy_diverse_ranking(&p, &g()).unwrap();
        let top: Vec<usize> = r.order()[..2].to_vec();
        assert!(top.contains(&2));
        let best = brute_force_diverse_ranking(&p, &g()).unwrap();
        let (dg, db) = (
            ranking_diversity(&p, &r, &g()).unwrap(),
            ranking_diversity(&p, &best, &g()).unwrap(),
        );
        assert!((dg - db).abs() < 1e-12);
    }

    #[test]
    fn no_exposure_means_constant_diversity() {
        let p = fixture("ex4").unwrap().problem;
        let none = RankingProblem::new(
            p.items().to_vec(),
            p.intents().to_vec(),
            vec![vec![0.0; 2]; 3],
            p.user_groups().to_vec(),
            vec![1.0, 1.0, 0.0],
        )
        .unwrap();
        let r = greedy_diverse_ranking(&none, &g()).unwrap();
        assert!((ranking_diversity(&none, &r, &g()).unwrap() - 0.0001f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ex4_greedy_covers_both_intents() {
        let p = fixture("ex4").unwrap().problem;
        let r = greedy_diverse_ranking(&p, &g()).unwrap();
        assert!(r.position_of(2) < 2);
        assert!((crate::metrics::intent_coverage(&p, &r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn domain_error_when_zero_is_undefined() {
        let p = fixture("ex4").unwrap().problem;
        assert!(matches!(
            greedy_diverse_ranking(&p, &ConcaveFn::log()),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn gains_non_negative_and_oracle_limit() {
        let p = fixture("fig1").unwrap().problem;
        let (_, gains) = greedy_diverse_ranking_with_gains(&p, &g()).unwrap();
        assert_eq!(gains.len(), 3);
        assert!(gains.iter().all(|&x| x >= 0.0));
        assert!(matches!(
            brute_force_diverse_ranking(&p, &g()),
            Err(Error::InstanceTooLarge { .. })
        ));
    }
}
