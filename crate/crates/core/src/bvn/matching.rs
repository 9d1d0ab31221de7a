//! Bipartite item–position graphs and perfect-matching routines.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::ranking::Ranking;

/// Allowed (item, position) edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchGraph {
    n: usize,
    allowed: Vec<bool>,
}

impl MatchGraph {
    pub fn full(n: usize) -> Self {
        Self {
            n,
            allowed: vec![true; n * n],
        }
    }

    /// Edges where `entries[m * n + k] > eps`.
    pub fn from_entries(n: usize, entries: &[f64], eps: f64) -> Self {
        Self {
            n,
            allowed: entries.iter().map(|&v| v > eps).collect(),
        }
    }

    pub fn from_ranking(ranking: &Ranking) -> Self {
        let n = ranking.len();
        let mut allowed = vec![false; n * n];
        for (m, &k) in ranking.positions().iter().enumerate() {
            allowed[m * n + k] = true;
        }
        Self { n, allowed }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "graph must be square");
        Self {
            n,
            allowed: rows.concat(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn allows(&self, item: usize, position: usize) -> bool {
        self.allowed[item * self.n + position]
    }

    pub fn contains(&self, ranking: &Ranking) -> bool {
        ranking.len() == self.n
            && ranking
                .positions()
                .iter()
                .enumerate()
                .all(|(m, &k)| self.allows(m, k))
    }

    pub fn is_full(&self) -> bool {
        self.allowed.iter().all(|&a| a)
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.n)
            .map(|m| (0..self.n).filter(|&k| self.allows(m, k)).collect())
            .collect()
    }
}

const FREE: usize = usize::MAX;

/// Hopcroft–Karp on explicit adjacency lists; `pre` fixes some pairs.
fn hopcroft_karp(n: usize, adj: &[Vec<usize>], pre: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut pos_of = vec![FREE; n];
    let mut item_at = vec![FREE; n];
    for &(m, k) in pre {
        pos_of[m] = k;
        item_at[k] = m;
    }
    let mut dist = vec![0usize; n];
    loop {
        // Layered BFS from free items.
        let mut queue = VecDeque::new();
        for m in 0..n {
            if pos_of[m] == FREE {
                dist[m] = 0;
                queue.push_back(m);
            } else {
                dist[m] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(m) = queue.pop_front() {
            for &k in &adj[m] {
                let w = item_at[k];
                if w == FREE {
                    found = true;
                } else if dist[w] == usize::MAX {
                    dist[w] = dist[m] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        fn augment(
            m: usize,
            adj: &[Vec<usize>],
            dist: &mut [usize],
            pos_of: &mut [usize],
            item_at: &mut [usize],
        ) -> bool {
            for &k in &adj[m] {
                let w = item_at[k];
                if w == FREE || (dist[w] == dist[m] + 1 && augment(w, adj, dist, pos_of, item_at)) {
                    pos_of[m] = k;
                    item_at[k] = m;
                    return true;
                }
            }
            dist[m] = usize::MAX;
            false
        }
        for m in 0..n {
            if pos_of[m] == FREE {
                augment(m, adj, &mut dist, &mut pos_of, &mut item_at);
            }
        }
    }
    if pos_of.iter().all(|&k| k != FREE) {
        Some(pos_of)
    } else {
        None
    }
}

/// Some perfect matching, deterministic given the graph.
pub fn perfect_matching(graph: &MatchGraph) -> Result<Ranking> {
    hopcroft_karp(graph.n, &graph.adjacency(), &[])
        .map(Ranking::from_positions_unchecked)
        .ok_or(Error::NoPerfectMatching)
}

/// A perfect matching found after shuffling every adjacency list.
pub fn random_perfect_matching<R: Rng>(graph: &MatchGraph, rng: &mut R) -> Result<Ranking> {
    let mut adj = graph.adjacency();
    for list in adj.iter_mut() {
        list.shuffle(rng);
    }
    hopcroft_karp(graph.n, &adj, &[])
        .map(Ranking::from_positions_unchecked)
        .ok_or(Error::NoPerfectMatching)
}

/// Completes a partial assignment (item, position) to a perfect matching
/// of `graph`, if possible.
pub fn complete_matching(graph: &MatchGraph, fixed: &[(usize, usize)]) -> Option<Ranking> {
    let n = graph.n;
    let mut item_fixed = vec![false; n];
    let mut pos_fixed = vec![false; n];
    for &(m, k) in fixed {
        if !graph.allows(m, k) || item_fixed[m] || pos_fixed[k] {
            return None;
        }
        item_fixed[m] = true;
        pos_fixed[k] = true;
    }
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|m| {
            if item_fixed[m] {
                Vec::new()
            } else {
                (0..n).filter(|&k| !pos_fixed[k] && graph.allows(m, k)).collect()
            }
        })
        .collect();
    hopcroft_karp(n, &adj, fixed).map(Ranking::from_positions_unchecked)
}

/// Minimum-cost perfect matching over allowed edges (Hungarian method,
/// `O(n³)`); `cost[m * n + k]`.
pub fn min_cost_perfect_matching(graph: &MatchGraph, cost: &[f64]) -> Result<Ranking> {
    let n = graph.n;
    if n == 0 {
        return Ranking::from_positions(Vec::new());
    }
    let finite_max = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let big = (finite_max + 1.0) * (n as f64 + 1.0) * 4.0;
    let c = |m: usize, k: usize| -> f64 {
        if graph.allows(m, k) {
            cost[m * n + k]
        } else {
            big
        }
    };
    // Potentials-based Hungarian with 1-based rows (items) and columns (positions).
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pos = vec![0; n];
    for j in 1..=n {
        pos[row_of[j] - 1] = j - 1;
    }
    let r = Ranking::from_positions_unchecked(pos);
    if graph.contains(&r) {
        Ok(r)
    } else {
        Err(Error::NoPerfectMatching)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> MatchGraph {
        let rows: Vec<Vec<bool>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_bool(p)).collect())
            .collect();
        MatchGraph::from_rows(&rows)
    }

    fn brute_has_matching(g: &MatchGraph) -> bool {
        (0..g.len())
            .permutations(g.len())
            .any(|p| (0..g.len()).all(|m| g.allows(m, p[m])))
    }

    #[test]
    fn matching_existence_agrees_with_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let n = rng.gen_range(1..=6);
            let g = random_graph(n, 0.4, &mut rng);
            let found = perfect_matching(&g);
            assert_eq!(found.is_ok(), brute_has_matching(&g));
            if let Ok(r) = found {
                assert!(g.contains(&r));
                let rr = random_perfect_matching(&g, &mut rng).unwrap();
                assert!(g.contains(&rr));
            }
        }
    }

    #[test]
    fn hungarian_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let g = random_graph(n, 0.6, &mut rng);
            let cost: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let best = (0..n)
                .permutations(n)
                .filter(|p| (0..n).all(|m| g.allows(m, p[m])))
                .map(|p| (0..n).map(|m| cost[m * n + p[m]]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            match min_cost_perfect_matching(&g, &cost) {
                Ok(r) => {
                    let got: f64 = (0..n).map(|m| cost[m * n + r.position_of(m)]).sum();
                    assert!((got - best).abs() < 1e-9, "{got} vs {best}");
                }
                Err(_) => assert!(best.is_infinite()),
            }
        }
    }

    #[test]
    fn completion_respects_fixed_pairs() {
        let g = MatchGraph::full(4);
        let r = complete_matching(&g, &[(2, 0), (0, 1)]).unwrap();
        assert_eq!(r.position_of(2), 0);
        assert_eq!(r.position_of(0), 1);
        assert!(complete_matching(&g, &[(2, 0), (1, 0)]).is_none());
        let single = MatchGraph::from_ranking(&Ranking::from_order(&[1, 0, 2]).unwrap());
        assert!(complete_matching(&single, &[(0, 0)]).is_none());
        assert_eq!(perfect_matching(&single).unwrap(), Ranking::from_order(&[1, 0, 2]).unwrap());
    }
}
