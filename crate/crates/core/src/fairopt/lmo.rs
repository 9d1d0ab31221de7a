//! Linear maximization over the exposure polytope `{Σ e : Σ doubly stochastic}`,
//! optionally intersected with one item-fairness halfspace or hyperplane.

use crate::error::{Error, Result};
use crate::metrics::{merits, MeritRule};
use crate::problem::RankingProblem;

use super::ItemConstraint;

/// Item-fairness constraint `hᵀx ≥ 0` (one-sided) or `hᵀx = 0` (two-sided)
/// on the item exposure vector `x`.
#[derive(Debug, Clone)]
pub(crate) struct ConstraintSpec {
    pub h: Vec<f64>,
    pub two_sided: bool,
}

impl ConstraintSpec {
    /// `None` when the constraint is vacuous.
    pub fn build(
        problem: &RankingProblem,
        kind: ItemConstraint,
        rule: MeritRule,
    ) -> Result<Option<Self>> {
        if kind == ItemConstraint::None {
            return Ok(None);
        }
        let k = problem.item_groups().len();
        if k == 1 {
            return Ok(None);
        }
        if k > 2 {
            return Err(Error::Unsupported(format!(
                "item-fairness constraints support at most two item groups, got {k}"
            )));
        }
        let m = merits(problem, rule)?;
        if kind == ItemConstraint::OneSided && m[0] == m[1] {
            return Ok(None);
        }
        let (lo, hi) = if m[0] <= m[1] { (0, 1) } else { (1, 0) };
        let sizes = problem.item_group_sizes();
        let size = |g: usize| sizes[&problem.item_groups()[g]] as f64;
        let h_lo = 1.0 / (size(lo) * m[lo]);
        let h_hi = -1.0 / (size(hi) * m[hi]);
        let h = problem
            .item_group_index()
            .iter()
            .map(|&g| if g == lo { h_lo } else { h_hi })
            .collect();
        Ok(Some(Self {
            h,
            two_sided: kind == ItemConstraint::TwoSided,
        }))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.h.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        let s = self.value(x);
        if self.two_sided {
            s.abs()
        } else {
            (-s).max(0.0)
        }
    }
}

/// Positions (item → rank) sorting `key` descending, ties by ascending item.
pub(crate) fn sort_positions(key: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
    let mut pos = vec![0; key.len()];
    for (k, &m) in order.iter().enumerate() {
        pos[m] = k;
    }
    pos
}

pub(crate) fn exposure_of(pos: &[usize], e: &[f64]) -> Vec<f64> {
    pos.iter().map(|&k| e[k]).collect()
}

/// A maximizer: one permutation, or two mixed with weights `θ`, `1 − θ`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LmoPoint {
    pub parts: Vec<(Vec<usize>, f64)>,
}

impl LmoPoint {
    pub fn exposure(&self, e: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; e.len()];
        for (pos, w) in &self.parts {
            for (xm, &k) in x.iter_mut().zip(pos) {
                *xm += w * e[k];
            }
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `argmax cᵀx` over the (constrained) exposure polytope.
pub(crate) fn lmo(c: &[f64], e: &[f64], constraint: Option<&ConstraintSpec>) -> Result<LmoPoint> {
    let v0 = sort_positions(c);
    let Some(con) = constraint else {
        return Ok(LmoPoint { parts: vec![(v0, 1.0)] });
    };
    let s0 = dot(&con.h, &exposure_of(&v0, e));
    if s0 >= 0.0 && (!con.two_sided || s0 == 0.0) {
        return Ok(LmoPoint { parts: vec![(v0, 1.0)] });
    }
    // Move along the multiplier direction that pushes s towards zero.
    let hh: Vec<f64> = if s0 < 0.0 {
        con.h.clone()
    } else {
        con.h.iter().map(|v| -v).collect()
    };
    let n = c.len();
    let mut mus = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if hh[a] > hh[b] && c[b] > c[a] {
                mus.push((c[b] - c[a]) / (hh[a] - hh[b]));
            }
        }
    }
    mus.sort_by(f64::total_cmp);
    mus.dedup();
    // Representative multiplier inside each open interval between breakpoints.
    let mut mids = Vec::with_capacity(mus.len() + 1);
    let mut prev = 0.0;
    for &mu in &mus {
        mids.push(0.5 * (prev + mu));
        prev = mu;
    }
    mids.push(2.0 * prev + 1.0);

    let order_at = |mu: f64| -> (Vec<usize>, f64) {
        let key: Vec<f64> = c.iter().zip(&hh).map(|(ci, hi)| ci + mu * hi).collect();
        let pos = sort_positions(&key);
        let s = dot(&hh, &exposure_of(&pos, e));
        (pos, s)
    };
    let (mut lo, mut hi) = (0usize, mids.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if order_at(mids[mid]).1 >= 0.0 {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    if lo == mids.len() {
        return Err(Error::Infeasible(
            "item-fairness constraint cannot be satisfied by any ranking policy".into(),
        ));
    }
    let (pos_hi, s_hi) = order_at(mids[lo]);
    if s_hi == 0.0 {
        return Ok(LmoPoint { parts: vec![(pos_hi, 1.0)] });
    }
    let (pos_lo, s_lo) = if lo == 0 {
        let s = dot(&hh, &exposure_of(&v0, e));
        (v0, s)
    } else {
        order_at(mids[lo - 1])
    };
    let theta = -s_lo / (s_hi - s_lo);
    Ok(LmoPoint {
        parts: vec![(pos_hi, theta), (pos_lo, 1.0 - theta)],
    })
}

/// Vertex minimizing (`sign < 0`) or maximizing (`sign > 0`) `hᵀx`.
pub(crate) fn extreme_vertex(h: &[f64], c: &[f64], sign: f64) -> Vec<usize> {
    // Secondary key `c` separates items in the same group.
    let key: Vec<f64> = h.iter().map(|hi| sign * hi).collect();
    let mut order: Vec<usize> = (0..h.len()).collect();
    order.sort_by(|&a, &b| {
        key[b]
            .total_cmp(&key[a])
            .then(c[b].total_cmp(&c[a]))
            .then(a.cmp(&b))
    });
    let mut pos = vec![0; h.len()];
    for (k, &m) in order.iter().enumerate() {
        pos[m] = k;
    }
    pos
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::fixture;

    #[test]
    fn unconstrained_sorts() {
        let p = lmo(&[0.2, 0.5, 0.5], &[1.0, 0.5, 0.25], None).unwrap();
        assert_eq!(p.parts, vec![(vec![2, 0, 1], 1.0)]);
    }

    #[test]
    fn ex3_two_sided_mixture() {
        let pb = fixture("ex3").unwrap().problem;
        let con = ConstraintSpec::build(&pb, ItemConstraint::TwoSided, MeritRule::AverageRelevance)
            .unwrap()
            .unwrap();
        let p = lmo(pb.population_relevance(), pb.exposure(), Some(&con)).unwrap();
        let x = p.exposure(pb.exposure());
        assert!(con.value(&x).abs() < 1e-15);
        // weight on d1-first ranking
        let w: f64 = p.parts.iter().filter(|(pos, _)| pos[0] == 0).map(|(_, w)| w).sum();
        assert!((w - 11.0 / 19.0).abs() < 1e-12);
    }

    #[test]
    fn one_sided_is_vacuous_when_satisfied() {
        let pb = fixture("ex3").unwrap().problem;
        let con = ConstraintSpec::build(&pb, ItemConstraint::OneSided, MeritRule::AverageRelevance)
            .unwrap()
            .unwrap();
        // favouring the lower-merit item needs no mixing
        let p = lmo(&[0.0, 1.0], pb.exposure(), Some(&con)).unwrap();
        assert_eq!(p.parts.len(), 1);
        assert!(ConstraintSpec::build(&pb, ItemConstraint::OneSided, MeritRule::Equal)
            .unwrap()
            .is_none());
    }

    #[test]
    fn constrained_lmo_beats_feasible_vertices() {
        // brute force over all 4! rankings and pairwise mixtures
        let e = [1.0, 0.7, 0.4, 0.1];
        let h = [1.0, 1.0, -0.5, -0.5];
        let con = ConstraintSpec { h: h.to_vec(), two_sided: false };
        let c = [0.1, 0.3, 0.9, 0.6];
        let best = lmo(&c, &e, Some(&con)).unwrap();
        let x = best.exposure(&e);
        let val = dot(&c, &x);
        assert!(con.violation(&x) < 1e-12);
        let perms: Vec<Vec<usize>> = itertools::Itertools::permutations(0..4usize, 4).collect();
        for p in &perms {
            for q in &perms {
                for t in 0..=20 {
                    let th = t as f64 / 20.0;
                    let y: Vec<f64> = (0..4).map(|m| th * e[p[m]] + (1.0 - th) * e[q[m]]).collect();
                    if con.value(&y) >= 0.0 {
                        assert!(dot(&c, &y) <= val + 1e-12);
                    }
                }
            }
        }
    }
}
