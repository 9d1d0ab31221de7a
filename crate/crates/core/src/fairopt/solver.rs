//! Pairwise Frank–Wolfe over the item exposure vector `x = Σ e`.
//!
//! Every objective handled here depends on `x` only through the user-group
//! utilities `u_g = r_gᵀ x`, so line searches run in group space.

use std::collections::HashMap;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::concave::ConcaveFn;
use crate::error::Result;
use crate::problem::RankingProblem;

use super::lmo::{lmo, ConstraintSpec, LmoPoint};

#[derive(Debug, Clone)]
pub(crate) enum Psi<'a> {
    Linear,
    Welfare(&'a ConcaveFn),
    SoftMin { beta: f64 },
    /// `Σ ρ_g softmin_τ(pieces(u_g))`, a lower bound on the
    /// piecewise-linear welfare within `τ ln(#pieces)`.
    SmoothPieces { pieces: Vec<(f64, f64)>, tau: f64 },
}

/// Value, slope and curvature (`-f''`) of the softmin of the pieces at `u`.
fn softmin_pieces(pieces: &[(f64, f64)], tau: f64, u: f64) -> (f64, f64, f64) {
    let vals: Vec<f64> = pieces.iter().map(|(a, b)| a * u + b).collect();
    let m = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = vals.iter().map(|v| (-(v - m) / tau).exp()).collect();
    let s: f64 = w.iter().sum();
    let slope = pieces.iter().zip(&w).map(|((a, _), wi)| a * wi).sum::<f64>() / s;
    let second = pieces.iter().zip(&w).map(|((a, _), wi)| a * a * wi).sum::<f64>() / s;
    (m - tau * s.ln(), slope, (second - slope * slope).max(0.0) / tau)
}

impl Psi<'_> {
    pub fn value(&self, rho: &[f64], u: &[f64]) -> Option<f64> {
        match self {
            Psi::Linear => Some(rho.iter().zip(u).map(|(r, v)| r * v).sum()),
            Psi::Welfare(f) => {
                if u.iter().all(|&v| f.in_domain(v)) {
                    Some(rho.iter().zip(u).map(|(r, &v)| r * f.eval_unchecked(v)).sum())
                } else {
                    None
                }
            }
            Psi::SoftMin { beta } => {
                let m = u.iter().copied().fold(f64::INFINITY, f64::min);
                let s: f64 = u.iter().map(|v| (-beta * (v - m)).exp()).sum();
                Some(m - s.ln() / beta)
            }
            Psi::SmoothPieces { pieces, tau } => Some(
                rho.iter()
                    .zip(u)
                    .map(|(r, &v)| r * softmin_pieces(pieces, *tau, v).0)
                    .sum(),
            ),
        }
    }

    /// `-∂²ψ/∂u_g²` for separable objectives with curvature.
    pub fn curvature(&self, rho: &[f64], u: &[f64]) -> Option<Vec<f64>> {
        match self {
            Psi::Linear | Psi::SoftMin { .. } => None,
            Psi::Welfare(f) => Some(rho.iter().zip(u).map(|(r, &v)| r * f.curvature(v)).collect()),
            Psi::SmoothPieces { pieces, tau } => Some(
                rho.iter()
                    .zip(u)
                    .map(|(r, &v)| r * softmin_pieces(pieces, *tau, v).2)
                    .collect(),
            ),
        }
    }

    /// `∂ψ/∂u_g`, or `None` outside the domain.
    pub fn grad(&self, rho: &[f64], u: &[f64]) -> Option<Vec<f64>> {
        match self {
            Psi::Linear => Some(rho.to_vec()),
            Psi::Welfare(f) => rho
                .iter()
                .zip(u)
                .map(|(r, &v)| f.derivative(v).ok().map(|d| r * d))
                .collect(),
            Psi::SoftMin { beta } => {
                let m = u.iter().copied().fold(f64::INFINITY, f64::min);
                let w: Vec<f64> = u.iter().map(|v| (-beta * (v - m)).exp()).collect();
                let s: f64 = w.iter().sum();
                Some(w.iter().map(|v| v / s).collect())
            }
            Psi::SmoothPieces { pieces, tau } => Some(
                rho.iter()
                    .zip(u)
                    .map(|(r, &v)| r * softmin_pieces(pieces, *tau, v).1)
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone)]
struct Atom {
    parts: Vec<(usize, f64)>,
    x: Vec<f64>,
    u: Vec<f64>,
    weight: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct RunOutcome {
    pub converged: bool,
    pub stopped: bool,
    pub gap: f64,
    pub iterations: usize,
}

pub(crate) struct Engine<'a> {
    e: &'a [f64],
    rel: Vec<&'a [f64]>,
    pub rho: Vec<f64>,
    constraint: Option<&'a ConstraintSpec>,
    pool: Vec<Vec<usize>>,
    pool_index: HashMap<Vec<usize>, usize>,
    atoms: Vec<Atom>,
    atom_index: HashMap<Vec<(usize, u64)>, usize>,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

/// Upper bound on subsets examined by one corrective step.
const MAX_CORRECTIVE_SUBSETS: usize = 4096;

fn subset_count(k: usize, max_size: usize) -> usize {
    let mut total = 0usize;
    let mut c = 1usize;
    for size in 1..=max_size {
        c = c.saturating_mul(k + 1 - size) / size;
        total = total.saturating_add(c);
    }
    total
}

/// Maximizer of `lᵀw - ½ wᵀQw` on the affine hull `Σw = 1` of the atoms in
/// `s`, if it is unique and non-negative.
fn simplex_face_optimum(s: &[usize], lin: &[f64], quad: &impl Fn(usize, usize) -> f64) -> Option<Vec<f64>> {
    let m = s.len();
    if m == 1 {
        return Some(vec![1.0]);
    }
    let kkt = DMatrix::from_fn(m + 1, m + 1, |r, c| match (r < m, c < m) {
        (true, true) => quad(s[r], s[c]),
        (true, false) | (false, true) => 1.0,
        (false, false) => 0.0,
    });
    let rhs = DVector::from_fn(m + 1, |r, _| if r < m { lin[s[r]] } else { 1.0 });
    let sol = kkt.lu().solve(&rhs)?;
    let w: Vec<f64> = sol.iter().take(m).copied().collect();
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return None;
    }
    let total: f64 = w.iter().sum();
    Some(w.iter().map(|v| v / total).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a> Engine<'a> {
    pub fn new(
        problem: &'a RankingProblem,
        constraint: Option<&'a ConstraintSpec>,
        start: &LmoPoint,
    ) -> Self {
        let groups = problem.user_groups().len();
        let mut engine = Self {
            e: problem.exposure(),
            rel: (0..groups).map(|g| problem.group_relevance(g)).collect(),
            rho: problem.user_groups().iter().map(|g| g.proportion).collect(),
            constraint,
            pool: Vec::new(),
            pool_index: HashMap::new(),
            atoms: Vec::new(),
            atom_index: HashMap::new(),
            x: Vec::new(),
            u: Vec::new(),
        };
        let a = engine.intern(start);
        engine.atoms[a].weight = 1.0;
        engine.refresh();
        engine
    }

    fn utilities(&self, x: &[f64]) -> Vec<f64> {
        self.rel.iter().map(|r| dot(r, x)).collect()
    }

    fn intern(&mut self, point: &LmoPoint) -> usize {
        let mut parts = Vec::with_capacity(point.parts.len());
        for (pos, w) in &point.parts {
            let id = match self.pool_index.get(pos) {
                Some(&id) => id,
                None => {
                    self.pool.push(pos.clone());
                    self.pool_index.insert(pos.clone(), self.pool.len() - 1);
                    self.pool.len() - 1
                }
            };
            parts.push((id, *w));
        }
        let key: Vec<(usize, u64)> = parts.iter().map(|&(i, w)| (i, w.to_bits())).collect();
        if let Some(&a) = self.atom_index.get(&key) {
            return a;
        }
        let x = point.exposure(self.e);
        let u = self.utilities(&x);
        self.atoms.push(Atom {
            parts,
            x,
            u,
            weight: 0.0,
        });
        self.atom_index.insert(key, self.atoms.len() - 1);
        self.atoms.len() - 1
    }

    fn refresh(&mut self) {
        let n = self.e.len();
        let mut x = vec![0.0; n];
        let total: f64 = self.atoms.iter().map(|a| a.weight).sum();
        for a in self.atoms.iter_mut() {
            a.weight /= total;
        }
        for a in self.atoms.iter().filter(|a| a.weight > 0.0) {
            for (xm, am) in x.iter_mut().zip(&a.x) {
                *xm += a.weight * am;
            }
        }
        self.u = self.utilities(&x);
        self.x = x;
    }

    pub fn constraint_violation(&self) -> f64 {
        self.constraint.map_or(0.0, |c| c.violation(&self.x))
    }

    /// Largest step in `[0, gmax]` along `du` before the directional
    /// derivative turns negative; undefined points count as negative.
    fn line_search(&self, psi: &Psi, du: &[f64], gmax: f64) -> f64 {
        let slope = |g: f64| -> f64 {
            let at: Vec<f64> = self.u.iter().zip(du).map(|(u, d)| u + g * d).collect();
            match psi.grad(&self.rho, &at) {
                Some(w) if psi.value(&self.rho, &at).is_some() => dot(&w, du),
                _ => f64::NEG_INFINITY,
            }
        };
        if slope(gmax) >= 0.0 {
            return gmax;
        }
        let (mut lo, mut hi) = (0.0, gmax);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Runs pairwise Frank–Wolfe on `psi` until the duality gap falls below
    /// `gap_tol`, `stop(u)` holds, or `max_iter` iterations pass.
    pub fn run(
        &mut self,
        psi: &Psi,
        max_iter: usize,
        gap_tol: f64,
        trace: &mut Vec<f64>,
        stop: impl Fn(&[f64]) -> bool,
    ) -> Result<RunOutcome> {
        let mut gap = f64::INFINITY;
        for it in 0..max_iter {
            if stop(&self.u) {
                return Ok(RunOutcome { converged: false, stopped: true, gap, iterations: it });
            }
            let w = psi
                .grad(&self.rho, &self.u)
                .expect("iterates stay inside the objective domain");
            let c: Vec<f64> = (0..self.e.len())
                .map(|m| self.rel.iter().zip(&w).map(|(r, wg)| r[m] * wg).sum())
                .collect();
            let fw_point = lmo(&c, self.e, self.constraint)?;
            let fw = self.intern(&fw_point);
            let here = dot(&w, &self.u);
            gap = (dot(&w, &self.atoms[fw].u) - here).max(0.0);
            if gap <= gap_tol {
                return Ok(RunOutcome { converged: true, stopped: false, gap, iterations: it });
            }
            let away = self
                .atoms
                .iter()
                .enumerate()
                .filter(|(i, a)| a.weight > 0.0 && *i != fw)
                .min_by(|(_, a), (_, b)| dot(&w, &a.u).total_cmp(&dot(&w, &b.u)))
                .map(|(i, _)| i);
            let Some(away) = away else {
                // Already at the oracle point.
                return Ok(RunOutcome { converged: true, stopped: false, gap: 0.0, iterations: it });
            };
            let du: Vec<f64> = self.atoms[fw]
                .u
                .iter()
                .zip(&self.atoms[away].u)
                .map(|(a, b)| a - b)
                .collect();
            let gmax = self.atoms[away].weight;
            let step = self.line_search(psi, &du, gmax);
            if step > 0.0 {
                self.atoms[fw].weight += step;
                self.atoms[away].weight = if step >= gmax {
                    0.0
                } else {
                    self.atoms[away].weight - step
                };
                let (xf, xa) = (self.atoms[fw].x.clone(), &self.atoms[away].x);
                for ((xm, f), a) in self.x.iter_mut().zip(&xf).zip(xa) {
                    *xm += step * (f - a);
                }
                for (ug, d) in self.u.iter_mut().zip(&du) {
                    *ug += step * d;
                }
            }
            self.corrective_step(psi);
            if it % 64 == 63 {
                self.refresh();
            }
            if let Some(v) = psi.value(&self.rho, &self.u) {
                trace.push(v);
            }
        }
        self.refresh();
        Ok(RunOutcome { converged: false, stopped: stop(&self.u), gap, iterations: max_iter })
    }

    /// Newton step restricted to the convex hull of the active atoms:
    /// maximizes the diagonal quadratic model of `psi` over subsets of at
    /// most `G + 1` atoms, then line-searches towards the best candidate.
    fn corrective_step(&mut self, psi: &Psi) {
        let (Some(g), Some(curv)) = (psi.grad(&self.rho, &self.u), psi.curvature(&self.rho, &self.u)) else {
            return;
        };
        let active: Vec<usize> = (0..self.atoms.len()).filter(|&i| self.atoms[i].weight > 0.0).collect();
        let k = active.len();
        let max_size = (self.u.len() + 1).min(k);
        if k < 2 || subset_count(k, max_size) > MAX_CORRECTIVE_SUBSETS {
            return;
        }
        let d: Vec<Vec<f64>> = active
            .iter()
            .map(|&i| self.atoms[i].u.iter().zip(&self.u).map(|(a, b)| a - b).collect())
            .collect();
        let lin: Vec<f64> = d.iter().map(|di| dot(&g, di)).collect();
        let quad = |i: usize, j: usize| -> f64 { d[i].iter().zip(&d[j]).zip(&curv).map(|((a, b), c)| a * b * c).sum() };
        let model = |s: &[usize], w: &[f64]| -> f64 {
            let mut v = 0.0;
            for (a, &i) in s.iter().enumerate() {
                v += w[a] * lin[i];
                for (b, &j) in s.iter().enumerate() {
                    v -= 0.5 * w[a] * w[b] * quad(i, j);
                }
            }
            v
        };
        let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
        for size in 1..=max_size {
            for s in (0..k).combinations(size) {
                let Some(w) = simplex_face_optimum(&s, &lin, &quad) else { continue };
                let v = model(&s, &w);
                if best.as_ref().is_none_or(|b| v > b.0) {
                    best = Some((v, s, w));
                }
            }
        }
        let Some((v, s, w)) = best else { return };
        if !(v > 0.0) {
            return;
        }
        let mut target = vec![0.0; k];
        for (a, &i) in s.iter().enumerate() {
            target[i] = w[a];
        }
        let delta: Vec<f64> = active.iter().zip(&target).map(|(&i, t)| t - self.atoms[i].weight).collect();
        let du: Vec<f64> = (0..self.u.len())
            .map(|gi| active.iter().zip(&delta).map(|(&i, dl)| dl * self.atoms[i].u[gi]).sum())
            .collect();
        let step = self.line_search(psi, &du, 1.0);
        if step <= 0.0 {
            return;
        }
        for (&i, t) in active.iter().zip(&target) {
            let a = &mut self.atoms[i];
            a.weight = if step >= 1.0 { *t } else { (1.0 - step) * a.weight + step * t };
            if a.weight < 0.0 {
                a.weight = 0.0;
            }
        }
        self.refresh();
    }

    /// Final duality gap of `psi` at the current point.
    pub fn gap(&mut self, psi: &Psi) -> Result<f64> {
        let w = match psi.grad(&self.rho, &self.u) {
            Some(w) => w,
            None => return Ok(f64::INFINITY),
        };
        let c: Vec<f64> = (0..self.e.len())
            .map(|m| self.rel.iter().zip(&w).map(|(r, wg)| r[m] * wg).sum())
            .collect();
        let fw = lmo(&c, self.e, self.constraint)?;
        let u = self.utilities(&fw.exposure(self.e));
        Ok((dot(&w, &u) - dot(&w, &self.u)).max(0.0))
    }

    /// Permutations (as item → position) with their total weights.
    pub fn support(&self) -> Vec<(Vec<usize>, f64)> {
        let mut weights = vec![0.0; self.pool.len()];
        for a in self.atoms.iter().filter(|a| a.weight > 0.0) {
            for &(id, th) in &a.parts {
                weights[id] += a.weight * th;
            }
        }
        let total: f64 = weights.iter().sum();
        self.pool
            .iter()
            .zip(weights)
            .filter(|(_, w)| *w > 0.0)
            .map(|(p, w)| (p.clone(), w / total))
            .collect()
    }
}
