//! Rankings, stochastic ranking policies and their marginal rank matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::RankingProblem;

/// Default tolerance for doubly-stochastic checks.
pub const DS_TOL: f64 = 1e-7;

/// A permutation of items to positions: `position_of[m]` is the 0-based
/// rank of item `m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ranking {
    position_of: Vec<usize>,
}

impl Ranking {
    pub fn from_positions(position_of: Vec<usize>) -> Result<Self> {
        let n = position_of.len();
        let mut seen = vec![false; n];
        for &k in &position_of {
            if k >= n || std::mem::replace(&mut seen[k], true) {
                return Err(Error::InvalidPolicy(format!(
                    "{position_of:?} is not a permutation"
                )));
            }
        }
        Ok(Self { position_of })
    }

    /// Builds a ranking from items listed in rank order.
    pub fn from_order(order: &[usize]) -> Result<Self> {
        let n = order.len();
        let mut position_of = vec![usize::MAX; n];
        for (k, &m) in order.iter().enumerate() {
            if m >= n || position_of[m] != usize::MAX {
                return Err(Error::InvalidPolicy(format!("{order:?} is not a permutation")));
            }
            position_of[m] = k;
        }
        Ok(Self { position_of })
    }

    pub(crate) fn from_positions_unchecked(position_of: Vec<usize>) -> Self {
        debug_assert!(Self::from_positions(position_of.clone()).is_ok());
        Self { position_of }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            position_of: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.position_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position_of.is_empty()
    }

    pub fn position_of(&self, item: usize) -> usize {
        self.position_of[item]
    }

    pub fn positions(&self) -> &[usize] {
        &self.position_of
    }

    /// Items in rank order.
    pub fn order(&self) -> Vec<usize> {
        let mut order = vec![0; self.len()];
        for (m, &k) in self.position_of.iter().enumerate() {
            order[k] = m;
        }
        order
    }

    pub fn swap_items(&mut self, a: usize, b: usize) {
        self.position_of.swap(a, b);
    }
}

/// A finite distribution over rankings.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingPolicy {
    atoms: Vec<(Ranking, f64)>,
}

impl RankingPolicy {
    pub fn new(atoms: Vec<(Ranking, f64)>) -> Result<Self> {
        let Some(n) = atoms.first().map(|(r, _)| r.len()) else {
            return Err(Error::InvalidPolicy("policy has no rankings".into()));
        };
        if atoms.iter().any(|(r, _)| r.len() != n) {
            return Err(Error::InvalidPolicy("rankings of different lengths".into()));
        }
        if atoms.iter().any(|(_, w)| !(*w > 0.0 && *w <= 1.0 + 1e-12)) {
            return Err(Error::InvalidPolicy("weights must lie in (0, 1]".into()));
        }
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPolicy(format!("weights sum to {total}")));
        }
        let mut sorted: Vec<&Ranking> = atoms.iter().map(|(r, _)| r).collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidPolicy("duplicate ranking".into()));
        }
        Ok(Self { atoms })
    }

    pub fn deterministic(ranking: Ranking) -> Self {
        Self {
            atoms: vec![(ranking, 1.0)],
        }
    }

    pub fn atoms(&self) -> &[(Ranking, f64)] {
        &self.atoms
    }

    pub fn n_items(&self) -> usize {
        self.atoms[0].0.len()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Marginal rank probability matrix: entry `(m, k)` is the probability
    /// that item `m` is shown at rank `k`.
    pub fn marginal_matrix(&self) -> DoublyStochasticMatrix {
        let n = self.n_items();
        let mut data = vec![0.0; n * n];
        for (ranking, w) in &self.atoms {
            for (m, &k) in ranking.positions().iter().enumerate() {
                data[m * n + k] += w;
            }
        }
        DoublyStochasticMatrix {
            n,
            data,
            tol: DS_TOL,
        }
    }

    pub fn to_file(&self, problem: &RankingProblem) -> PolicyFile {
        let ids = problem.items();
        PolicyFile {
            rankings: self
                .atoms
                .iter()
                .map(|(r, _)| r.order().into_iter().map(|m| ids[m].id.clone()).collect())
                .collect(),
            weights: self.atoms.iter().map(|(_, w)| *w).collect(),
        }
    }

    pub fn from_file(file: &PolicyFile, problem: &RankingProblem) -> Result<Self> {
        if file.rankings.len() != file.weights.len() {
            return Err(Error::InvalidPolicy(format!(
                "{} rankings but {} weights",
                file.rankings.len(),
                file.weights.len()
            )));
        }
        let atoms = file
            .rankings
            .iter()
            .zip(&file.weights)
            .map(|(ids, &w)| {
                if ids.len() != problem.n_items() {
                    return Err(Error::DimensionMismatch {
                        expected: problem.n_items(),
                        actual: ids.len(),
                    });
                }
                let order = ids
                    .iter()
                    .map(|id| {
                        problem
                            .item_index(id)
                            .ok_or_else(|| Error::InvalidPolicy(format!("unknown item `{id}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((Ranking::from_order(&order)?, w))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(atoms)
    }
}

/// On-disk policy layout: rankings as item ids in rank order, plus weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub rankings: Vec<Vec<String>>,
    pub weights: Vec<f64>,
}

/// An `n × n` matrix with unit row and column sums and entries in `[0, 1]`,
/// all within `tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublyStochasticMatrix {
    n: usize,
    data: Vec<f64>,
    tol: f64,
}

impl DoublyStochasticMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(n, data, DS_TOL)
    }

    pub fn with_tolerance(n: usize, data: Vec<f64>, tol: f64) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: data.len(),
            });
        }
        if let Some(v) = data
            .iter()
            .find(|v| !v.is_finite() || **v < -tol || **v > 1.0 + tol)
        {
            return Err(Error::NotDoublyStochastic(format!("entry {v} outside [0, 1]")));
        }
        let m = Self { n, data, tol };
        let dev = m.max_marginal_deviation();
        if dev > tol {
            return Err(Error::NotDoublyStochastic(format!(
                "row/column sums deviate from 1 by {dev:.3e}"
            )));
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::NotDoublyStochastic("matrix is not square".into()));
        }
        Self::new(n, rows.concat())
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            n,
            data: vec![1.0 / n as f64; n * n],
            tol: DS_TOL,
        }
    }

    pub fn permutation(ranking: &Ranking) -> Self {
        RankingPolicy::deterministic(ranking.clone()).marginal_matrix()
    }

    pub(crate) fn from_raw(n: usize, data: Vec<f64>) -> Self {
        Self {
            n,
            data,
            tol: DS_TOL,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn get(&self, item: usize, position: usize) -> f64 {
        self.data[item * self.n + position]
    }

    pub fn row(&self, item: usize) -> &[f64] {
        &self.data[item * self.n..(item + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    /// Largest deviation of any row or column sum from one.
    pub fn max_marginal_deviation(&self) -> f64 {
        let n = self.n;
        let mut dev: f64 = 0.0;
        for m in 0..n {
            let s: f64 = self.row(m).iter().sum();
            dev = dev.max((s - 1.0).abs());
        }
        for k in 0..n {
            let s: f64 = (0..n).map(|m| self.data[m * n + k]).sum();
            dev = dev.max((s - 1.0).abs());
        }
        dev
    }

    /// `L∞` distance to another matrix of the same size.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n, "matrix sizes differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Exposure received by each item: `Σ e`.
    pub fn item_exposure(&self, exposure: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(exposure).map(|(p, e)| p * e).sum())
            .collect()
    }
}
