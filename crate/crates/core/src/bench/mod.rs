//! Synthetic movie benchmark, bias injection and small hand-built problems.

mod fixtures;

pub use fixtures::{fixture, nonzero_utility_welfare_fn, Expectation, Fixture, Relation, FIXTURE_NAMES};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Item, RankingProblem, UserGroup};

pub const BLACK_LEAD: &str = "black-lead";
pub const WHITE_LEAD: &str = "white-lead";
pub const MALE: &str = "male";
pub const FEMALE: &str = "female";

/// Intent distribution of the first prototype group over the five genres.
pub const INTENTS_A: [f64; 5] = [0.5, 0.5, 0.0, 0.0, 0.0];
/// Intent distribution of the second prototype group over the five genres.
pub const INTENTS_B: [f64; 5] = [0.0, 0.0, 0.5, 0.25, 0.25];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_movies: usize,
    /// Genre name and movie count, in block order.
    pub genre_counts: Vec<(String, usize)>,
    pub black_lead: usize,
    pub white_lead: usize,
    pub rho_male: f64,
    pub similarity: f64,
    pub eta: f64,
    pub sample_size: usize,
    pub rating_range: (f64, f64),
    /// Number of intents after merging genres (2..=5).
    pub n_intents: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_movies: 100,
            genre_counts: vec![
                ("Romance".into(), 20),
                ("Comedy".into(), 25),
                ("Action".into(), 25),
                ("Thriller".into(), 15),
                ("SciFi".into(), 15),
            ],
            black_lead: 20,
            white_lead: 80,
            rho_male: 0.6,
            similarity: 0.5,
            eta: 1.0,
            sample_size: 15,
            rating_range: (6.0, 10.0),
            n_intents: 5,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProblem(m));
        if self.genre_counts.len() != 5 {
            return bad(format!("expected 5 genres, got {}", self.genre_counts.len()));
        }
        let genres: usize = self.genre_counts.iter().map(|(_, c)| c).sum();
        if genres != self.n_movies {
            return bad(format!("genre counts sum to {genres}, not {}", self.n_movies));
        }
        if self.black_lead + self.white_lead != self.n_movies {
            return bad(format!(
                "lead group counts sum to {}, not {}",
                self.black_lead + self.white_lead,
                self.n_movies
            ));
        }
        if !(0.0..=1.0).contains(&self.rho_male) {
            return bad(format!("rho_male {} outside [0, 1]", self.rho_male));
        }
        if !(0.0..=1.0).contains(&self.similarity) {
            return bad(format!("similarity {} outside [0, 1]", self.similarity));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return bad(format!("eta {} must be a non-negative number", self.eta));
        }
        if self.sample_size == 0 || self.sample_size > self.n_movies {
            return bad(format!(
                "sample size {} outside 1..={}",
                self.sample_size, self.n_movies
            ));
        }
        let (lo, hi) = self.rating_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return bad(format!("rating range [{lo}, {hi}] is empty"));
        }
        intent_blocks(self.n_intents)?;
        Ok(())
    }
}

/// `e(k) = (1/k)^eta` for ranks `k = 1..=n`.
pub fn power_exposure(n: usize, eta: f64) -> Vec<f64> {
    (1..=n).map(|k| (1.0 / k as f64).powf(eta)).collect()
}

/// Genre blocks merged into each intent for a given intent count.
pub fn intent_blocks(n_intents: usize) -> Result<Vec<Vec<usize>>> {
    Ok(match n_intents {
        5 => vec![vec![0], vec![1], vec![2], vec![3], vec![4]],
        4 => vec![vec![0], vec![1], vec![2], vec![3, 4]],
        3 => vec![vec![0, 1], vec![2], vec![3, 4]],
        2 => vec![vec![0, 1], vec![2, 3, 4]],
        other => {
            return Err(Error::Unsupported(format!(
                "intent count {other}; supported counts are 2 to 5"
            )))
        }
    })
}

/// Full movie universe for `config`.
pub fn generate_universe(config: &BenchConfig) -> Result<RankingProblem> {
    config.validate()?;
    let n = config.n_movies;
    let n_genres = config.genre_counts.len();

    let mut genre_of = Vec::with_capacity(n);
    let mut block_start = Vec::with_capacity(n_genres);
    for (g, (_, count)) in config.genre_counts.iter().enumerate() {
        block_start.push(genre_of.len());
        genre_of.extend(std::iter::repeat_n(g, *count));
    }

    // Round-robin over genres, taking the next unused movie of each block.
    let mut black = vec![false; n];
    let mut taken = vec![0usize; n_genres];
    let mut assigned = 0;
    while assigned < config.black_lead {
        let before = assigned;
        for g in 0..n_genres {
            if assigned == config.black_lead {
                break;
            }
            if taken[g] < config.genre_counts[g].1 {
                black[block_start[g] + taken[g]] = true;
                taken[g] += 1;
                assigned += 1;
            }
        }
        debug_assert!(assigned > before);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = config.rating_range;
    let ratings: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();

    let items = (0..n)
        .map(|m| Item {
            id: format!("movie-{m:03}"),
            group: if black[m] { BLACK_LEAD } else { WHITE_LEAD }.to_string(),
        })
        .collect();
    let relevance = (0..n)
        .map(|m| {
            let mut row = vec![0.0; n_genres];
            row[genre_of[m]] = ratings[m] - lo;
            row
        })
        .collect();
    let s = config.similarity;
    let mix = |own: &[f64; 5], other: &[f64; 5]| -> Vec<f64> {
        own.iter()
            .zip(other)
            .map(|(a, b)| (1.0 - 0.5 * s) * a + 0.5 * s * b)
            .collect()
    };
    let user_groups = vec![
        UserGroup {
            id: MALE.into(),
            proportion: config.rho_male,
            intent_dist: mix(&INTENTS_A, &INTENTS_B),
        },
        UserGroup {
            id: FEMALE.into(),
            proportion: 1.0 - config.rho_male,
            intent_dist: mix(&INTENTS_B, &INTENTS_A),
        },
    ];
    let universe = RankingProblem::new(
        items,
        config.genre_counts.iter().map(|(g, _)| g.clone()).collect(),
        relevance,
        user_groups,
        power_exposure(n, config.eta),
    )?;
    if config.n_intents == 5 {
        Ok(universe)
    } else {
        merge_intents(&universe, &intent_blocks(config.n_intents)?)
    }
}

/// Merges intents block-wise: relevance and intent mass are summed within
/// each block; merged intent ids join the member ids with `+`.
pub fn merge_intents(problem: &RankingProblem, blocks: &[Vec<usize>]) -> Result<RankingProblem> {
    let n_int = problem.intents().len();
    let mut seen = vec![false; n_int];
    for &i in blocks.iter().flatten() {
        if i >= n_int || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidProblem(format!(
                "intent blocks must partition 0..{n_int}"
            )));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidProblem(format!(
            "intent blocks must partition 0..{n_int}"
        )));
    }
    let merge = |v: &[f64]| -> Vec<f64> {
        blocks
            .iter()
            .map(|b| b.iter().map(|&i| v[i]).sum())
            .collect()
    };
    let intents = blocks
        .iter()
        .map(|b| {
            b.iter()
                .map(|&i| problem.intents()[i].as_str())
                .collect::<Vec<_>>()
                .join("+")
        })
        .collect();
    let user_groups = problem
        .user_groups()
        .iter()
        .map(|g| UserGroup {
            id: g.id.clone(),
            proportion: g.proportion,
            intent_dist: merge(&g.intent_dist),
        })
        .collect();
    RankingProblem::new(
        problem.items().to_vec(),
        intents,
        problem.relevance_rows().iter().map(|r| merge(r)).collect(),
        user_groups,
        problem.exposure().to_vec(),
    )
}

/// Uniform `k`-subset of the universe's items, kept in universe order,
/// with the first `k` exposure entries.
pub fn sample_problem(universe: &RankingProblem, k: usize, seed: u64) -> Result<RankingProblem> {
    let n = universe.n_items();
    if k == 0 || k > n {
        return Err(Error::InvalidProblem(format!("sample size {k} outside 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    RankingProblem::new(
        chosen.iter().map(|&m| universe.items()[m].clone()).collect(),
        universe.intents().to_vec(),
        chosen
            .iter()
            .map(|&m| universe.relevance_rows()[m].clone())
            .collect(),
        universe.user_groups().to_vec(),
        universe.exposure()[..k].to_vec(),
    )
}

/// Scales the relevance rows of black-lead items by `1 + b`.
pub fn apply_bias(problem: &RankingProblem, b: f64) -> Result<RankingProblem> {
    if !(b > -1.0) || !b.is_finite() {
        return Err(Error::InvalidProblem(format!("bias {b} must exceed -1")));
    }
    let relevance = problem
        .items()
        .iter()
        .zip(problem.relevance_rows())
        .map(|(it, row)| {
            if it.group == BLACK_LEAD {
                row.iter().map(|r| r * (1.0 + b)).collect()
            } else {
                row.clone()
            }
        })
        .collect();
    problem.with_relevance(relevance)
}

/// Random non-degenerate problem for property checks: `n ≥ 2` items split
/// into item groups `A` and `B`, `n_intents` intents, `n_groups` user
/// groups and a non-increasing exposure vector with a positive head.
pub fn random_problem<R: Rng>(n: usize, n_intents: usize, n_groups: usize, rng: &mut R) -> RankingProblem {
    assert!(n >= 2 && n_intents >= 1 && n_groups >= 1, "random_problem needs n >= 2 and non-empty intents and groups");
    loop {
        let items = (0..n)
            .map(|m| Item {
                id: format!("d{m}"),
                group: if m < n.div_ceil(2) { "A" } else { "B" }.into(),
            })
            .collect();
        let relevance = (0..n)
            .map(|_| {
                (0..n_intents)
                    .map(|_| if rng.gen_bool(0.6) { rng.gen_range(0.05..1.0) } else { 0.0 })
                    .collect()
            })
            .collect();
        let weights: Vec<f64> = (0..n_groups).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let user_groups = weights
            .iter()
            .enumerate()
            .map(|(g, w)| {
                let raw: Vec<f64> = (0..n_intents)
                    .map(|_| if rng.gen_bool(0.7) { rng.gen_range(0.05..1.0) } else { 0.0 })
                    .collect();
                let mass: f64 = raw.iter().sum();
                let intent_dist = if mass > 0.0 {
                    raw.iter().map(|v| v / mass).collect()
                } else {
                    vec![1.0 / n_intents as f64; n_intents]
                };
                UserGroup {
                    id: format!("UG{}", g + 1),
                    proportion: w / total,
                    intent_dist,
                }
            })
            .collect();
        let mut exposure: Vec<f64> = (0..n)
            .map(|k| if k > 0 && rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.1..1.0) })
            .collect();
        exposure.sort_by(|a, b| b.total_cmp(a));
        let problem = RankingProblem::new(
            items,
            (1..=n_intents).map(|i| format!("i{i}")).collect(),
            relevance,
            user_groups,
            exposure,
        )
        .expect("generated problems are well formed");
        if problem.validate().is_empty() {
            return problem;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::merit;

    #[test]
    fn random_problems_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..8 {
            let p = random_problem(n, 3, 2, &mut rng);
            assert_eq!(p.n_items(), n);
            assert_eq!(p.item_groups().len(), 2);
            assert!(p.validate().is_empty());
            assert!(p.exposure().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn universe_layout() {
        let u = generate_universe(&BenchConfig::default()).unwrap();
        assert_eq!(u.n_items(), 100);
        let sizes = u.item_group_sizes();
        assert_eq!(sizes[BLACK_LEAD], 20);
        assert_eq!(sizes[WHITE_LEAD], 80);
        for row in u.relevance_rows() {
            assert_eq!(row.iter().filter(|&&r| r > 0.0).count(), 1);
            assert!(row.iter().all(|&r| (0.0..=4.0).contains(&r)));
        }
        // four black-lead movies in every genre
        for g in 0..5 {
            let count = (0..100)
                .filter(|&m| u.relevance(m, g) > 0.0 && u.items()[m].group == BLACK_LEAD)
                .count();
            assert_eq!(count, 4);
        }
        assert!(u.validate().is_empty());
        assert!((u.exposure()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn similarity_extremes() {
        let cfg = BenchConfig { similarity: 0.0, ..Default::default() };
        let u = generate_universe(&cfg).unwrap();
        assert_eq!(u.user_groups()[0].intent_dist, INTENTS_A.to_vec());
        let cfg = BenchConfig { similarity: 1.0, ..Default::default() };
        let u = generate_universe(&cfg).unwrap();
        let want = [0.25, 0.25, 0.25, 0.125, 0.125];
        for g in u.user_groups() {
            for (a, b) in g.intent_dist.iter().zip(want) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = BenchConfig { seed: 7, ..Default::default() };
        assert_eq!(generate_universe(&cfg).unwrap(), generate_universe(&cfg).unwrap());
        let other = BenchConfig { seed: 8, ..Default::default() };
        assert_ne!(generate_universe(&cfg).unwrap(), generate_universe(&other).unwrap());
    }

    #[test]
    fn samples_are_subsets() {
        let u = generate_universe(&BenchConfig::default()).unwrap();
        for seed in 0..20 {
            let s = sample_problem(&u, 15, seed).unwrap();
            assert_eq!(s.n_items(), 15);
            assert_eq!(s.exposure(), &u.exposure()[..15]);
            for (m, it) in s.items().iter().enumerate() {
                let src = u.item_index(&it.id).unwrap();
                assert_eq!(s.relevance_rows()[m], u.relevance_rows()[src]);
                assert_eq!(u.items()[src].group, it.group);
            }
        }
        let a = sample_problem(&u, 15, 1).unwrap();
        let b = sample_problem(&u, 15, 2).unwrap();
        assert_ne!(a.items(), b.items());
        assert!(sample_problem(&u, 101, 0).is_err());
    }

    #[test]
    fn bias_scales_rows_and_merit() {
        let u = generate_universe(&BenchConfig::default()).unwrap();
        assert_eq!(apply_bias(&u, 0.0).unwrap(), u);
        let b = apply_bias(&u, 1.0).unwrap();
        for (m, it) in u.items().iter().enumerate() {
            let k = if it.group == BLACK_LEAD { 2.0 } else { 1.0 };
            for (x, y) in u.relevance_rows()[m].iter().zip(&b.relevance_rows()[m]) {
                assert_eq!(k * x, *y);
            }
        }
        let ratio = merit(&b, BLACK_LEAD).unwrap() / merit(&u, BLACK_LEAD).unwrap();
        assert!((ratio - 2.0).abs() < 1e-12);
        let back = apply_bias(&b, -0.5).unwrap();
        for (r1, r2) in back.relevance_rows().iter().zip(u.relevance_rows()) {
            for (x, y) in r1.iter().zip(r2) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!(apply_bias(&u, -1.0).is_err());
    }

    #[test]
    fn merged_intents_keep_mass() {
        for k in 2..=5 {
            let cfg = BenchConfig { n_intents: k, ..Default::default() };
            let u = generate_universe(&cfg).unwrap();
            assert_eq!(u.intents().len(), k);
            assert!(u.validate().is_empty());
            let total: f64 = u.population_intent().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert_eq!(
            generate_universe(&BenchConfig { n_intents: 3, ..Default::default() })
                .unwrap()
                .intents(),
            &["Romance+Comedy", "Action", "Thriller+SciFi"]
        );
        assert!(intent_blocks(6).is_err());
    }

    #[test]
    fn config_checks() {
        let bad = BenchConfig { black_lead: 30, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = BenchConfig { rho_male: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let cfg: BenchConfig = serde_json::from_str(r#"{"seed": 3, "eta": 2.0}"#).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.n_movies, 100);
    }
}
