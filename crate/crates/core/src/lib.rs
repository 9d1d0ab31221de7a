//! Fair and diverse ranking policies for two-sided markets.
//!
//! Step one maximizes a concave user-fairness welfare over doubly
//! stochastic marginal rank matrices, optionally under item-group
//! exposure constraints ([`fairopt`]). Step two decomposes the resulting
//! matrix into a distribution over rankings, greedily picking diverse
//! rankings ([`bvn`]). [`policies`] wires both steps together along with
//! the utility, user-fairness, item-fairness and diversity baselines.

pub mod bench;
pub mod bvn;
pub mod concave;
pub mod diversity;
pub mod error;
pub mod fairopt;
pub mod metrics;
pub mod policies;
pub mod problem;
pub mod ranking;

pub use bvn::{decompose, MatcherStrategy};
pub use concave::{ConcaveFn, PiecewiseLinear};
pub use error::{Error, Result};
pub use fairopt::{solve_fair, FairOptConfig, ItemConstraint, Objective, SolveResult};
pub use metrics::{MeritRule, MetricReport};
pub use policies::{tsfd_rank, Method};
pub use problem::{Item, RankingProblem, Scope, UserGroup, Violation};
pub use ranking::{DoublyStochasticMatrix, PolicyFile, Ranking, RankingPolicy};
