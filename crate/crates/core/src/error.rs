use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("matrix is not doubly stochastic: {0}")]
    NotDoublyStochastic(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unknown user group `{0}`")]
    UnknownUserGroup(String),

    #[error("unknown item group `{0}`")]
    UnknownItemGroup(String),

    #[error("unknown intent `{0}`")]
    UnknownIntent(String),

    #[error("input {input} is outside the domain of {function}")]
    Domain { function: String, input: f64 },

    #[error("item group `{group}` has non-positive merit {merit}")]
    MeritNonPositive { group: String, merit: f64 },

    #[error("item-fairness constraints are not satisfiable: {0}")]
    Infeasible(String),

    #[error("instance too large: {what} is {size}, limit is {limit}")]
    InstanceTooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("decomposition stalled with residual mass {residual:.3e}: no perfect matching in residual support")]
    DecompositionStalled { residual: f64 },

    #[error("graph has no perfect matching")]
    NoPerfectMatching,

    #[error("no top-{level} matching admits a perfect completion")]
    NoCompletion { level: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),

    #[error("invalid concave function: {0}")]
    InvalidFunction(String),
}
