use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("triangle inequality violated: d({0},{2}) > d({0},{1}) + d({1},{2})")]
    TriangleViolation(usize, usize, usize),
    #[error("facilities {0} and {1} are at distance 0")]
    DuplicateFacilityLocation(usize, usize),
    #[error("budget out of range: {0}")]
    BudgetOutOfRange(String),
    #[error("malformed metric: {0}")]
    BadMetric(String),
    #[error("malformed instance: {0}")]
    BadInstance(String),
    #[error("open facility set is empty")]
    EmptyOpenSet,
    #[error("open set does not contain every pre-opened facility")]
    InfeasiblePreopen,

    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,

    #[error("oracle solution cost {cost} exceeds the guessed bound U = {bound}")]
    SolutionCostExceedsU { cost: String, bound: String },
    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("iterative rounding made no progress after {0} iterations")]
    NoProgress(usize),
    #[error("solution has {0} strictly fractional coordinates, expected at most 2")]
    NotAlmostIntegral(usize),
    #[error("branch needs {needed} removed clients but only {available} exist")]
    NotEnoughClients { needed: usize, available: usize },

    #[error("instance too large for brute force: {facilities} facilities (cap {cap})")]
    TooLarge { facilities: usize, cap: usize },
    #[error("no feasible solution found")]
    NoFeasibleSolution,
    #[error("invariant {name} failed at {step}: {detail}")]
    InvariantFailure { name: String, step: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
