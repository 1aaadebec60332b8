//! Iterative LP rounding for robust k-median and k-means with outliers, plus the
//! partition-matroid and knapsack median variants.
//!
//! Everything runs in exact rational arithmetic, so every rounding invariant is
//! checked without tolerances.

pub mod check;
pub mod error;
pub mod finalize;
pub mod generate;
pub mod io;
pub mod iterround;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod preprocess;
pub mod rational;
pub mod variants;

pub use error::{Error, Result};
pub use model::{ClusteringInstance, Solution};
pub use rational::Rational;

/// Certified ratio bound: `α₁` for `q = 1`, `α₂` for `q = 2`.
pub fn alpha(q: u32) -> Rational {
    match q {
        1 => Rational::new(7081, 1000),
        _ => Rational::new(53002, 1000),
    }
}
