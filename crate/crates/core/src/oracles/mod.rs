//! Numerical checks of the analytical results behind the controllers.
//!
//! Every oracle is pure given its inputs (and an RNG seed where sampling is involved)
//! and returns a serializable report listing each inequality it checked.

pub mod bounded_diff;
pub mod convex_game;
pub mod entropic;
pub mod rollout_game;
pub mod variance;

use serde::{Deserialize, Serialize};

pub use bounded_diff::{bounded_differences_check, BoundedDiffQuery, BoundedDiffReport};
pub use convex_game::{mean_gap_over_seeds, run_convex_game, ConvexGameSpec, GameReport, QuadraticGroup};
pub use entropic::{entropic_gradient, lse_value_and_best_response, EntropicReport, EntropicSurrogateQuery};
pub use rollout_game::{
    run_rollout_game, softmin_arm_distribution, RolloutGameReport, RolloutGameSpec, SoftminResult,
};
pub use variance::{
    batch_variance_proxy, shadow_price_best_response, sqrt_allocation, BatchVarianceReport, SqrtAllocation,
    VarianceAllocQuery,
};

/// One checked inequality `measured <= bound` (or an identity checked against a tolerance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    pub fn le(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            pass: measured <= bound,
        }
    }
}

/// True when every check passed.
pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}
