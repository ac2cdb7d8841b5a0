//! Exact and heuristic TSP solvers.
//!
//! The exact solvers provide labels and correctness oracles; the genetic
//! and ant-colony heuristics are timing and quality baselines.

mod ant_colony;
mod exact;
mod genetic;

pub use ant_colony::{solve_ant_colony, AcoConfig};
pub use exact::{
    solve_branch_bound, solve_branch_bound_stats, solve_dp, solve_exhaustive,
    solve_exhaustive_stats, SearchStats, BRANCH_BOUND_LIMIT, DP_LIMIT, EXHAUSTIVE_LIMIT,
};
pub use genetic::{solve_genetic, GaConfig};

use serde::{Deserialize, Serialize};

use crate::instance::{Tour, TspInstance};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Exh,
    Dp,
    Bb,
    Ga,
    Aco,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Exh,
        Algorithm::Dp,
        Algorithm::Bb,
        Algorithm::Ga,
        Algorithm::Aco,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Exh => "exhaustive",
            Algorithm::Dp => "dynamic-programming",
            Algorithm::Bb => "branch-and-bound",
            Algorithm::Ga => "genetic",
            Algorithm::Aco => "ant-colony",
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Algorithm::Exh | Algorithm::Dp | Algorithm::Bb)
    }

    /// Largest instance the solver accepts.
    pub fn size_limit(self) -> Option<usize> {
        match self {
            Algorithm::Exh => Some(EXHAUSTIVE_LIMIT),
            Algorithm::Dp => Some(DP_LIMIT),
            Algorithm::Bb => Some(BRANCH_BOUND_LIMIT),
            Algorithm::Ga | Algorithm::Aco => None,
        }
    }
}

/// Configuration for dispatching any solver by [`Algorithm`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub ga: GaConfig,
    pub aco: AcoConfig,
}

pub fn solve(algo: Algorithm, instance: &TspInstance, cfg: &SolverConfig) -> Result<Tour> {
    match algo {
        Algorithm::Exh => solve_exhaustive(instance),
        Algorithm::Dp => solve_dp(instance),
        Algorithm::Bb => solve_branch_bound(instance),
        Algorithm::Ga => solve_genetic(instance, &cfg.ga),
        Algorithm::Aco => solve_ant_colony(instance, &cfg.aco),
    }
}
