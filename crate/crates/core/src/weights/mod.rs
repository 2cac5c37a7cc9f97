//! Weighting schemes for control units and pre-treatment periods.

mod entropy;
mod regsc;
mod sdid;
mod simplex;

pub use entropy::{balance, entropy_balance};
pub use regsc::{penalty_grid, solve_regularized_sc, RegularizedScSolution, ScPenalty, CV_GRID_SIZE};
pub use sdid::{
    compute_zeta, solve_time_weights, solve_unit_weights, solve_unit_weights_no_intercept, TimeWeightSolution,
    UnitWeightSolution, ZetaParams,
};
pub use simplex::{project_simplex, SimplexWeights, SolverOptions};

pub(crate) use sdid::sample_sd;
