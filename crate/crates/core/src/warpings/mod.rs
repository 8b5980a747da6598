//! Invertible warpings from observation space to latent space.

mod composite;
mod elementary;
mod fit;
mod numeric;

pub use composite::{sal_layer, sal_stack, CompositeWarping, Warp};
pub use elementary::{boxcox_limit_check, ElementaryWarping, TanhTerm, BOXCOX_ZERO_GUARD};
pub use fit::{
    approximation_errors, difference_norms, fit_warping_least_squares, pushforward_density, uniform_grid,
    ApproxErrors, EvalGrid, LeastSquaresFit, LeastSquaresSettings, LeastSquaresStart, Norms,
};
pub use numeric::{numeric_inverse, NrmOptions, NrmOutcome, NrmStats};
