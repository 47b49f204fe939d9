//! Archetypal analysis toolkit: projections, risk evaluation, solvers,
//! identifiability diagnostics, and synthetic benchmark generation.
//!
//! Data matrices hold one observation per row. Archetypes are rows of `H`;
//! mixture weights are rows of `W` constrained to the probability simplex,
//! so a factorization reads `X ~ W * H`.

pub mod error;
pub mod geometry;
pub mod init;
pub mod risk;
pub mod rng;
pub mod solvers;
pub mod synth;
pub mod uniqueness;

pub use error::{Error, Result};
pub use geometry::{
    distance_to_affine, project_convex_hull, project_simplex, AffineDistance, HullProjector,
    ProjectionResult, SimplexWeights, DEFAULT_PROJECTION_MAX_ITER, DEFAULT_PROJECTION_TOL,
};
pub use init::{spectral_init, successive_projections_init, InitMethod, InitResult};
pub use risk::{
    dd_set_set, loss_l, risk_gradient, risk_lagrangian, risk_lagrangian_with, spectrum,
    ArchetypeSet, DataMatrix, HullDistanceSum, RiskValue, SpectrumDiagnostics,
};
pub use rng::CounterRng;
pub use solvers::{fit_altmin, fit_palm, fit_sgd, solve_weights, FitReport, SolverConfig, WeightMatrix};
pub use synth::{
    gen_dataset, gen_separable, gen_smooth_archetypes, gen_toy_2d, gen_weights, load_matrix_csv,
    save_matrix_csv, MixtureRecipe, NoisyDataset, TOY_DEFAULT_N,
};
pub use uniqueness::{
    check_uniqueness_inequality, estimate_alpha, estimate_alpha_traced, hexagon_family,
    internal_radius, robustness_bound, AlphaEstimate, AlphaSearchConfig, HexagonInstance,
    InternalRadiusResult, RobustnessBound, UniquenessCheck,
};
