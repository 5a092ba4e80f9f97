//! Numerical checks of the weighted pointwise identity, the positivity bounds
//! behind the Carleman estimate, and the estimate's two sides.

mod identity;
mod node;
mod positivity;
mod ratio;

pub use identity::{
    assemble_ingredients, deep_nodes, expected_integrated_residual, identity_residual, integrated_residual, interior_residual, transform,
    transform_residual, IdentityIngredients, IdentityResidual, InteriorResidual, ItoRealization, ManufacturedProcess, Transformed,
};
pub use node::{identity_field, peval, peval_over_cube, psi_expanded, IdentityField, LPoly, NodeCoefficients, LOG_HEADROOM};
pub use positivity::{
    bv2_bound, bv2_matrix, check_bv2, check_zd1, check_zd3, level_set_nodes, weight_at, zd3_threshold, PositivityReport,
};
pub use ratio::{carleman_ratio, carleman_sweep, CarlemanRatio, DEGENERATE_FLOOR};
