//! Box grids, the discrete Dirichlet Laplacian, Poisson solves, discrete norms and
//! boundary traces.

mod grid;
mod operators;
mod spectral;

pub use grid::{Face, Grid, Side, SpaceGrid, TimeGrid};
pub use operators::{
    dot, face_dot, flux_trace, grad_dot, grad_norm_sq, hm1_norm, l2_norm, laplacian, laplacian_into,
    masked_interior, normal_trace, norms, poisson_solve, solve_shifted, Norms, POISSON_TOL,
};
pub use spectral::LowPass;
