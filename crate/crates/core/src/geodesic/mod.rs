//! Geodesics, the exponential map, and Jacobi fields.

mod conjugate;
mod flow;
pub(crate) mod integrator;
mod path;

pub use conjugate::{conjugate_time, DEGENERACY_RATIO, DEGENERACY_TOL};
pub(crate) use conjugate::frame_degeneracy;
pub use flow::{exp_map, integrate_geodesic, integrate_with_frame, linearized_flow, LinearizedFrame};
pub use integrator::OdeTolerances;
pub use path::{parallelism_residual, path_energy, path_length, CurveLike, GeodesicPath, ParametricCurve};

#[cfg(test)]
mod tests;
