//! Geodesics, normal cone bundles, focal loci and cut loci of submanifolds
//! in Finsler manifolds.
//!
//! The crate is layered bottom-up:
//!
//! * [`dual`], [`atlas`], [`metric`]: scalar arithmetic with nested duals,
//!   chart atlases, and Finsler metrics with their tensors and Legendre map;
//! * [`geodesic`]: the geodesic flow, exponential map and Jacobi fields;
//! * [`submanifold`]: normal cones and the normal exponential map;
//! * [`focal_cut`]: focal times, distances, cut times and the cut locus;
//! * [`topology`]: the inverse normal exponential, the two deformation
//!   retractions, and the differential of `d(N, ·)²`;
//! * [`loops`]: minima of distance functionals on the cut locus and
//!   geodesic loops;
//! * [`scenario`]: configuration, builtin scenarios and output emission.

pub mod atlas;
pub mod dual;
pub mod focal_cut;
pub mod error;
pub mod geodesic;
pub(crate) mod linalg;
pub mod loops;
pub mod metric;
pub mod scenario;
pub mod submanifold;
pub mod topology;

pub use error::{Error, Result};
