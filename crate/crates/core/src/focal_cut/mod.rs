//! Focal times, distances from `N`, cut times, the cut locus and the
//! checks run over it.

mod checks;
mod cut;
mod fan;
mod shoot;

pub use checks::{
    check_rho_continuity, check_rho_leq_lambda, check_se_dense, cut_pitch, distance_estimate, ContinuityPlan,
    ContinuityReport, DensityReport, LevelStats, RhoLambdaReport,
};
pub use cut::{
    distance_to, focal_time, is_minimizing, point_distance, CutClass, CutLocus, CutRecord, CutTime,
};
pub use fan::{DistancePlan, NormalFan};
pub use shoot::{DistanceWitness, Minimizer};
pub(crate) use shoot::{residual_in, shoot};
