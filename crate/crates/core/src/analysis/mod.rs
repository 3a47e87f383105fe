//! Empirical checks of the scaling laws: log-log slopes, detection of
//! singular points by operator magnitude, profile-shape classification and
//! Monte-Carlo deviation against the concentration bound.

mod detect;
mod deviation;
mod profile;
mod scaling;

pub use detect::{detect, Confusion, DetectionReport};
pub use deviation::{deviation_mc, DeviationStats, EpsilonCheck};
pub use profile::{
    approach_line, fit_profiles, levenberg_marquardt, profile_fit, profile_registry, ApproachPoint, BoundaryProfile,
    EdgeProfile, FamilyFit, FitOptions, IntersectionProfile, ProfileFamily, ProfileFit,
};
pub use scaling::{fit_power_law, log_grid, scaling_fit, select_point, write_scaling_csv, PointSelector, ScalingFit};
