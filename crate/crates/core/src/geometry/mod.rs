//! Singular manifolds built from flat or curved parametric pieces, point
//! cloud sampling and ground-truth singularity annotation.

mod annotate;
mod builtin;
mod chart;
mod io;
mod manifold;
mod sample;

pub use annotate::{annotate, Annotation};
pub use builtin::{build_builtin, builtin_registry, BuiltinGeometry, Params};
pub use chart::{AffineChart, Chart, ParamBox};
pub use io::{read_cloud_csv, read_cloud_json, write_cloud_csv, write_cloud_json};
pub use manifold::{
    AffineLocus, Density, DensityProfile, ExponentialProfile, FaceRole, ManifoldPiece,
    SingularManifold, SingularityKind, SingularitySpec, UniformProfile,
};
pub use sample::{sample, sample_stream, AnnotatedCloud, SampleMode};
