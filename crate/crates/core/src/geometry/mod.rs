//! Zero level sets of simulated fields and the geometric quantities read
//! off them.
//!
//! Orientation convention: loops run counterclockwise around the region
//! where `u > 0`, so the `+` phase lies to the left of every edge. The
//! signed distance is positive in the `+` phase. [`InterfaceCurve::curvature`]
//! returns the geometric curvature `kappa`, positive for a convex loop
//! around a `+` droplet; the mean curvature in the sign convention of the
//! limit problem (`H = Delta d`) is `-kappa`.

mod contour;
mod curve;
mod distance;
mod velocity;

pub use contour::{extract_zero_set, trace_zero_level, Polyline};
pub use curve::{InterfaceCurve, ModeDecomposition, DEFAULT_MODE_CUTOFF};
pub use distance::{polyline_signed_distance, signed_distance, Disk, Geometry};
pub use velocity::{interface_velocity, VelocityEstimate};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("the field has no zero crossing")]
    EmptyInterface,
    #[error("the zero level set reaches the domain boundary")]
    BoundaryContact,
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("{context} needs at least {required} vertices, got {actual}")]
    TooFewVertices {
        context: &'static str,
        required: usize,
        actual: usize,
    },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
}
