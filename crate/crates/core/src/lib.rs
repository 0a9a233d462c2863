//! Content-aware image retargeting with prescribed Beltrami coefficients.
//!
//! A source image is triangulated, each face receives a Beltrami coefficient
//! describing how it may distort, and a sparse elliptic system recovers a
//! piecewise-affine warp onto the target rectangle. Objects are kept to a
//! uniform scale plus translation and labelled lines are kept straight.

pub mod beltrami;
pub mod clbs;
pub mod error;
pub mod geometry;
pub mod labels;
pub mod mesh;
pub mod pipeline;
pub mod prescribe;
pub mod selfcheck;
pub mod warp;

pub use beltrami::{BeltramiField, CoefficientField, Coefficients};
pub use clbs::{ConstraintSet, SparseSystem, TargetRect, WarpField};
pub use error::{FailureKind, RetargetError};
pub use geometry::Point2;
pub use labels::LabelSet;
pub use mesh::{Mesh, RegionModel};
pub use pipeline::{compute_warp, retarget, RetargetJob, TargetSpec};
pub use prescribe::{Choice, RetargetConfig};
pub use warp::RasterImage;
