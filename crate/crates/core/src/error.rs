//! Error types for every stage of the retargeting pipeline.

use thiserror::Error;

/// Errors raised while building meshes and rasterizing labels onto them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("image dimensions must be at least 2x2, got {width}x{height}")]
    InvalidDimensions { width: f64, height: f64 },
    #[error("target vertex count must be at least 4, got {0}")]
    TooFewVertices(usize),
    #[error("face {face} has non-positive signed area {area}")]
    NonPositiveFace { face: usize, area: f64 },
    #[error("vertex {vertex} lies outside the domain rectangle")]
    VertexOutOfDomain { vertex: usize },
    #[error("face {face} references vertex {vertex} which does not exist")]
    BadFaceIndex { face: usize, vertex: usize },
    #[error("edge ({0}, {1}) is shared by more than two faces")]
    NonManifoldEdge(usize, usize),
    #[error("polygon needs at least 3 vertices, got {0}")]
    PolygonTooShort(usize),
    #[error("polygon has zero area")]
    DegeneratePolygon,
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersectingPolygon(usize, usize),
    #[error("polyline needs at least 2 points, got {0}")]
    PolylineTooShort(usize),
    #[error("point {index} at ({x}, {y}) is outside the image rectangle")]
    PointOutOfRange { index: usize, x: f64, y: f64 },
}

/// Errors from Beltrami-coefficient computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeltramiError {
    #[error("source face {0} has zero area")]
    DegenerateSourceFace(usize),
    #[error("face {0} has a vanishing conformal derivative; Beltrami coefficient undefined")]
    DegenerateMap(usize),
    #[error("face {face}: |mu| = {modulus} is not below 1, elliptic coefficients undefined")]
    NotElliptic { face: usize, modulus: f64 },
    #[error("expected {expected} per-vertex positions, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
}

/// Errors from the Beltrami prescriptions.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrescribeError {
    #[error("width ratio must be positive and finite, got {0}")]
    InvalidRatio(f64),
    #[error(
        "objects are wider than the target (w' = {w_prime:.4} <= 0); \
         rerun with --extremal --beta {suggested_beta:.0}"
    )]
    NeedsExtremal { w_prime: f64, suggested_beta: f64 },
    #[error("beta must lie strictly between 0 and 100 percent, got {0}")]
    InvalidBeta(f64),
    #[error("objects are at least as tall as the image (H = {total_height}, n = {height})")]
    ObjectsTooTall { total_height: f64, height: f64 },
    #[error("prescription expects {expected} faces, region model has {actual}")]
    LengthMismatch { expected: usize, actual: usize },
}

/// Errors from assembling and solving the constrained Beltrami system.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("coefficient field has {actual} faces, mesh has {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("target rectangle must be positive, got {width}x{height}")]
    InvalidTarget { width: f64, height: f64 },
    #[error(transparent)]
    Beltrami(#[from] BeltramiError),
    #[error("every vertex coordinate is constrained; nothing left to solve")]
    NoFreeUnknowns,
    #[error("constraint group {group} references vertex {vertex} outside the mesh")]
    VertexOutOfRange { group: String, vertex: usize },
    #[error("system has no parameter {0}")]
    UnknownParameter(String),
    #[error("chessboard constraint needs both horizontal and vertical stripes")]
    InconsistentChessboard,
    #[error("system has {rows} equations but {cols} unknowns")]
    Underdetermined { rows: usize, cols: usize },
    #[error("boundary conditions contradict constraint group(s) {groups}: residual {residual:.3e}")]
    ConflictingConstraints { groups: String, residual: f64 },
    #[error("linear system is singular or rank deficient{}", diagnose_groups(.suspects))]
    Singular { suspects: Vec<String> },
    #[error("solve residual {relative:.3e} exceeds tolerance {tolerance:.1e}")]
    Inaccurate { relative: f64, tolerance: f64 },
    #[error("warp folds over on {} face(s), first {:?}", .faces.len(), .faces.iter().take(8).collect::<Vec<_>>())]
    Foldover { faces: Vec<usize> },
}

fn diagnose_groups(suspects: &[String]) -> String {
    if suspects.is_empty() {
        String::new()
    } else {
        format!(" (deficient groups: {})", suspects.join(", "))
    }
}

/// Errors while resampling rasters through a piecewise-affine map.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WarpError {
    #[error("warped face {0} is not invertible")]
    NonInvertibleFace(usize),
    #[error("target point ({x:.3}, {y:.3}) is not covered by any warped face")]
    Uncovered { x: f64, y: f64 },
    #[error("raster of {width}x{height}x{channels} needs {expected} samples, got {actual}")]
    BadRaster { width: u32, height: u32, channels: u8, expected: usize, actual: usize },
    #[error("unsupported channel count {0}")]
    UnsupportedChannels(u8),
    #[error("output dimensions must be positive")]
    EmptyOutput,
}

/// Errors reading or validating label documents.
#[derive(Debug, Error)]
pub enum LabelError {
    #[error("failed to read labels: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed label document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("{kind} {shape}: {source}")]
    Invalid { kind: &'static str, shape: usize, source: MeshError },
}

/// Top-level error for an end-to-end retargeting job.
#[derive(Debug, Error)]
pub enum RetargetError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error(transparent)]
    Prescribe(#[from] PrescribeError),
    #[error(transparent)]
    Beltrami(#[from] BeltramiError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Warp(#[from] WarpError),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid job: {0}")]
    InvalidJob(String),
}

/// Coarse failure category, stable across releases and suitable for scripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Input,
    Extremal,
    Solver,
    Foldover,
}

impl FailureKind {
    pub fn code(self) -> &'static str {
        match self {
            FailureKind::Input => "input",
            FailureKind::Extremal => "extremal",
            FailureKind::Solver => "solver",
            FailureKind::Foldover => "foldover",
        }
    }
}

impl RetargetError {
    pub fn kind(&self) -> FailureKind {
        match self {
            RetargetError::Prescribe(PrescribeError::NeedsExtremal { .. })
            | RetargetError::Prescribe(PrescribeError::ObjectsTooTall { .. })
            | RetargetError::Prescribe(PrescribeError::InvalidBeta(_)) => FailureKind::Extremal,
            RetargetError::Solve(SolveError::Foldover { .. })
            | RetargetError::Warp(WarpError::NonInvertibleFace(_)) => FailureKind::Foldover,
            RetargetError::Solve(_) | RetargetError::Beltrami(_) | RetargetError::Warp(_) => {
                FailureKind::Solver
            }
            _ => FailureKind::Input,
        }
    }
}
