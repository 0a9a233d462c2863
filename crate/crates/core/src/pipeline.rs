//! End-to-end retargeting: labels to regions, prescription, constrained
//! solve and resampling.
//!
//! The solver always squeezes the width of its working frame. Widening
//! requests squeeze the height of the image turned a quarter turn and then
//! scale uniformly; explicit target sizes squeeze to the requested aspect and
//! then scale uniformly.

use std::time::Instant;

use serde::Serialize;

use crate::beltrami::{coefficients_from_mu, jacobian_of_map, BeltramiField, CLAMP_EPSILON};
use crate::clbs::{
    apply_boundary_conditions, assemble_laplacian, augment_chessboard_constraints, augment_deformation_constraints,
    solve, ConstraintSet, ParamKind, SparseSystem, TargetRect, WarpField,
};
use crate::error::RetargetError;
use crate::geometry::Point2;
use crate::labels::LabelSet;
use crate::mesh::{build_regular_mesh, Mesh, RegionModel, DEFAULT_VERTEX_COUNT};
use crate::prescribe::{prescribe, Choice, PrescriptionMode, RetargetConfig, SqueezeAxis, DEFAULT_BETA};
use crate::warp::{build_inverse_map, resample, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetSpec {
    /// Target width over source width; the height is kept.
    Ratio(f64),
    /// Exact output size in pixels.
    Dimensions { width: u32, height: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetargetJob {
    pub target: TargetSpec,
    pub choice: Choice,
    pub chessboard: bool,
    pub force_extremal: bool,
    pub beta: f64,
    pub mesh_vertices: usize,
}

impl Default for RetargetJob {
    fn default() -> Self {
        Self {
            target: TargetSpec::Ratio(1.0),
            choice: Choice::Even,
            chessboard: false,
            force_extremal: false,
            beta: DEFAULT_BETA,
            mesh_vertices: DEFAULT_VERTEX_COUNT,
        }
    }
}

impl RetargetJob {
    pub fn with_ratio(ratio: f64) -> Self {
        Self { target: TargetSpec::Ratio(ratio), ..Self::default() }
    }
}

/// Geometry of the output for a source of `width x height` pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputPlan {
    /// Width ratio solved for before the uniform post-scale.
    pub aspect_ratio: f64,
    pub post_scale: f64,
    /// Real-valued target rectangle the map lands on.
    pub target_width: f64,
    pub target_height: f64,
    pub out_width: u32,
    pub out_height: u32,
}

pub fn plan_output(width: u32, height: u32, target: TargetSpec) -> Result<OutputPlan, RetargetError> {
    let (m, n) = (width as f64, height as f64);
    let (aspect_ratio, post_scale) = match target {
        TargetSpec::Ratio(r) => {
            if !(r.is_finite() && r > 0.0) {
                return Err(RetargetError::InvalidJob(format!("ratio must be positive and finite, got {r}")));
            }
            (r, 1.0)
        }
        TargetSpec::Dimensions { width: w, height: h } => {
            if w < 2 || h < 2 {
                return Err(RetargetError::InvalidJob(format!("target size must be at least 2x2, got {w}x{h}")));
            }
            ((w as f64 * n) / (h as f64 * m), h as f64 / n)
        }
    };
    let target_width = aspect_ratio * m * post_scale;
    let target_height = n * post_scale;
    let (out_width, out_height) = match target {
        TargetSpec::Dimensions { width, height } => (width, height),
        TargetSpec::Ratio(_) => (target_width.round().max(1.0) as u32, height),
    };
    Ok(OutputPlan { aspect_ratio, post_scale, target_width, target_height, out_width, out_height })
}

/// Quarter turn `(x, y) -> (y, m - x)` taking an `m x n` frame to `n x m`.
fn turn(p: Point2, m: f64) -> Point2 {
    Point2::new(p.y, m - p.x)
}

fn unturn(p: Point2, m: f64) -> Point2 {
    Point2::new(m - p.y, p.x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobMetrics {
    pub solve_ms: f64,
    pub total_ms: f64,
    pub min_jacobian: f64,
    pub max_prescribed_mu: f64,
    pub object_scale: Option<f64>,
    pub chess_scale: Option<f64>,
    pub extremal: bool,
    pub vertices: usize,
    pub faces: usize,
    pub rows: usize,
    pub cols: usize,
    pub relative_residual: f64,
    pub warnings: Vec<String>,
}

/// Solved warp in the source image frame (`y` up).
#[derive(Debug, Clone)]
pub struct WarpSolution {
    pub plan: OutputPlan,
    /// Mesh over the source rectangle.
    pub source_mesh: Mesh,
    /// Image of every source vertex inside the real target rectangle.
    pub positions: Vec<Point2>,
    /// Prescribed (clamped) coefficient per face of `source_mesh`.
    pub prescribed: BeltramiField,
    pub mode: PrescriptionMode,
    /// Regions on `source_mesh`.
    pub regions: RegionModel,
    pub working: WarpField,
    /// Constrained system in the working frame.
    pub system: SparseSystem,
    pub metrics: JobMetrics,
}

/// Solves the warp for a `width x height` source without touching pixels.
pub fn compute_warp(width: u32, height: u32, labels: &LabelSet, job: &RetargetJob) -> Result<WarpSolution, RetargetError> {
    let start = Instant::now();
    let plan = plan_output(width, height, job.target)?;
    let (m, n) = (width as f64, height as f64);
    labels.validate(m, n)?;
    let polygons = labels.polygons_math(n);
    let polylines = labels.polylines_math(n);

    let config = RetargetConfig {
        ratio: plan.aspect_ratio,
        choice: job.choice,
        chessboard: job.chessboard,
        squeeze_axis: SqueezeAxis::Horizontal,
        force_extremal: job.force_extremal,
        beta: job.beta,
    }
    .normalized();
    let vertical = config.squeeze_axis == SqueezeAxis::Vertical;
    let (wm, wn) = if vertical { (n, m) } else { (m, n) };
    let to_work = |pts: Vec<Vec<Point2>>| -> Vec<Vec<Point2>> {
        if vertical {
            pts.into_iter().map(|p| p.into_iter().map(|q| turn(q, m)).collect()).collect()
        } else {
            pts
        }
    };
    let mesh = build_regular_mesh(wm, wn, job.mesh_vertices)?;
    let regions = RegionModel::build(&mesh, &to_work(polygons), &to_work(polylines))?;
    let prescription = prescribe(&mesh, &regions, &config)?;
    let field = prescription.field.clamped(CLAMP_EPSILON);
    let coeffs = coefficients_from_mu(&field)?;
    let constraints = ConstraintSet::from_regions(&mesh, &regions, job.chessboard);
    let target = TargetRect { width: config.ratio * wm, height: wn };
    let solve_start = Instant::now();
    let system = assemble_laplacian(&mesh, &coeffs)?;
    let system = apply_boundary_conditions(system, &mesh, target)?;
    let system = augment_chessboard_constraints(system, &constraints, &mesh)?;
    let mut system = augment_deformation_constraints(system, &constraints, &mesh)?;
    if let PrescriptionMode::Extremal(params) = &prescription.mode {
        // objects take beta percent of the target width
        let scale = params.beta / 100.0 * target.width / params.total_width;
        let kind = [ParamKind::ObjectScale, ParamKind::ChessScale].into_iter().find(|&k| system.param_column(k).is_some());
        if let Some(kind) = kind {
            system.fix_param(kind, scale)?;
        }
    }
    let working = solve(&system, &mesh)?;
    let solve_ms = solve_start.elapsed().as_secs_f64() * 1e3;

    // back to the source frame, then the uniform post-scale
    let scale = plan.post_scale * if vertical { plan.aspect_ratio } else { 1.0 };
    let (source_mesh, positions): (Mesh, Vec<Point2>) = if vertical {
        let src = mesh.mapped(m, n, |p| unturn(p, m))?;
        let pos = working.positions.iter().map(|&p| unturn(p, target.height) * scale).collect();
        (src, pos)
    } else {
        (mesh.clone(), working.positions.iter().map(|&p| p * scale).collect())
    };
    // face indices are shared between frames; only the stripe axes swap
    let source_regions = if vertical {
        RegionModel { stripe_h: regions.stripe_v.clone(), stripe_v: regions.stripe_h.clone(), ..regions }
    } else {
        regions
    };
    let jac = jacobian_of_map(&source_mesh, &positions)?;
    let metrics = JobMetrics {
        solve_ms,
        total_ms: start.elapsed().as_secs_f64() * 1e3,
        min_jacobian: jac.iter().copied().fold(f64::INFINITY, f64::min),
        max_prescribed_mu: field.max_modulus(),
        object_scale: working.object_scale().map(|r| r * scale),
        chess_scale: working.chess_scale().map(|r| r * scale),
        extremal: matches!(prescription.mode, PrescriptionMode::Extremal(_)),
        vertices: mesh.vertex_count(),
        faces: mesh.face_count(),
        rows: working.report.rows,
        cols: working.report.cols,
        relative_residual: working.report.relative_residual,
        warnings: working.report.warnings.clone(),
    };
    Ok(WarpSolution {
        plan,
        source_mesh,
        positions,
        prescribed: field,
        mode: prescription.mode,
        regions: source_regions,
        working,
        system,
        metrics,
    })
}

#[derive(Debug, Clone)]
pub struct RetargetOutcome {
    pub image: RasterImage,
    pub solution: WarpSolution,
}

/// Retargets `src` according to `job`.
pub fn retarget(src: &RasterImage, labels: &LabelSet, job: &RetargetJob) -> Result<RetargetOutcome, RetargetError> {
    let start = Instant::now();
    let mut solution = compute_warp(src.width(), src.height(), labels, job)?;
    let plan = solution.plan;
    let map = build_inverse_map(&solution.source_mesh, &solution.positions)?;
    let image = resample(src, &map, plan.target_width, plan.target_height, plan.out_width, plan.out_height)?;
    solution.metrics.total_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(RetargetOutcome { image, solution })
}
