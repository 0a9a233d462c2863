//! Prescribed Beltrami fields for the three distortion-distribution choices
//! and the extremal regime.
//!
//! All prescriptions are real-valued and piecewise constant. Object and line
//! faces always receive `mu = 0`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::beltrami::BeltramiField;
use crate::error::PrescribeError;
use crate::geometry::interval_union_length;
use crate::mesh::{face_set_bbox, Mesh, RegionModel};

/// Default share of the target width, in percent, that objects occupy in extremal mode.
pub const DEFAULT_BETA: f64 = 50.0;

/// How the unavoidable distortion is spread over the background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    /// Same coefficient everywhere outside the objects.
    #[default]
    Even,
    /// Stronger squeeze in the horizontal stripes beside the objects.
    Weak,
    /// Stronger squeeze everywhere outside the vertical stripes.
    Strong,
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Choice::Even => "even",
            Choice::Weak => "weak",
            Choice::Strong => "strong",
        })
    }
}

impl FromStr for Choice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "even" => Ok(Choice::Even),
            "weak" => Ok(Choice::Weak),
            "strong" => Ok(Choice::Strong),
            other => Err(format!("unknown choice '{other}' (expected even, weak or strong)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SqueezeAxis {
    #[default]
    Horizontal,
    Vertical,
}

/// Retargeting request in the working frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetargetConfig {
    /// Target width over source width, height kept.
    pub ratio: f64,
    pub choice: Choice,
    pub chessboard: bool,
    pub squeeze_axis: SqueezeAxis,
    /// Force the extremal prescription even when the objects would fit.
    pub force_extremal: bool,
    /// Percent of the target width occupied by objects in extremal mode.
    pub beta: f64,
}

impl Default for RetargetConfig {
    fn default() -> Self {
        Self {
            ratio: 1.0,
            choice: Choice::Even,
            chessboard: false,
            squeeze_axis: SqueezeAxis::Horizontal,
            force_extremal: false,
            beta: DEFAULT_BETA,
        }
    }
}

impl RetargetConfig {
    /// Widening requests become squeezes of the image turned by a quarter turn.
    pub fn normalized(&self) -> Self {
        if self.ratio > 1.0 {
            Self { ratio: 1.0 / self.ratio, squeeze_axis: SqueezeAxis::Vertical, ..*self }
        } else {
            *self
        }
    }
}

/// Scaled widths used when the objects cannot keep their size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalParams {
    pub beta: f64,
    pub total_width: f64,
    pub total_height: f64,
    pub w_prime: f64,
    pub h: f64,
}

/// `(w - 1) / (w + 1)`, the coefficient of the squeeze `(x, y) -> (w x, y)`.
pub fn squeeze_mu(w: f64) -> f64 {
    (w - 1.0) / (w + 1.0)
}

/// `(a - b) / (a + b)`, the coefficient of `(x, y) -> (a x, b y)`.
pub fn scaling_mu(a: f64, b: f64) -> f64 {
    (a - b) / (a + b)
}

/// Total width and height of the objects, merging overlapping bounding-box extents.
pub fn object_extents(mesh: &Mesh, regions: &RegionModel) -> (f64, f64) {
    let boxes: Vec<_> = regions
        .object_faces
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| face_set_bbox(mesh, s))
        .collect();
    let xs: Vec<_> = boxes.iter().map(|b| (b.min.x, b.max.x)).collect();
    let ys: Vec<_> = boxes.iter().map(|b| (b.min.y, b.max.y)).collect();
    (interval_union_length(&xs), interval_union_length(&ys))
}

fn check_ratio(w: f64) -> Result<(), PrescribeError> {
    if !(w > 0.0 && w <= 1.0 && w.is_finite()) {
        return Err(PrescribeError::InvalidRatio(w));
    }
    Ok(())
}

/// Zeroes objects and lines on top of a background assignment.
fn finish(regions: &RegionModel, mut values: Vec<f64>) -> BeltramiField {
    for &f in regions.object_faces.iter().chain(&regions.line_faces).flatten() {
        values[f] = 0.0;
    }
    BeltramiField(values.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
}

/// Even: `0` on objects, `(w-1)/(w+1)` elsewhere.
pub fn prescribe_even(mesh: &Mesh, regions: &RegionModel, w: f64) -> Result<BeltramiField, PrescribeError> {
    check_ratio(w)?;
    Ok(finish(regions, vec![squeeze_mu(w); mesh.face_count()]))
}

/// `w' = w - W/m`, erroring when the objects do not fit in the target width.
pub fn reduced_ratio(mesh: &Mesh, regions: &RegionModel, w: f64) -> Result<f64, PrescribeError> {
    let (total_width, _) = object_extents(mesh, regions);
    let w_prime = w - total_width / mesh.width();
    if w_prime <= 0.0 {
        return Err(PrescribeError::NeedsExtremal { w_prime, suggested_beta: DEFAULT_BETA });
    }
    Ok(w_prime)
}

/// Weak: `0` where the stripes cross, `(w'-1)/(w'+1)` on the rest of the horizontal
/// stripes, `(w-1)/(w+1)` outside them.
pub fn prescribe_weak(mesh: &Mesh, regions: &RegionModel, w: f64) -> Result<BeltramiField, PrescribeError> {
    check_ratio(w)?;
    if w == 1.0 {
        return Ok(BeltramiField::zeros(mesh.face_count()));
    }
    let w_prime = reduced_ratio(mesh, regions, w)?;
    Ok(weak_field(mesh, regions, squeeze_mu(w_prime), squeeze_mu(w)))
}

fn weak_field(mesh: &Mesh, regions: &RegionModel, stripe: f64, outside: f64) -> BeltramiField {
    let values = (0..mesh.face_count())
        .map(|f| match (regions.stripe_h.contains(&f), regions.stripe_v.contains(&f)) {
            (true, true) => 0.0,
            (true, false) => stripe,
            (false, _) => outside,
        })
        .collect();
    finish(regions, values)
}

/// Strong: `0` on the vertical stripes, `(w'-1)/(w'+1)` outside them.
pub fn prescribe_strong(mesh: &Mesh, regions: &RegionModel, w: f64) -> Result<BeltramiField, PrescribeError> {
    check_ratio(w)?;
    if w == 1.0 {
        return Ok(BeltramiField::zeros(mesh.face_count()));
    }
    let mu = squeeze_mu(reduced_ratio(mesh, regions, w)?);
    let values = (0..mesh.face_count())
        .map(|f| if regions.stripe_v.contains(&f) { 0.0 } else { mu })
        .collect();
    Ok(finish(regions, values))
}

/// Extremal-regime parameters: `w' = w (1 - beta/100) / 200` and
/// `h = (n - H w') / (n - H)`.
pub fn extremal_params(
    w: f64,
    beta: f64,
    total_width: f64,
    total_height: f64,
    n: f64,
) -> Result<ExtremalParams, PrescribeError> {
    check_ratio(w)?;
    if !(beta > 0.0 && beta < 100.0) {
        return Err(PrescribeError::InvalidBeta(beta));
    }
    if total_height >= n {
        return Err(PrescribeError::ObjectsTooTall { total_height, height: n });
    }
    let w_prime = w * (1.0 - beta / 100.0) / 200.0;
    let h = (n - total_height * w_prime) / (n - total_height);
    Ok(ExtremalParams { beta, total_width, total_height, w_prime, h })
}

/// Extremal field: `(w'-h)/(w'+h)` on the horizontal stripes outside the vertical
/// ones, `(w-h)/(w+h)` outside the horizontal stripes.
pub fn prescribe_extremal(mesh: &Mesh, regions: &RegionModel, w: f64, params: &ExtremalParams) -> BeltramiField {
    weak_field(mesh, regions, scaling_mu(params.w_prime, params.h), scaling_mu(w, params.h))
}

/// Which formula produced a prescription.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrescriptionMode {
    Identity,
    Standard { w_prime: Option<f64> },
    Extremal(ExtremalParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prescription {
    pub field: BeltramiField,
    pub mode: PrescriptionMode,
}

/// Dispatches on the configured choice, switching to the extremal field when the
/// objects are wider than the target (`w m < W`) or when forced.
pub fn prescribe(mesh: &Mesh, regions: &RegionModel, config: &RetargetConfig) -> Result<Prescription, PrescribeError> {
    let w = config.ratio;
    check_ratio(w)?;
    if w == 1.0 {
        return Ok(Prescription { field: BeltramiField::zeros(mesh.face_count()), mode: PrescriptionMode::Identity });
    }
    if config.choice == Choice::Even {
        return Ok(Prescription {
            field: prescribe_even(mesh, regions, w)?,
            mode: PrescriptionMode::Standard { w_prime: None },
        });
    }
    let (total_width, total_height) = object_extents(mesh, regions);
    let extremal = config.force_extremal || w * mesh.width() < total_width;
    if extremal && regions.has_objects() {
        let params = extremal_params(w, config.beta, total_width, total_height, mesh.height())?;
        log::debug!("extremal prescription: w' = {}, h = {}", params.w_prime, params.h);
        return Ok(Prescription {
            field: prescribe_extremal(mesh, regions, w, &params),
            mode: PrescriptionMode::Extremal(params),
        });
    }
    let field = match config.choice {
        Choice::Weak => prescribe_weak(mesh, regions, w)?,
        _ => prescribe_strong(mesh, regions, w)?,
    };
    let w_prime = w - total_width / mesh.width();
    Ok(Prescription { field, mode: PrescriptionMode::Standard { w_prime: Some(w_prime) } })
}
