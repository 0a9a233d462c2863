//! User label documents.
//!
//! ```json
//! {"objects": [{"polygon": [[x, y], ...]}], "lines": [{"polyline": [[x, y], ...]}]}
//! ```
//!
//! Coordinates are source-image pixels with the origin at the top-left corner
//! and `y` growing downward.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabelError, MeshError};
use crate::geometry::Point2;
use crate::mesh::validate_polygon;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectLabel {
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineLabel {
    pub polyline: Vec<[f64; 2]>,
}

/// Object polygons and line polylines in image coordinates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelSet {
    #[serde(default)]
    pub objects: Vec<ObjectLabel>,
    #[serde(default)]
    pub lines: Vec<LineLabel>,
}

fn to_points(raw: &[[f64; 2]]) -> Vec<Point2> {
    raw.iter().map(|&[x, y]| Point2::new(x, y)).collect()
}

fn check_range(points: &[[f64; 2]], width: f64, height: f64) -> Result<(), MeshError> {
    for (index, &[x, y]) in points.iter().enumerate() {
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || x > width || y < 0.0 || y > height {
            return Err(MeshError::PointOutOfRange { index, x, y });
        }
    }
    Ok(())
}

impl LabelSet {
    pub fn is_empty(&self) -> bool {
        self.objects.is_empty() && self.lines.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self, LabelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("label sets always serialize")
    }

    /// Checks every shape against an image of the given size.
    pub fn validate(&self, width: f64, height: f64) -> Result<(), LabelError> {
        let eps = 1e-12 * width.max(height).powi(2);
        for (shape, obj) in self.objects.iter().enumerate() {
            let wrap = |source| LabelError::Invalid { kind: "object", shape, source };
            check_range(&obj.polygon, width, height).map_err(wrap)?;
            validate_polygon(&to_points(&obj.polygon), eps).map_err(wrap)?;
        }
        for (shape, line) in self.lines.iter().enumerate() {
            let wrap = |source| LabelError::Invalid { kind: "line", shape, source };
            if line.polyline.len() < 2 {
                return Err(wrap(MeshError::PolylineTooShort(line.polyline.len())));
            }
            check_range(&line.polyline, width, height).map_err(wrap)?;
        }
        Ok(())
    }

    /// Object polygons flipped into the `y`-up frame of an image of `height` rows.
    pub fn polygons_math(&self, height: f64) -> Vec<Vec<Point2>> {
        self.objects.iter().map(|o| flip(&to_points(&o.polygon), height)).collect()
    }

    pub fn polylines_math(&self, height: f64) -> Vec<Vec<Point2>> {
        self.lines.iter().map(|l| flip(&to_points(&l.polyline), height)).collect()
    }
}

fn flip(points: &[Point2], height: f64) -> Vec<Point2> {
    points.iter().map(|p| Point2::new(p.x, height - p.y)).collect()
}

/// Reads and validates a label document for an image of the given size.
pub fn parse_labels(path: &Path, width: f64, height: f64) -> Result<LabelSet, LabelError> {
    let text = std::fs::read_to_string(path)?;
    let labels = LabelSet::from_json(&text)?;
    labels.validate(width, height)?;
    Ok(labels)
}
