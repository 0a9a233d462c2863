//! Planar primitives shared by the mesh, solver and resampler.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A point (or vector) in the plane, in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Twice the signed area of triangle `abc`; positive when counterclockwise.
#[inline]
pub fn orient2d(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

pub fn triangle_signed_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * orient2d(a, b, c)
}

/// Signed area of a closed polygon (shoelace).
pub fn polygon_signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].cross(poly[(i + 1) % n])).sum::<f64>() * 0.5
}

/// Even-odd point-in-polygon test. Points exactly on an edge may land on either side.
pub fn point_in_polygon(p: Point2, poly: &[Point2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn on_segment(a: Point2, b: Point2, p: Point2, eps: f64) -> bool {
    p.x >= a.x.min(b.x) - eps
        && p.x <= a.x.max(b.x) + eps
        && p.y >= a.y.min(b.y) - eps
        && p.y <= a.y.max(b.y) + eps
}

fn sign(v: f64, eps: f64) -> i8 {
    if v > eps {
        1
    } else if v < -eps {
        -1
    } else {
        0
    }
}

/// Closed segment intersection test; touching endpoints and collinear overlaps count.
///
/// `eps` is an absolute tolerance on the orientation determinant.
pub fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2, eps: f64) -> bool {
    let d1 = sign(orient2d(q1, q2, p1), eps);
    let d2 = sign(orient2d(q1, q2, p2), eps);
    let d3 = sign(orient2d(p1, p2, q1), eps);
    let d4 = sign(orient2d(p1, p2, q2), eps);
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    let tol = eps.sqrt();
    (d1 == 0 && on_segment(q1, q2, p1, tol))
        || (d2 == 0 && on_segment(q1, q2, p2, tol))
        || (d3 == 0 && on_segment(p1, p2, q1, tol))
        || (d4 == 0 && on_segment(p1, p2, q2, tol))
}

/// Does the closed CCW triangle `tri` contain `p`, up to `eps` on the orientation tests?
pub fn point_in_triangle(p: Point2, tri: [Point2; 3], eps: f64) -> bool {
    orient2d(tri[0], tri[1], p) >= -eps
        && orient2d(tri[1], tri[2], p) >= -eps
        && orient2d(tri[2], tri[0], p) >= -eps
}

/// Does the closed segment `ab` meet the closed CCW triangle `tri`?
pub fn segment_meets_triangle(a: Point2, b: Point2, tri: [Point2; 3], eps: f64) -> bool {
    if point_in_triangle(a, tri, eps) || point_in_triangle(b, tri, eps) {
        return true;
    }
    (0..3).any(|k| segments_intersect(a, b, tri[k], tri[(k + 1) % 3], eps))
}

/// Returns the first pair of non-adjacent intersecting edges, if the closed polygon is not simple.
pub fn find_self_intersection(poly: &[Point2], eps: f64) -> Option<(usize, usize)> {
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in (i + 1)..n {
            // adjacent edges share an endpoint and are allowed to touch there
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_intersect(a, b, c, d, eps) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point2,
    pub max: Point2,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point2::new(f64::INFINITY, f64::INFINITY),
            max: Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points(points: impl IntoIterator<Item = Point2>) -> Self {
        let mut bb = Self::empty();
        for p in points {
            bb.grow(p);
        }
        bb
    }

    pub fn grow(&mut self, p: Point2) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

/// Total length covered by a union of closed intervals.
pub fn interval_union_length(intervals: &[(f64, f64)]) -> f64 {
    let mut sorted: Vec<(f64, f64)> = intervals.iter().copied().filter(|(a, b)| b > a).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for (lo, hi) in sorted {
        match current {
            Some((clo, chi)) if lo <= chi => current = Some((clo, chi.max(hi))),
            Some((clo, chi)) => {
                total += chi - clo;
                current = Some((lo, hi));
            }
            None => current = Some((lo, hi)),
        }
    }
    if let Some((lo, hi)) = current {
        total += hi - lo;
    }
    total
}
