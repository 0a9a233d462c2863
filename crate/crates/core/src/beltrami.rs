//! Beltrami calculus on piecewise-linear maps.
//!
//! For a map `f = u + iv` that is affine on each face,
//!
//! ```text
//! mu = ((u_x - v_y) + i(v_x + u_y)) / ((u_x + v_y) + i(v_x - u_y))
//! ```
//!
//! and the map is locally orientation preserving exactly where `|mu| < 1`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::BeltramiError;
use crate::geometry::Point2;
use crate::mesh::Mesh;

/// Default margin kept between prescribed coefficients and the unit circle.
pub const CLAMP_EPSILON: f64 = 1e-3;

/// Per-face gradient weights of the hat functions.
///
/// For a face `[i, j, k]`, `grad_x[0] = (h_j - h_k) / (2 Area)` and
/// `grad_y[0] = (g_k - g_j) / (2 Area)`, cyclically for the other corners, so
/// that the `x`-derivative of any nodal field `s` on the face is
/// `grad_x . [s_i, s_j, s_k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGradients {
    pub area: f64,
    pub grad_x: [f64; 3],
    pub grad_y: [f64; 3],
}

impl FaceGradients {
    pub fn new(tri: [Point2; 3]) -> Option<Self> {
        let [pi, pj, pk] = tri;
        let twice_area = (pj - pi).cross(pk - pi);
        if !(twice_area > 0.0) {
            return None;
        }
        let inv = 1.0 / twice_area;
        Some(Self {
            area: 0.5 * twice_area,
            grad_x: [(pj.y - pk.y) * inv, (pk.y - pi.y) * inv, (pi.y - pj.y) * inv],
            grad_y: [(pk.x - pj.x) * inv, (pi.x - pk.x) * inv, (pj.x - pi.x) * inv],
        })
    }

    /// `(d/dx, d/dy)` of the nodal values on this face.
    pub fn gradient(&self, values: [f64; 3]) -> (f64, f64) {
        let dx = self.grad_x.iter().zip(values).map(|(g, s)| g * s).sum();
        let dy = self.grad_y.iter().zip(values).map(|(g, s)| g * s).sum();
        (dx, dy)
    }
}

/// Gradient weights for every face of the mesh.
pub fn face_gradients(mesh: &Mesh) -> Result<Vec<FaceGradients>, BeltramiError> {
    (0..mesh.face_count())
        .map(|f| FaceGradients::new(mesh.face_points(f)).ok_or(BeltramiError::DegenerateSourceFace(f)))
        .collect()
}

/// Affine part of a simplicial map on one face:
/// `u = a x + b y + r`, `v = c x + d y + s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceLinearPart {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub r: f64,
    pub s: f64,
}

impl FaceLinearPart {
    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// `D1 f = (u_x - v_y) + i (v_x + u_y)`.
    pub fn d1(&self) -> Complex64 {
        Complex64::new(self.a - self.d, self.c + self.b)
    }

    /// `D2 f = (u_x + v_y) + i (v_x - u_y)`.
    pub fn d2(&self) -> Complex64 {
        Complex64::new(self.a + self.d, self.c - self.b)
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::new(self.a * p.x + self.b * p.y + self.r, self.c * p.x + self.d * p.y + self.s)
    }
}

fn check_len(mesh: &Mesh, warped: &[Point2]) -> Result<(), BeltramiError> {
    if warped.len() != mesh.vertex_count() {
        return Err(BeltramiError::LengthMismatch { expected: mesh.vertex_count(), actual: warped.len() });
    }
    Ok(())
}

/// Exact affine pieces of the simplicial map sending each source vertex to `warped[i]`.
pub fn face_linear_parts(mesh: &Mesh, warped: &[Point2]) -> Result<Vec<FaceLinearPart>, BeltramiError> {
    check_len(mesh, warped)?;
    let grads = face_gradients(mesh)?;
    Ok(mesh
        .faces()
        .iter()
        .zip(&grads)
        .map(|(&[i, j, k], g)| {
            let (a, b) = g.gradient([warped[i].x, warped[j].x, warped[k].x]);
            let (c, d) = g.gradient([warped[i].y, warped[j].y, warped[k].y]);
            let src = mesh.vertices()[i];
            FaceLinearPart {
                a,
                b,
                c,
                d,
                r: warped[i].x - a * src.x - b * src.y,
                s: warped[i].y - c * src.x - d * src.y,
            }
        })
        .collect())
}

/// Beltrami coefficient of one affine piece, or `None` where `D2 f` vanishes.
pub fn mu_of_linear_part(part: &FaceLinearPart) -> Option<Complex64> {
    let den = part.d2();
    if den.norm_sqr() == 0.0 {
        None
    } else {
        Some(part.d1() / den)
    }
}

/// One complex coefficient per face.
#[derive(Debug, Clone, PartialEq)]
pub struct BeltramiField(pub Vec<Complex64>);

impl BeltramiField {
    pub fn zeros(faces: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); faces])
    }

    pub fn constant(faces: usize, value: Complex64) -> Self {
        Self(vec![value; faces])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn max_modulus(&self) -> f64 {
        self.0.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    /// Radially pulls every coefficient with `|mu| >= 1 - eps` back to `1 - eps`.
    pub fn clamped(&self, eps: f64) -> Self {
        let limit = 1.0 - eps;
        Self(
            self.0
                .iter()
                .map(|&m| {
                    let r = m.norm();
                    if r >= limit {
                        m * (limit / r)
                    } else {
                        m
                    }
                })
                .collect(),
        )
    }
}

/// Measured Beltrami coefficient of the simplicial map, per face.
pub fn beltrami_of_map(mesh: &Mesh, warped: &[Point2]) -> Result<BeltramiField, BeltramiError> {
    let parts = face_linear_parts(mesh, warped)?;
    parts
        .iter()
        .enumerate()
        .map(|(f, p)| mu_of_linear_part(p).ok_or(BeltramiError::DegenerateMap(f)))
        .collect::<Result<Vec<_>, _>>()
        .map(BeltramiField)
}

/// Per-face Jacobian determinant `ad - bc` of the simplicial map.
pub fn jacobian_of_map(mesh: &Mesh, warped: &[Point2]) -> Result<Vec<f64>, BeltramiError> {
    Ok(face_linear_parts(mesh, warped)?.iter().map(FaceLinearPart::determinant).collect())
}

/// Jacobian recovered from the conformal derivative and the Beltrami coefficient:
/// `|D2 f|^2 (1 - |mu|^2) / 4`.
pub fn jacobian_from_beltrami(part: &FaceLinearPart) -> f64 {
    let d2 = part.d2().norm_sqr();
    match mu_of_linear_part(part) {
        Some(mu) => d2 * (1.0 - mu.norm_sqr()) / 4.0,
        None => 0.0,
    }
}

/// Symmetric elliptic coefficient matrix `[[alpha1, alpha2], [alpha2, alpha3]]` per face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Coefficients {
    pub const IDENTITY: Coefficients = Coefficients { alpha1: 1.0, alpha2: 0.0, alpha3: 1.0 };

    pub fn from_mu(mu: Complex64) -> Option<Self> {
        let (rho, tau) = (mu.re, mu.im);
        let den = 1.0 - rho * rho - tau * tau;
        if !(den > 0.0) {
            return None;
        }
        Some(Self {
            alpha1: ((rho - 1.0).powi(2) + tau * tau) / den,
            alpha2: -2.0 * tau / den,
            alpha3: ((rho + 1.0).powi(2) + tau * tau) / den,
        })
    }

    pub fn determinant(&self) -> f64 {
        self.alpha1 * self.alpha3 - self.alpha2 * self.alpha2
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.alpha1 * x + self.alpha2 * y, self.alpha2 * x + self.alpha3 * y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField(pub Vec<Coefficients>);

impl CoefficientField {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Elliptic coefficients of the generalized Laplacian for a Beltrami field.
///
/// Fails on the first face with `|mu| >= 1`.
pub fn coefficients_from_mu(mu: &BeltramiField) -> Result<CoefficientField, BeltramiError> {
    mu.0.par_iter()
        .enumerate()
        .map(|(face, &m)| Coefficients::from_mu(m).ok_or(BeltramiError::NotElliptic { face, modulus: m.norm() }))
        .collect::<Result<Vec<_>, _>>()
        .map(CoefficientField)
}

/// Local stretch directions and factors induced by a Beltrami coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionInfo {
    /// Direction of maximal magnification in radians; `None` for a conformal face.
    pub magnification_angle: Option<f64>,
    pub shrink_angle: Option<f64>,
    pub magnification: f64,
    pub shrink: f64,
}

pub fn distortion_of(mu: Complex64) -> DistortionInfo {
    let r = mu.norm();
    let (magnification_angle, shrink_angle) = if r == 0.0 {
        (None, None)
    } else {
        let arg = mu.arg();
        (Some(arg / 2.0), Some((arg - PI) / 2.0))
    };
    DistortionInfo { magnification_angle, shrink_angle, magnification: 1.0 + r, shrink: 1.0 - r }
}

pub fn distortion_info(mu: &BeltramiField) -> Vec<DistortionInfo> {
    mu.0.iter().copied().map(distortion_of).collect()
}

/// Discrete divergence of a face-based vector field `(x1, x2)` at every vertex:
/// `sum_T Area(T) (A_T^i x1(T) + B_T^i x2(T))`.
pub fn divergence(mesh: &Mesh, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>, BeltramiError> {
    let grads = face_gradients(mesh)?;
    let mut out = vec![0.0; mesh.vertex_count()];
    for ((tri, g), (&p, &q)) in mesh.faces().iter().zip(&grads).zip(x1.iter().zip(x2)) {
        for corner in 0..3 {
            out[tri[corner]] += g.area * (g.grad_x[corner] * p + g.grad_y[corner] * q);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid_mesh, GridDims, Mesh};
    use approx::assert_relative_eq;

    fn grid() -> Mesh {
        build_grid_mesh(6.0, 4.0, GridDims { cols: 3, rows: 2 }).unwrap()
    }

    fn warp(mesh: &Mesh, f: impl Fn(Point2) -> Point2) -> Vec<Point2> {
        mesh.vertices().iter().map(|&p| f(p)).collect()
    }

    #[test]
    fn identity_parts() {
        let mesh = grid();
        for p in face_linear_parts(&mesh, mesh.vertices()).unwrap() {
            assert_relative_eq!(p.a, 1.0, epsilon = 1e-14);
            assert_relative_eq!(p.b, 0.0, epsilon = 1e-14);
            assert_relative_eq!(p.c, 0.0, epsilon = 1e-14);
            assert_relative_eq!(p.d, 1.0, epsilon = 1e-14);
        }
        let mu = beltrami_of_map(&mesh, mesh.vertices()).unwrap();
        assert!(mu.max_modulus() < 1e-14);
        for j in jacobian_of_map(&mesh, mesh.vertices()).unwrap() {
            assert_relative_eq!(j, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn horizontal_doubling() {
        let mesh = grid();
        let w = warp(&mesh, |p| Point2::new(2.0 * p.x, p.y));
        for p in face_linear_parts(&mesh, &w).unwrap() {
            assert_relative_eq!(p.a, 2.0, epsilon = 1e-14);
            assert_relative_eq!(p.d, 1.0, epsilon = 1e-14);
            assert_relative_eq!(p.b.abs() + p.c.abs(), 0.0, epsilon = 1e-14);
        }
        for m in beltrami_of_map(&mesh, &w).unwrap().values() {
            assert_relative_eq!(m.re, 1.0 / 3.0, epsilon = 1e-14);
            assert_relative_eq!(m.im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn quarter_turn_of_unit_triangle() {
        // (x, y) -> (-y, x): edges (1,0)->(0,1), (0,1)->(-1,0), so [[a,b],[c,d]] = [[0,-1],[1,0]]
        let mesh = Mesh::new(
            1.0,
            1.0,
            vec![Point2::new(0., 0.), Point2::new(1., 0.), Point2::new(0., 1.)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let w = [Point2::new(0., 0.), Point2::new(0., 1.), Point2::new(-1., 0.)];
        let p = face_linear_parts(&mesh, &w).unwrap()[0];
        assert_eq!((p.a, p.b, p.c, p.d), (0.0, -1.0, 1.0, 0.0));
    }

    #[test]
    fn three_quarter_squeeze_jacobian() {
        let mesh = grid();
        let w = warp(&mesh, |p| Point2::new(0.75 * p.x, p.y));
        for j in jacobian_of_map(&mesh, &w).unwrap() {
            assert_relative_eq!(j, 0.75, epsilon = 1e-14);
        }
    }

    #[test]
    fn collapsed_image_is_degenerate() {
        let mesh = grid();
        let w = vec![Point2::new(1.0, 1.0); mesh.vertex_count()];
        assert_eq!(beltrami_of_map(&mesh, &w), Err(BeltramiError::DegenerateMap(0)));
        assert!(matches!(
            beltrami_of_map(&mesh, &w[1..]),
            Err(BeltramiError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn coefficient_values() {
        let id = Coefficients::from_mu(Complex64::new(0.0, 0.0)).unwrap();
        assert_eq!(id, Coefficients::IDENTITY);
        let c = Coefficients::from_mu(Complex64::new(-1.0 / 7.0, 0.0)).unwrap();
        // (rho - 1)^2 = 64/49, (rho + 1)^2 = 36/49, 1 - rho^2 = 48/49
        assert_relative_eq!(c.alpha1, 4.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(c.alpha2, 0.0);
        assert_relative_eq!(c.alpha3, 0.75, epsilon = 1e-15);
        for rho in [-0.9, -0.3, 0.0, 0.5, 0.99] {
            let c = Coefficients::from_mu(Complex64::new(rho, 0.0)).unwrap();
            assert_relative_eq!(c.alpha1 * c.alpha3, 1.0, epsilon = 1e-10);
        }
        let field = BeltramiField(vec![Complex64::new(0.2, 0.1), Complex64::new(0.6, 0.8)]);
        assert_eq!(
            coefficients_from_mu(&field),
            Err(BeltramiError::NotElliptic { face: 1, modulus: 1.0 })
        );
    }

    #[test]
    fn distortion_values() {
        let d = distortion_of(Complex64::new(0.0, 0.0));
        assert_eq!((d.magnification, d.shrink, d.magnification_angle), (1.0, 1.0, None));
        let d = distortion_of(Complex64::new(0.5, 0.0));
        assert_eq!((d.magnification, d.shrink), (1.5, 0.5));
        assert_eq!(d.magnification_angle, Some(0.0));
        assert_relative_eq!(d.shrink_angle.unwrap(), -PI / 2.0);
        let d = distortion_of(Complex64::new(0.0, 0.3));
        assert_relative_eq!(d.magnification_angle.unwrap(), PI / 4.0);
    }

    #[test]
    fn clamp_keeps_direction() {
        let f = BeltramiField(vec![Complex64::new(-2.0, 0.0), Complex64::new(0.0, 0.5), Complex64::new(0.6, 0.8)]);
        let c = f.clamped(CLAMP_EPSILON);
        assert_relative_eq!(c.0[0].re, -0.999);
        assert_eq!(c.0[1], f.0[1]);
        assert_relative_eq!(c.0[2].norm(), 0.999, epsilon = 1e-15);
        assert_relative_eq!(c.0[2].arg(), f.0[2].arg(), epsilon = 1e-15);
    }
}
