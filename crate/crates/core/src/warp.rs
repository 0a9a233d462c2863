//! Raster resampling through a piecewise-affine map.
//!
//! Every target pixel center is located in a warped face, pulled back to the
//! source through that face's inverse affine map and sampled bilinearly with
//! edge clamping. Map coordinates are `y`-up; rasters are `y`-down.

use std::path::Path;

use image::{DynamicImage, ImageBuffer};
use rayon::prelude::*;

use crate::error::{RetargetError, WarpError};
use crate::geometry::{Aabb, Point2};
use crate::mesh::Mesh;

/// 8-bit raster with 1 to 4 interleaved channels, row-major from the top row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self, WarpError> {
        if !(1..=4).contains(&channels) {
            return Err(WarpError::UnsupportedChannels(channels));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected || width == 0 || height == 0 {
            return Err(WarpError::BadRaster { width, height, channels, expected, actual: data.len() });
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: u32, height: u32, pixel: &[u8]) -> Result<Self, WarpError> {
        let data = pixel.iter().copied().cycle().take(width as usize * height as usize * pixel.len()).collect();
        Self::new(width, height, pixel.len() as u8, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    /// Converts any decoded image; 16-bit and float samples are reduced to 8 bits.
    pub fn from_dynamic(img: &DynamicImage) -> Self {
        let (width, height) = (img.width(), img.height());
        let (channels, data) = match img {
            DynamicImage::ImageLuma8(b) => (1, b.as_raw().clone()),
            DynamicImage::ImageLumaA8(b) => (2, b.as_raw().clone()),
            DynamicImage::ImageRgb8(b) => (3, b.as_raw().clone()),
            DynamicImage::ImageRgba8(b) => (4, b.as_raw().clone()),
            other if other.color().has_alpha() => (4, other.to_rgba8().into_raw()),
            other if other.color().channel_count() == 1 => (1, other.to_luma8().into_raw()),
            other => (3, other.to_rgb8().into_raw()),
        };
        Self { width, height, channels, data }
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let (w, h, d) = (self.width, self.height, self.data.clone());
        let buf = "sample count checked at construction";
        match self.channels {
            1 => DynamicImage::ImageLuma8(ImageBuffer::from_raw(w, h, d).expect(buf)),
            2 => DynamicImage::ImageLumaA8(ImageBuffer::from_raw(w, h, d).expect(buf)),
            3 => DynamicImage::ImageRgb8(ImageBuffer::from_raw(w, h, d).expect(buf)),
            _ => DynamicImage::ImageRgba8(ImageBuffer::from_raw(w, h, d).expect(buf)),
        }
    }

    pub fn load(path: &Path) -> Result<Self, RetargetError> {
        Ok(Self::from_dynamic(&image::open(path)?))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, RetargetError> {
        Ok(Self::from_dynamic(&image::load_from_memory(bytes)?))
    }

    /// Format is chosen from the file extension.
    pub fn save(&self, path: &Path) -> Result<(), RetargetError> {
        let img = self.to_dynamic();
        let is_jpeg = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("jpg") || e.eq_ignore_ascii_case("jpeg"));
        // jpeg has no alpha channel
        if is_jpeg && self.channels % 2 == 0 {
            DynamicImage::ImageRgb8(img.to_rgb8()).save(path)?;
        } else {
            img.save(path)?;
        }
        Ok(())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, RetargetError> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_dynamic().write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at `i + 0.5`),
    /// clamped to the raster.
    fn sample(&self, px: f64, py: f64, out: &mut [f64]) {
        let fx = (px - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (py - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (fx.floor() as u32, fy.floor() as u32);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let (p00, p10, p01, p11) = (self.pixel(x0, y0), self.pixel(x1, y0), self.pixel(x0, y1), self.pixel(x1, y1));
        for c in 0..self.channels as usize {
            let top = p00[c] as f64 * (1.0 - tx) + p10[c] as f64 * tx;
            let bottom = p01[c] as f64 * (1.0 - tx) + p11[c] as f64 * tx;
            out[c] = top * (1.0 - ty) + bottom * ty;
        }
    }
}

/// Affine map `p -> m * p + t` stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2 {
    pub m: [[f64; 2]; 2],
    pub t: [f64; 2],
}

impl Affine2 {
    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::new(
            self.m[0][0] * p.x + self.m[0][1] * p.y + self.t[0],
            self.m[1][0] * p.x + self.m[1][1] * p.y + self.t[1],
        )
    }

    /// The affine map sending triangle `from` onto triangle `to`; `None` when `from` is flat.
    pub fn between(from: [Point2; 3], to: [Point2; 3]) -> Option<Self> {
        let (e1, e2) = (from[1] - from[0], from[2] - from[0]);
        let det = e1.cross(e2);
        if !(det.abs() > 0.0) {
            return None;
        }
        let (f1, f2) = (to[1] - to[0], to[2] - to[0]);
        // m * [e1 e2] = [f1 f2]
        let inv = [[e2.y / det, -e2.x / det], [-e1.y / det, e1.x / det]];
        let m = [
            [f1.x * inv[0][0] + f2.x * inv[1][0], f1.x * inv[0][1] + f2.x * inv[1][1]],
            [f1.y * inv[0][0] + f2.y * inv[1][0], f1.y * inv[0][1] + f2.y * inv[1][1]],
        ];
        let t = [
            to[0].x - m[0][0] * from[0].x - m[0][1] * from[0].y,
            to[0].y - m[1][0] * from[0].x - m[1][1] * from[0].y,
        ];
        Some(Self { m, t })
    }
}

/// Target-to-source map materialized per warped face, with a uniform-grid
/// index over the target rectangle.
#[derive(Debug, Clone)]
pub struct PiecewiseAffineMap {
    target: [Point2; 2],
    warped: Vec<[Point2; 3]>,
    source: Vec<[Point2; 3]>,
    inverses: Vec<Affine2>,
    grid_cols: usize,
    grid_rows: usize,
    cells: Vec<Vec<u32>>,
}

impl PiecewiseAffineMap {
    pub fn face_count(&self) -> usize {
        self.inverses.len()
    }

    pub fn inverse(&self, face: usize) -> &Affine2 {
        &self.inverses[face]
    }

    fn cell_of(&self, p: Point2) -> usize {
        let [lo, hi] = self.target;
        let cx = ((p.x - lo.x) / (hi.x - lo.x) * self.grid_cols as f64).floor();
        let cy = ((p.y - lo.y) / (hi.y - lo.y) * self.grid_rows as f64).floor();
        let cx = (cx.max(0.0) as usize).min(self.grid_cols - 1);
        let cy = (cy.max(0.0) as usize).min(self.grid_rows - 1);
        cy * self.grid_cols + cx
    }

    /// Smallest barycentric coordinate of `p` in warped face `f`.
    fn inside_score(&self, f: usize, p: Point2) -> f64 {
        let [a, b, c] = self.warped[f];
        let area = (b - a).cross(c - a);
        let l0 = (b - p).cross(c - p) / area;
        let l1 = (c - p).cross(a - p) / area;
        let l2 = (a - p).cross(b - p) / area;
        l0.min(l1).min(l2)
    }

    /// Face containing `p`, first in index order on ties; faces that contain
    /// `p` only up to rounding are accepted when nothing contains it exactly.
    pub fn locate(&self, p: Point2) -> Option<usize> {
        let cell = &self.cells[self.cell_of(p)];
        let mut best: Option<(usize, f64)> = None;
        for &f in cell {
            let s = self.inside_score(f as usize, p);
            if s >= 0.0 {
                return Some(f as usize);
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((f as usize, s));
            }
        }
        match best {
            Some((f, s)) if s > -1e-9 => Some(f),
            _ => None,
        }
    }

    /// Source point of the target point `p`.
    pub fn pull_back(&self, p: Point2) -> Result<Point2, WarpError> {
        let f = self.locate(p).ok_or(WarpError::Uncovered { x: p.x, y: p.y })?;
        Ok(self.inverses[f].apply(p))
    }

    /// Forward image of a source point known to lie in face `f`.
    pub fn push_forward(&self, f: usize, p: Point2) -> Point2 {
        let fwd = Affine2::between(self.source[f], self.warped[f]).expect("warped faces are invertible");
        fwd.apply(p)
    }
}

/// Builds the inverse of the warp `mesh.vertices()[i] -> positions[i]`.
pub fn build_inverse_map(mesh: &Mesh, positions: &[Point2]) -> Result<PiecewiseAffineMap, WarpError> {
    let faces = mesh.faces();
    let mut warped = Vec::with_capacity(faces.len());
    let mut source = Vec::with_capacity(faces.len());
    let mut inverses = Vec::with_capacity(faces.len());
    for (f, tri) in faces.iter().enumerate() {
        let dst = tri.map(|i| positions[i]);
        let src = tri.map(|i| mesh.vertices()[i]);
        if !((dst[1] - dst[0]).cross(dst[2] - dst[0]) > 0.0) {
            return Err(WarpError::NonInvertibleFace(f));
        }
        inverses.push(Affine2::between(dst, src).ok_or(WarpError::NonInvertibleFace(f))?);
        warped.push(dst);
        source.push(src);
    }
    let bbox = Aabb::from_points(positions.iter().copied());
    let side = ((faces.len() as f64) / 2.0).sqrt().ceil().max(1.0) as usize;
    let mut map = PiecewiseAffineMap {
        target: [bbox.min, bbox.max],
        warped,
        source,
        inverses,
        grid_cols: side,
        grid_rows: side,
        cells: vec![Vec::new(); side * side],
    };
    for f in 0..faces.len() {
        let b = Aabb::from_points(map.warped[f]);
        let (c0, c1) = (map.cell_of(b.min), map.cell_of(b.max));
        let (x0, y0, x1, y1) = (c0 % side, c0 / side, c1 % side, c1 / side);
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                map.cells[cy * side + cx].push(f as u32);
            }
        }
    }
    Ok(map)
}

/// Resamples `src` onto an `out_width x out_height` raster covering the target
/// rectangle `[0, target_width] x [0, target_height]`.
///
/// `src` covers the source rectangle of the map, one pixel per unit.
pub fn resample(
    src: &RasterImage,
    map: &PiecewiseAffineMap,
    target_width: f64,
    target_height: f64,
    out_width: u32,
    out_height: u32,
) -> Result<RasterImage, WarpError> {
    if out_width == 0 || out_height == 0 || !(target_width > 0.0 && target_height > 0.0) {
        return Err(WarpError::EmptyOutput);
    }
    let c = src.channels as usize;
    let (sx, sy) = (target_width / out_width as f64, target_height / out_height as f64);
    let src_h = src.height as f64;
    let mut data = vec![0u8; out_width as usize * out_height as usize * c];
    data.par_chunks_mut(out_width as usize * c).enumerate().try_for_each(|(row, line)| {
        let mut acc = [0.0; 4];
        let y = target_height - (row as f64 + 0.5) * sy;
        for col in 0..out_width as usize {
            let q = map.pull_back(Point2::new((col as f64 + 0.5) * sx, y))?;
            src.sample(q.x, src_h - q.y, &mut acc);
            for k in 0..c {
                line[col * c + k] = acc[k].round().clamp(0.0, 255.0) as u8;
            }
        }
        Ok::<_, WarpError>(())
    })?;
    RasterImage::new(out_width, out_height, src.channels, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_regular_mesh;

    fn gradient_image(w: u32, h: u32) -> RasterImage {
        let data = (0..h).flat_map(|y| (0..w).flat_map(move |x| [(x * 7 % 256) as u8, (y * 13 % 256) as u8, ((x + y) % 256) as u8])).collect();
        RasterImage::new(w, h, 3, data).unwrap()
    }

    #[test]
    fn raster_validation() {
        assert!(matches!(RasterImage::new(2, 2, 3, vec![0; 11]), Err(WarpError::BadRaster { .. })));
        assert_eq!(RasterImage::new(2, 2, 5, vec![0; 20]), Err(WarpError::UnsupportedChannels(5)));
        let r = RasterImage::filled(3, 2, &[1, 2, 3]).unwrap();
        assert_eq!(r.pixel(2, 1), &[1, 2, 3]);
    }

    #[test]
    fn identity_is_bit_exact() {
        let img = gradient_image(37, 23);
        let mesh = build_regular_mesh(37.0, 23.0, 60).unwrap();
        let map = build_inverse_map(&mesh, mesh.vertices()).unwrap();
        for f in 0..map.face_count() {
            let inv = map.inverse(f);
            assert!((inv.m[0][0] - 1.0).abs() < 1e-12 && inv.m[0][1].abs() < 1e-12 && inv.t[0].abs() < 1e-10);
        }
        let out = resample(&img, &map, 37.0, 23.0, 37, 23).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn scaling_inverse_and_round_trip() {
        let mesh = build_regular_mesh(20.0, 10.0, 40).unwrap();
        let w = 0.4;
        let pos: Vec<Point2> = mesh.vertices().iter().map(|p| Point2::new(w * p.x, p.y)).collect();
        let map = build_inverse_map(&mesh, &pos).unwrap();
        let inv = map.inverse(3);
        assert!((inv.m[0][0] - 1.0 / w).abs() < 1e-12 && (inv.m[1][1] - 1.0).abs() < 1e-12);
        for f in 0..mesh.face_count() {
            let c = mesh.face_centroid(f);
            let back = map.inverse(f).apply(map.push_forward(f, c));
            assert!((back - c).norm() < 1e-10);
        }
    }

    #[test]
    fn constant_color_survives_any_warp() {
        let img = RasterImage::filled(30, 20, &[10, 200, 77, 255]).unwrap();
        let mesh = build_regular_mesh(30.0, 20.0, 80).unwrap();
        let pos: Vec<Point2> = mesh
            .vertices()
            .iter()
            .map(|p| Point2::new(p.x * p.x / 30.0 * 0.5, p.y))
            .collect();
        let map = build_inverse_map(&mesh, &pos).unwrap();
        let out = resample(&img, &map, 15.0, 20.0, 15, 20).unwrap();
        assert!(out.data().chunks(4).all(|px| px == [10, 200, 77, 255]));
    }

    #[test]
    fn folded_face_is_rejected() {
        let mesh = build_regular_mesh(4.0, 4.0, 9).unwrap();
        let mut pos = mesh.vertices().to_vec();
        pos.swap(0, 1);
        assert!(matches!(build_inverse_map(&mesh, &pos), Err(WarpError::NonInvertibleFace(_))));
    }

    #[test]
    fn png_round_trip() {
        let img = gradient_image(5, 4);
        let bytes = img.encode_png().unwrap();
        assert_eq!(RasterImage::decode(&bytes).unwrap(), img);
    }
}
