//! Regular triangulations of the image rectangle and rasterization of user
//! labels onto them.
//!
//! All geometry here lives in the mathematical frame `[0, width] x [0, height]`
//! with `y` pointing up. Label documents use image coordinates (`y` down); see
//! [`crate::labels`] for the flip.

use std::collections::{BTreeSet, HashMap};

use crate::error::MeshError;
use crate::geometry::{
    find_self_intersection, point_in_polygon, polygon_signed_area, segment_meets_triangle,
    triangle_signed_area, Aabb, Point2,
};

/// Default mesh density.
pub const DEFAULT_VERTEX_COUNT: usize = 1500;

/// A set of face indices, kept sorted for deterministic iteration.
pub type FaceSet = BTreeSet<usize>;

/// Position of a vertex relative to the domain rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Interior,
    Left,
    Right,
    Top,
    Bottom,
    CornerLL,
    CornerLR,
    CornerTL,
    CornerTR,
}

impl BoundaryTag {
    fn classify(p: Point2, width: f64, height: f64) -> Self {
        let left = p.x == 0.0;
        let right = p.x == width;
        let bottom = p.y == 0.0;
        let top = p.y == height;
        match (left, right, bottom, top) {
            (true, _, true, _) => BoundaryTag::CornerLL,
            (true, _, _, true) => BoundaryTag::CornerTL,
            (_, true, true, _) => BoundaryTag::CornerLR,
            (_, true, _, true) => BoundaryTag::CornerTR,
            (true, ..) => BoundaryTag::Left,
            (_, true, ..) => BoundaryTag::Right,
            (_, _, true, _) => BoundaryTag::Bottom,
            (_, _, _, true) => BoundaryTag::Top,
            _ => BoundaryTag::Interior,
        }
    }

    pub fn is_boundary(self) -> bool {
        self != BoundaryTag::Interior
    }

    pub fn is_corner(self) -> bool {
        matches!(
            self,
            BoundaryTag::CornerLL | BoundaryTag::CornerLR | BoundaryTag::CornerTL | BoundaryTag::CornerTR
        )
    }

    pub fn on_left(self) -> bool {
        matches!(self, BoundaryTag::Left | BoundaryTag::CornerLL | BoundaryTag::CornerTL)
    }

    pub fn on_right(self) -> bool {
        matches!(self, BoundaryTag::Right | BoundaryTag::CornerLR | BoundaryTag::CornerTR)
    }

    pub fn on_bottom(self) -> bool {
        matches!(self, BoundaryTag::Bottom | BoundaryTag::CornerLL | BoundaryTag::CornerLR)
    }

    pub fn on_top(self) -> bool {
        matches!(self, BoundaryTag::Top | BoundaryTag::CornerTL | BoundaryTag::CornerTR)
    }
}

/// Grid resolution of a regular mesh, in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridDims {
    pub cols: usize,
    pub rows: usize,
}

impl GridDims {
    pub fn vertex_count(&self) -> usize {
        (self.cols + 1) * (self.rows + 1)
    }
}

/// Triangulation of the rectangle `[0, width] x [0, height]`.
///
/// Faces are counterclockwise; every vertex carries a [`BoundaryTag`] computed
/// by exact comparison against the rectangle edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    width: f64,
    height: f64,
    vertices: Vec<Point2>,
    faces: Vec<[usize; 3]>,
    tags: Vec<BoundaryTag>,
    grid: Option<GridDims>,
}

impl Mesh {
    /// Validates and wraps an arbitrary triangulation of the rectangle.
    pub fn new(
        width: f64,
        height: f64,
        vertices: Vec<Point2>,
        faces: Vec<[usize; 3]>,
    ) -> Result<Self, MeshError> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(MeshError::InvalidDimensions { width, height });
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.is_finite() || v.x < 0.0 || v.x > width || v.y < 0.0 || v.y > height {
                return Err(MeshError::VertexOutOfDomain { vertex: i });
            }
        }
        for (f, tri) in faces.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v >= vertices.len()) {
                return Err(MeshError::BadFaceIndex { face: f, vertex: bad });
            }
            let area = triangle_signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(MeshError::NonPositiveFace { face: f, area });
            }
        }
        let tags = vertices.iter().map(|&p| BoundaryTag::classify(p, width, height)).collect();
        let mesh = Self { width, height, vertices, faces, tags, grid: None };
        mesh.edge_face_counts()?;
        Ok(mesh)
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn tags(&self) -> &[BoundaryTag] {
        &self.tags
    }

    pub fn grid(&self) -> Option<GridDims> {
        self.grid
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_points(&self, face: usize) -> [Point2; 3] {
        let [i, j, k] = self.faces[face];
        [self.vertices[i], self.vertices[j], self.vertices[k]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.face_points(face);
        triangle_signed_area(a, b, c)
    }

    pub fn face_centroid(&self, face: usize) -> Point2 {
        let [a, b, c] = self.face_points(face);
        Point2::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0)
    }

    pub fn face_bbox(&self, face: usize) -> Aabb {
        Aabb::from_points(self.face_points(face))
    }

    /// Sorted vertex indices touched by a set of faces.
    pub fn vertices_of(&self, faces: &FaceSet) -> Vec<usize> {
        let set: BTreeSet<usize> = faces.iter().flat_map(|&f| self.faces[f]).collect();
        set.into_iter().collect()
    }

    /// Number of incident faces per undirected edge.
    ///
    /// Fails if any edge has more than two incident faces.
    pub fn edge_face_counts(&self) -> Result<HashMap<(usize, usize), usize>, MeshError> {
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.faces {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let c = counts.entry(key).or_insert(0);
                *c += 1;
                if *c > 2 {
                    return Err(MeshError::NonManifoldEdge(key.0, key.1));
                }
            }
        }
        Ok(counts)
    }

    /// Scale used for geometric tolerances.
    pub(crate) fn tolerance(&self) -> f64 {
        let s = self.width.max(self.height);
        1e-12 * s * s
    }

    /// Returns a copy with vertices mapped through an orientation-preserving
    /// map onto the rectangle `[0, width] x [0, height]`.
    pub(crate) fn mapped(
        &self,
        width: f64,
        height: f64,
        map: impl Fn(Point2) -> Point2,
    ) -> Result<Self, MeshError> {
        let vertices = self.vertices.iter().map(|&p| map(p)).collect();
        Mesh::new(width, height, vertices, self.faces.clone())
    }
}

/// Picks the grid resolution: the smallest `(p+1)(q+1) >= target` where `q`
/// follows `p` so cells stay as square as possible.
pub fn choose_grid(width: f64, height: f64, target_vertex_count: usize) -> GridDims {
    let aspect = height / width;
    let mut cols = 1usize;
    loop {
        let rows = ((cols as f64 * aspect).round() as usize).max(1);
        let dims = GridDims { cols, rows };
        if dims.vertex_count() >= target_vertex_count {
            return dims;
        }
        cols += 1;
    }
}

/// Builds a regular triangular mesh over `[0, width] x [0, height]`.
///
/// Each cell is split along its lower-left to upper-right diagonal. Vertex
/// `(ix, iy)` has index `iy * (cols + 1) + ix`.
pub fn build_regular_mesh(
    width: f64,
    height: f64,
    target_vertex_count: usize,
) -> Result<Mesh, MeshError> {
    if !(width >= 2.0 && height >= 2.0 && width.is_finite() && height.is_finite()) {
        return Err(MeshError::InvalidDimensions { width, height });
    }
    if target_vertex_count < 4 {
        return Err(MeshError::TooFewVertices(target_vertex_count));
    }
    let dims = choose_grid(width, height, target_vertex_count);
    build_grid_mesh(width, height, dims)
}

/// Builds a regular mesh with an explicit cell count.
pub fn build_grid_mesh(width: f64, height: f64, dims: GridDims) -> Result<Mesh, MeshError> {
    let GridDims { cols, rows } = dims;
    if cols == 0 || rows == 0 {
        return Err(MeshError::TooFewVertices(dims.vertex_count()));
    }
    let mut vertices = Vec::with_capacity(dims.vertex_count());
    for iy in 0..=rows {
        // (n * w) / n can miss w by one ulp; edge vertices must sit exactly on it
        let y = if iy == rows { height } else { (iy as f64 * height) / rows as f64 };
        for ix in 0..=cols {
            let x = if ix == cols { width } else { (ix as f64 * width) / cols as f64 };
            vertices.push(Point2::new(x, y));
        }
    }
    let stride = cols + 1;
    let mut faces = Vec::with_capacity(2 * cols * rows);
    for iy in 0..rows {
        for ix in 0..cols {
            let v00 = iy * stride + ix;
            let v10 = v00 + 1;
            let v01 = v00 + stride;
            let v11 = v01 + 1;
            faces.push([v00, v10, v11]);
            faces.push([v00, v11, v01]);
        }
    }
    let mut mesh = Mesh::new(width, height, vertices, faces)?;
    mesh.grid = Some(dims);
    Ok(mesh)
}

fn check_points_in_rect(mesh: &Mesh, points: &[Point2]) -> Result<(), MeshError> {
    for (index, p) in points.iter().enumerate() {
        if !p.is_finite() || p.x < 0.0 || p.x > mesh.width || p.y < 0.0 || p.y > mesh.height {
            return Err(MeshError::PointOutOfRange { index, x: p.x, y: p.y });
        }
    }
    Ok(())
}

/// Validates a closed polygon: at least 3 points, non-zero area, simple.
pub fn validate_polygon(polygon: &[Point2], eps: f64) -> Result<(), MeshError> {
    if polygon.len() < 3 {
        return Err(MeshError::PolygonTooShort(polygon.len()));
    }
    if let Some((i, j)) = find_self_intersection(polygon, eps) {
        return Err(MeshError::SelfIntersectingPolygon(i, j));
    }
    if polygon_signed_area(polygon).abs() <= eps {
        return Err(MeshError::DegeneratePolygon);
    }
    Ok(())
}

/// Faces whose centroid lies inside `polygon`, plus every face whose closed
/// triangle meets the polygon boundary.
pub fn faces_for_polygon(mesh: &Mesh, polygon: &[Point2]) -> Result<FaceSet, MeshError> {
    let eps = mesh.tolerance();
    validate_polygon(polygon, eps)?;
    check_points_in_rect(mesh, polygon)?;
    let bbox = Aabb::from_points(polygon.iter().copied());
    let n = polygon.len();
    let mut out = FaceSet::new();
    for f in 0..mesh.face_count() {
        let fb = mesh.face_bbox(f);
        if fb.max.x < bbox.min.x || fb.min.x > bbox.max.x || fb.max.y < bbox.min.y || fb.min.y > bbox.max.y {
            continue;
        }
        if point_in_polygon(mesh.face_centroid(f), polygon) {
            out.insert(f);
            continue;
        }
        let tri = mesh.face_points(f);
        if (0..n).any(|e| segment_meets_triangle(polygon[e], polygon[(e + 1) % n], tri, eps)) {
            out.insert(f);
        }
    }
    Ok(out)
}

/// Faces whose closed triangle meets any segment of `polyline`.
///
/// A segment running along a mesh edge selects the faces on both sides.
pub fn faces_for_polyline(mesh: &Mesh, polyline: &[Point2]) -> Result<FaceSet, MeshError> {
    if polyline.len() < 2 {
        return Err(MeshError::PolylineTooShort(polyline.len()));
    }
    check_points_in_rect(mesh, polyline)?;
    let eps = mesh.tolerance();
    let mut out = FaceSet::new();
    for seg in polyline.windows(2) {
        let sb = Aabb::from_points([seg[0], seg[1]]);
        for f in 0..mesh.face_count() {
            if out.contains(&f) {
                continue;
            }
            let fb = mesh.face_bbox(f);
            if fb.max.x < sb.min.x || fb.min.x > sb.max.x || fb.max.y < sb.min.y || fb.min.y > sb.max.y {
                continue;
            }
            if segment_meets_triangle(seg[0], seg[1], mesh.face_points(f), eps) {
                out.insert(f);
            }
        }
    }
    Ok(out)
}

/// Bounding box of the vertices of a face set.
pub fn face_set_bbox(mesh: &Mesh, faces: &FaceSet) -> Aabb {
    Aabb::from_points(faces.iter().flat_map(|&f| mesh.face_points(f)))
}

/// Horizontal and vertical stripes covering the objects.
///
/// `stripe_h` holds every face whose open y-extent overlaps some object's
/// bounding box y-extent; `stripe_v` is the analogue in x.
pub fn compute_stripes(mesh: &Mesh, object_faces: &[FaceSet]) -> (FaceSet, FaceSet) {
    let boxes: Vec<Aabb> = object_faces
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| face_set_bbox(mesh, s))
        .collect();
    let mut stripe_h = FaceSet::new();
    let mut stripe_v = FaceSet::new();
    if boxes.is_empty() {
        return (stripe_h, stripe_v);
    }
    for f in 0..mesh.face_count() {
        let fb = mesh.face_bbox(f);
        if boxes.iter().any(|b| fb.min.y < b.max.y && fb.max.y > b.min.y) {
            stripe_h.insert(f);
        }
        if boxes.iter().any(|b| fb.min.x < b.max.x && fb.max.x > b.min.x) {
            stripe_v.insert(f);
        }
    }
    (stripe_h, stripe_v)
}

/// Rasterized labels: which faces belong to objects, lines, stripes and background.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionModel {
    pub object_faces: Vec<FaceSet>,
    pub line_faces: Vec<FaceSet>,
    pub stripe_h: FaceSet,
    pub stripe_v: FaceSet,
    pub background: FaceSet,
}

impl RegionModel {
    /// Rasterizes polygons and polylines (already in the mesh frame).
    ///
    /// Objects whose face sets overlap are merged so the object sets stay disjoint.
    pub fn build(
        mesh: &Mesh,
        polygons: &[Vec<Point2>],
        polylines: &[Vec<Point2>],
    ) -> Result<Self, MeshError> {
        let mut objects: Vec<FaceSet> = Vec::new();
        for poly in polygons {
            let mut set = faces_for_polygon(mesh, poly)?;
            // absorb every earlier object that overlaps this one
            let mut i = 0;
            while i < objects.len() {
                if !objects[i].is_disjoint(&set) {
                    let other = objects.remove(i);
                    set.extend(other);
                } else {
                    i += 1;
                }
            }
            objects.push(set);
        }
        let lines = polylines
            .iter()
            .map(|pl| faces_for_polyline(mesh, pl))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_face_sets(mesh, objects, lines))
    }

    pub fn from_face_sets(mesh: &Mesh, object_faces: Vec<FaceSet>, line_faces: Vec<FaceSet>) -> Self {
        let (stripe_h, stripe_v) = compute_stripes(mesh, &object_faces);
        let mut covered: FaceSet = stripe_h.union(&stripe_v).copied().collect();
        covered.extend(object_faces.iter().flatten().copied());
        covered.extend(line_faces.iter().flatten().copied());
        let background = (0..mesh.face_count()).filter(|f| !covered.contains(f)).collect();
        Self { object_faces, line_faces, stripe_h, stripe_v, background }
    }

    pub fn all_object_faces(&self) -> FaceSet {
        self.object_faces.iter().flatten().copied().collect()
    }

    pub fn all_line_faces(&self) -> FaceSet {
        self.line_faces.iter().flatten().copied().collect()
    }

    pub fn has_objects(&self) -> bool {
        self.object_faces.iter().any(|s| !s.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn two_by_two_mesh() {
        let mesh = build_regular_mesh(2.0, 2.0, 9).unwrap();
        assert_eq!(mesh.vertex_count(), 9);
        assert_eq!(mesh.face_count(), 8);
        assert_eq!(mesh.tags().iter().filter(|t| t.is_corner()).count(), 4);
        assert_eq!(mesh.tags()[4], BoundaryTag::Interior);
    }

    #[test]
    fn default_vertex_count_grid() {
        let mesh = build_regular_mesh(615.0, 461.0, DEFAULT_VERTEX_COUNT).unwrap();
        let n = mesh.vertex_count();
        assert!((1500..=1700).contains(&n), "{n}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(build_regular_mesh(1.0, 5.0, 10), Err(MeshError::InvalidDimensions { .. })));
        assert!(matches!(build_regular_mesh(-3.0, 5.0, 10), Err(MeshError::InvalidDimensions { .. })));
        assert!(matches!(build_regular_mesh(4.0, 5.0, 3), Err(MeshError::TooFewVertices(3))));
    }

    #[test]
    fn clockwise_face_rejected() {
        let v = vec![p(0., 0.), p(1., 0.), p(0., 1.)];
        assert!(matches!(
            Mesh::new(1.0, 1.0, v, vec![[0, 2, 1]]),
            Err(MeshError::NonPositiveFace { .. })
        ));
    }

    #[test]
    fn boundary_tags_lie_on_edges() {
        let mesh = build_regular_mesh(30.0, 17.0, 60).unwrap();
        for (v, t) in mesh.vertices().iter().zip(mesh.tags()) {
            assert_eq!(t.on_left(), v.x == 0.0);
            assert_eq!(t.on_right(), v.x == 30.0);
            assert_eq!(t.on_bottom(), v.y == 0.0);
            assert_eq!(t.on_top(), v.y == 17.0);
        }
    }

    #[test]
    fn full_rectangle_polygon_selects_everything() {
        let mesh = build_regular_mesh(40.0, 30.0, 50).unwrap();
        let poly = [p(0., 0.), p(40., 0.), p(40., 30.), p(0., 30.)];
        assert_eq!(faces_for_polygon(&mesh, &poly).unwrap().len(), mesh.face_count());
    }

    #[test]
    fn degenerate_and_crossing_polygons_rejected() {
        let mesh = build_regular_mesh(10.0, 10.0, 25).unwrap();
        let flat = [p(1., 1.), p(5., 1.), p(9., 1.)];
        assert_eq!(faces_for_polygon(&mesh, &flat), Err(MeshError::DegeneratePolygon));
        let bowtie = [p(1., 1.), p(9., 9.), p(9., 1.), p(1., 9.)];
        assert!(matches!(
            faces_for_polygon(&mesh, &bowtie),
            Err(MeshError::SelfIntersectingPolygon(..))
        ));
        let outside = [p(1., 1.), p(11., 1.), p(5., 5.)];
        assert!(matches!(faces_for_polygon(&mesh, &outside), Err(MeshError::PointOutOfRange { index: 1, .. })));
    }

    #[test]
    fn short_polyline_rejected() {
        let mesh = build_regular_mesh(10.0, 10.0, 25).unwrap();
        assert_eq!(faces_for_polyline(&mesh, &[p(1., 1.)]), Err(MeshError::PolylineTooShort(1)));
    }

    #[test]
    fn segment_inside_one_face() {
        let mesh = build_grid_mesh(4.0, 4.0, GridDims { cols: 4, rows: 4 }).unwrap();
        // lower-right triangle of cell (1, 1): vertices (1,1), (2,1), (2,2)
        let got = faces_for_polyline(&mesh, &[p(1.7, 1.2), p(1.9, 1.5)]).unwrap();
        assert_eq!(got.len(), 1);
        let f = *got.iter().next().unwrap();
        assert!(crate::geometry::point_in_triangle(p(1.8, 1.3), mesh.face_points(f), 0.0));
    }

    #[test]
    fn empty_object_list_gives_empty_stripes() {
        let mesh = build_regular_mesh(10.0, 10.0, 25).unwrap();
        let (h, v) = compute_stripes(&mesh, &[]);
        assert!(h.is_empty() && v.is_empty());
    }

    #[test]
    fn full_width_object_covers_vertical_stripe() {
        let mesh = build_grid_mesh(8.0, 8.0, GridDims { cols: 4, rows: 4 }).unwrap();
        let obj = faces_for_polygon(&mesh, &[p(0., 2.5), p(8., 2.5), p(8., 5.5), p(0., 5.5)]).unwrap();
        let (h, v) = compute_stripes(&mesh, &[obj]);
        // object rows span y in [2, 6]: two of the four face rows
        assert_eq!(h.len(), mesh.face_count() / 2);
        assert_eq!(v.len(), mesh.face_count());
    }

    #[test]
    fn overlapping_objects_merge() {
        let mesh = build_grid_mesh(8.0, 8.0, GridDims { cols: 8, rows: 8 }).unwrap();
        let a = vec![p(1.2, 1.2), p(4.5, 1.2), p(4.5, 4.5), p(1.2, 4.5)];
        let b = vec![p(4.2, 4.2), p(6.5, 4.2), p(6.5, 6.5), p(4.2, 6.5)];
        let c = vec![p(6.9, 0.5), p(7.5, 0.5), p(7.5, 1.5)];
        let regions = RegionModel::build(&mesh, &[a, b, c], &[]).unwrap();
        assert_eq!(regions.object_faces.len(), 2);
        let total: usize = regions.object_faces.iter().map(|s| s.len()).sum();
        assert_eq!(total, regions.all_object_faces().len());
    }
}
