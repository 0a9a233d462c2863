//! Constrained linear Beltrami solver.
//!
//! The warp `f = u + iv` solves `div(A grad u) = div(A grad v) = 0`, where `A`
//! comes from the prescribed Beltrami field. The discrete operator is the
//! finite-element stiffness matrix built from per-face gradient weights; the
//! unknown vector starts as `[u_0..u_{n-1}, v_0..v_{n-1}]` and is reshaped by
//! boundary conditions and by substituting constrained vertex coordinates with
//! affine expressions in a handful of scale/translation parameters.
//!
//! Dirichlet rows are enforced exactly. Operator rows are solved in least
//! squares when constraints leave more rows than unknowns.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::beltrami::{face_gradients, jacobian_of_map, CoefficientField};
use crate::error::SolveError;
use crate::geometry::Point2;
use crate::mesh::{Mesh, RegionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
}

/// Meaning of a solver unknown that is not a vertex coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamKind {
    /// Scale shared by every object.
    ObjectScale,
    ObjectShift { object: usize, axis: Axis },
    LineScale { line: usize, axis: Axis },
    LineShift { line: usize, axis: Axis },
    /// Scale shared by both chessboard families.
    ChessScale,
    /// Vertical shift of one horizontal stripe band.
    RowBandShift { band: usize },
    /// Horizontal shift of one vertical stripe band.
    ColumnBandShift { band: usize },
}

impl ParamKind {
    /// Name of the constraint group the parameter belongs to.
    pub fn group(&self) -> String {
        match self {
            ParamKind::ObjectScale => "objects".into(),
            ParamKind::ObjectShift { object, .. } => format!("object {object}"),
            ParamKind::LineScale { line, .. } | ParamKind::LineShift { line, .. } => format!("line {line}"),
            ParamKind::ChessScale => "chessboard".into(),
            ParamKind::RowBandShift { band } => format!("horizontal stripe {band}"),
            ParamKind::ColumnBandShift { band } => format!("vertical stripe {band}"),
        }
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamKind::ObjectScale => write!(f, "r_o"),
            ParamKind::ObjectShift { object, axis } => write!(f, "t{}_o{object}", axis_name(*axis)),
            ParamKind::LineScale { line, axis } => write!(f, "r{}_l{line}", axis_name(*axis)),
            ParamKind::LineShift { line, axis } => write!(f, "t{}_l{line}", axis_name(*axis)),
            ParamKind::ChessScale => write!(f, "r"),
            ParamKind::RowBandShift { band } => write!(f, "cy_{band}"),
            ParamKind::ColumnBandShift { band } => write!(f, "cx_{band}"),
        }
    }
}

fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::X => "x",
        Axis::Y => "y",
    }
}

/// A vertex coordinate expressed in terms of the current unknowns.
#[derive(Debug, Clone, PartialEq)]
pub enum CoordBinding {
    /// The coordinate is its own unknown.
    Free(usize),
    /// `sum(coef * x[col]) + constant`.
    Affine { terms: Vec<(usize, f64)>, constant: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// Operator row `div(A grad .)` at a vertex.
    Operator { vertex: usize, axis: Axis },
    /// Boundary identity row, enforced exactly.
    Dirichlet { vertex: usize, axis: Axis },
    /// Parameter held at a prescribed value, enforced exactly.
    Fixed { param: ParamKind },
}

/// Sparse linear system together with the meaning of its columns.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub nrows: usize,
    pub ncols: usize,
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    pub row_kinds: Vec<RowKind>,
    /// Binding of each vertex coordinate: `u_i` at `i`, `v_i` at `n + i`.
    pub coords: Vec<CoordBinding>,
    pub params: Vec<(ParamKind, usize)>,
    pub warnings: Vec<String>,
}

impl SparseSystem {
    pub fn vertex_count(&self) -> usize {
        self.coords.len() / 2
    }

    fn coord_index(&self, vertex: usize, axis: Axis) -> usize {
        match axis {
            Axis::X => vertex,
            Axis::Y => self.vertex_count() + vertex,
        }
    }

    /// Sums duplicate entries and drops explicit zeros; order is row-major.
    pub fn finalize(&mut self) {
        self.triplets = merge_triplets(std::mem::take(&mut self.triplets));
    }

    pub fn param_column(&self, kind: ParamKind) -> Option<usize> {
        self.params.iter().find(|(k, _)| *k == kind).map(|&(_, c)| c)
    }

    /// Appends an exact row holding parameter `kind` at `value`.
    pub fn fix_param(&mut self, kind: ParamKind, value: f64) -> Result<(), SolveError> {
        let col = self.param_column(kind).ok_or_else(|| SolveError::UnknownParameter(kind.to_string()))?;
        self.triplets.push((self.nrows, col, 1.0));
        self.rhs.push(value);
        self.row_kinds.push(RowKind::Fixed { param: kind });
        self.nrows += 1;
        Ok(())
    }

    fn add_param(&mut self, kind: ParamKind) -> usize {
        if let Some(c) = self.param_column(kind) {
            return c;
        }
        let c = self.ncols;
        self.ncols += 1;
        self.params.push((kind, c));
        c
    }

    /// Replaces free coordinates by affine expressions in one pass over the entries,
    /// then renumbers columns so coordinates come first and parameters last.
    fn substitute(&mut self, bindings: BTreeMap<usize, (Vec<(usize, f64)>, f64)>) {
        let mut by_column: BTreeMap<usize, &(Vec<(usize, f64)>, f64)> = BTreeMap::new();
        for (&coord, binding) in &bindings {
            if let CoordBinding::Free(c) = self.coords[coord] {
                by_column.insert(c, binding);
            }
        }
        let mut out = Vec::with_capacity(self.triplets.len());
        for &(r, c, v) in &self.triplets {
            match by_column.get(&c) {
                Some((terms, constant)) => {
                    out.extend(terms.iter().map(|&(pc, coef)| (r, pc, v * coef)));
                    self.rhs[r] -= v * constant;
                }
                None => out.push((r, c, v)),
            }
        }
        self.triplets = out;
        for (coord, (terms, constant)) in bindings {
            self.coords[coord] = CoordBinding::Affine { terms, constant };
        }
        self.compact();
    }

    fn compact(&mut self) {
        let mut remap = vec![usize::MAX; self.ncols];
        let mut next = 0;
        for b in &self.coords {
            if let CoordBinding::Free(c) = b {
                remap[*c] = next;
                next += 1;
            }
        }
        for (_, c) in &self.params {
            remap[*c] = next;
            next += 1;
        }
        self.ncols = next;
        for t in &mut self.triplets {
            t.1 = remap[t.1];
        }
        for b in &mut self.coords {
            match b {
                CoordBinding::Free(c) => *c = remap[*c],
                CoordBinding::Affine { terms, .. } => terms.iter_mut().for_each(|t| t.0 = remap[t.0]),
            }
        }
        for (_, c) in &mut self.params {
            *c = remap[*c];
        }
    }

    /// Writes `row col value` lines, then the right-hand side as `rhs row value`.
    pub fn write_triplets(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "# {} rows {} cols", self.nrows, self.ncols)?;
        for &(r, c, v) in &merge_triplets(self.triplets.clone()) {
            writeln!(out, "{r} {c} {v:.17e}")?;
        }
        for (r, v) in self.rhs.iter().enumerate() {
            writeln!(out, "rhs {r} {v:.17e}")?;
        }
        Ok(())
    }
}

fn merge_triplets(mut t: Vec<(usize, usize, f64)>) -> Vec<(usize, usize, f64)> {
    t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
    for (r, c, v) in t {
        match out.last_mut() {
            Some(last) if last.0 == r && last.1 == c => last.2 += v,
            _ => out.push((r, c, v)),
        }
    }
    out.retain(|t| t.2 != 0.0);
    out
}

/// Per-face stiffness entries `Area(T) * grad(phi_a) . A grad(phi_b)` of the
/// generalized Laplacian, as `(row, col, value)` over vertex indices.
pub fn stiffness_triplets(mesh: &Mesh, coeffs: &CoefficientField) -> Result<Vec<(usize, usize, f64)>, SolveError> {
    if coeffs.len() != mesh.face_count() {
        return Err(SolveError::LengthMismatch { expected: mesh.face_count(), actual: coeffs.len() });
    }
    let grads = face_gradients(mesh)?;
    let mut out = Vec::with_capacity(9 * mesh.face_count());
    for ((tri, g), a) in mesh.faces().iter().zip(&grads).zip(&coeffs.0) {
        for row in 0..3 {
            for col in 0..3 {
                let (fx, fy) = a.apply(g.grad_x[col], g.grad_y[col]);
                let v = g.area * (g.grad_x[row] * fx + g.grad_y[row] * fy);
                out.push((tri[row], tri[col], v));
            }
        }
    }
    Ok(merge_triplets(out))
}

/// `Div(A D s)` at every vertex for a nodal field `s`.
pub fn apply_operator(mesh: &Mesh, coeffs: &CoefficientField, field: &[f64]) -> Result<Vec<f64>, SolveError> {
    let mut out = vec![0.0; mesh.vertex_count()];
    for (r, c, v) in stiffness_triplets(mesh, coeffs)? {
        out[r] += v * field[c];
    }
    Ok(out)
}

/// Block-diagonal operator system for `(u, v)`, one row per vertex and coordinate.
pub fn assemble_laplacian(mesh: &Mesh, coeffs: &CoefficientField) -> Result<SparseSystem, SolveError> {
    let n = mesh.vertex_count();
    let k = stiffness_triplets(mesh, coeffs)?;
    let mut triplets = Vec::with_capacity(2 * k.len());
    triplets.extend(k.iter().copied());
    triplets.extend(k.iter().map(|&(r, c, v)| (n + r, n + c, v)));
    let row_kinds = (0..n)
        .map(|vertex| RowKind::Operator { vertex, axis: Axis::X })
        .chain((0..n).map(|vertex| RowKind::Operator { vertex, axis: Axis::Y }))
        .collect();
    Ok(SparseSystem {
        nrows: 2 * n,
        ncols: 2 * n,
        triplets,
        rhs: vec![0.0; 2 * n],
        row_kinds,
        coords: (0..2 * n).map(CoordBinding::Free).collect(),
        params: Vec::new(),
        warnings: Vec::new(),
    })
}

/// Size of the target rectangle `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetRect {
    pub width: f64,
    pub height: f64,
}

/// Pins `u` on the left/right edges and `v` on the bottom/top edges.
///
/// The other coordinate of an edge vertex keeps its operator row, so edge
/// vertices slide along their edge; corners are pinned in both coordinates.
pub fn apply_boundary_conditions(
    mut system: SparseSystem,
    mesh: &Mesh,
    target: TargetRect,
) -> Result<SparseSystem, SolveError> {
    if !(target.width > 0.0 && target.height > 0.0 && target.width.is_finite() && target.height.is_finite()) {
        return Err(SolveError::InvalidTarget { width: target.width, height: target.height });
    }
    let mut pinned: BTreeMap<usize, f64> = BTreeMap::new();
    for (i, tag) in mesh.tags().iter().enumerate() {
        if tag.on_left() {
            pinned.insert(system.coord_index(i, Axis::X), 0.0);
        } else if tag.on_right() {
            pinned.insert(system.coord_index(i, Axis::X), target.width);
        }
        if tag.on_bottom() {
            pinned.insert(system.coord_index(i, Axis::Y), 0.0);
        } else if tag.on_top() {
            pinned.insert(system.coord_index(i, Axis::Y), target.height);
        }
    }
    // row r of the assembled system belongs to coordinate r
    system.triplets.retain(|t| !pinned.contains_key(&t.0));
    let n = system.vertex_count();
    for (&coord, &value) in &pinned {
        let col = match system.coords[coord] {
            CoordBinding::Free(c) => c,
            CoordBinding::Affine { .. } => continue,
        };
        system.triplets.push((coord, col, 1.0));
        system.rhs[coord] = value;
        let (vertex, axis) = if coord < n { (coord, Axis::X) } else { (coord - n, Axis::Y) };
        system.row_kinds[coord] = RowKind::Dirichlet { vertex, axis };
    }
    Ok(system)
}

/// Vertex groups whose images are restricted to scalings plus translations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSet {
    /// `f(v) = r_o v + t_k` with one `r_o` for all objects.
    pub objects: Vec<Vec<usize>>,
    /// `f(v) = (r^x x, r^y y) + t_j`.
    pub lines: Vec<Vec<usize>>,
    /// Horizontal stripe bands: `v = r y + c_b`, `u` free.
    pub row_bands: Vec<Vec<usize>>,
    /// Vertical stripe bands: `u = r x + c_b`, `v` free.
    pub column_bands: Vec<Vec<usize>>,
}

struct DisjointSets(Vec<usize>);

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Merges vertex sets that share a vertex; output ordered by smallest member.
fn merge_overlapping(sets: Vec<BTreeSet<usize>>) -> Vec<Vec<usize>> {
    let sets: Vec<_> = sets.into_iter().filter(|s| !s.is_empty()).collect();
    let mut dsu = DisjointSets::new(sets.len());
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, s) in sets.iter().enumerate() {
        for &v in s {
            if let Some(&j) = owner.get(&v) {
                dsu.union(i, j);
            } else {
                owner.insert(v, i);
            }
        }
    }
    let mut merged: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (i, s) in sets.into_iter().enumerate() {
        merged.entry(dsu.find(i)).or_default().extend(s);
    }
    let mut out: Vec<Vec<usize>> = merged.into_values().map(|s| s.into_iter().collect()).collect();
    out.sort();
    out
}

/// Connected components of a face set, returned as vertex sets.
fn face_components(mesh: &Mesh, faces: &BTreeSet<usize>) -> Vec<Vec<usize>> {
    merge_overlapping(faces.iter().map(|&f| mesh.faces()[f].into_iter().collect()).collect())
}

impl ConstraintSet {
    /// Derives vertex groups from a region model.
    ///
    /// With `chessboard`, objects are covered by the stripe intersection and get
    /// no separate group. Line vertices already claimed by objects or stripes are
    /// left out of the line groups, and each remaining connected piece of a
    /// line is its own group.
    pub fn from_regions(mesh: &Mesh, regions: &RegionModel, chessboard: bool) -> Self {
        let mut claimed: BTreeSet<usize> = BTreeSet::new();
        let mut set = ConstraintSet::default();
        if chessboard && regions.has_objects() {
            set.row_bands = face_components(mesh, &regions.stripe_h);
            set.column_bands = face_components(mesh, &regions.stripe_v);
            claimed.extend(set.row_bands.iter().flatten());
            claimed.extend(set.column_bands.iter().flatten());
        } else {
            set.objects = merge_overlapping(
                regions.object_faces.iter().map(|fs| mesh.vertices_of(fs).into_iter().collect()).collect(),
            );
            claimed.extend(set.objects.iter().flatten());
        }
        // claimed vertices cut a line into pieces; pieces that share one scale
        // across a rigid gap cannot fit a narrow target, so each gets its own
        let pieces = regions.line_faces.iter().flat_map(|fs| {
            merge_overlapping(
                fs.iter()
                    .map(|&f| mesh.faces()[f].into_iter().filter(|v| !claimed.contains(v)).collect())
                    .collect(),
            )
        });
        set.lines = merge_overlapping(pieces.map(|p| p.into_iter().collect()).collect());
        set
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty() && self.lines.is_empty() && self.row_bands.is_empty() && self.column_bands.is_empty()
    }
}

fn check_vertices(mesh: &Mesh, group: &str, vertices: &[usize]) -> Result<(), SolveError> {
    match vertices.iter().find(|&&v| v >= mesh.vertex_count()) {
        Some(&vertex) => Err(SolveError::VertexOutOfRange { group: group.to_string(), vertex }),
        None => Ok(()),
    }
}

fn spans(mesh: &Mesh, vertices: &[usize], axis: Axis) -> bool {
    let coord = |v: usize| match axis {
        Axis::X => mesh.vertices()[v].x,
        Axis::Y => mesh.vertices()[v].y,
    };
    vertices.iter().any(|&v| coord(v) != coord(vertices[0]))
}

fn is_free(system: &SparseSystem, coord: usize) -> bool {
    matches!(system.coords[coord], CoordBinding::Free(_))
}

fn finish_substitution(
    mut system: SparseSystem,
    bindings: BTreeMap<usize, (Vec<(usize, f64)>, f64)>,
) -> Result<SparseSystem, SolveError> {
    system.substitute(bindings);
    if !system.coords.iter().any(|b| matches!(b, CoordBinding::Free(_))) {
        return Err(SolveError::NoFreeUnknowns);
    }
    Ok(system)
}

/// Substitutes object and line vertex coordinates by their scale/translation
/// parameters. Operator rows at constrained vertices are kept.
pub fn augment_deformation_constraints(
    mut system: SparseSystem,
    constraints: &ConstraintSet,
    mesh: &Mesh,
) -> Result<SparseSystem, SolveError> {
    let n = mesh.vertex_count();
    let mut bindings: BTreeMap<usize, (Vec<(usize, f64)>, f64)> = BTreeMap::new();
    let claim = |system: &SparseSystem, bindings: &BTreeMap<_, _>, v: usize| {
        is_free(system, v) && is_free(system, n + v) && !bindings.contains_key(&v)
    };
    if !constraints.objects.is_empty() {
        let scale = system.add_param(ParamKind::ObjectScale);
        for (k, group) in constraints.objects.iter().enumerate() {
            check_vertices(mesh, &format!("object {k}"), group)?;
            if group.len() < 2 {
                system.warnings.push(format!("object {k} has a single vertex; its scale and shift are not separable"));
            }
            let tx = system.add_param(ParamKind::ObjectShift { object: k, axis: Axis::X });
            let ty = system.add_param(ParamKind::ObjectShift { object: k, axis: Axis::Y });
            for &v in group {
                if !claim(&system, &bindings, v) {
                    system.warnings.push(format!("object {k}: vertex {v} already constrained, skipped"));
                    continue;
                }
                let p = mesh.vertices()[v];
                bindings.insert(v, (vec![(scale, p.x), (tx, 1.0)], 0.0));
                bindings.insert(n + v, (vec![(scale, p.y), (ty, 1.0)], 0.0));
            }
        }
    }
    for (j, group) in constraints.lines.iter().enumerate() {
        check_vertices(mesh, &format!("line {j}"), group)?;
        if !spans(mesh, group, Axis::X) || !spans(mesh, group, Axis::Y) {
            system.warnings.push(format!("line {j} is degenerate along one axis; its scale is not determined"));
        }
        let rx = system.add_param(ParamKind::LineScale { line: j, axis: Axis::X });
        let ry = system.add_param(ParamKind::LineScale { line: j, axis: Axis::Y });
        let tx = system.add_param(ParamKind::LineShift { line: j, axis: Axis::X });
        let ty = system.add_param(ParamKind::LineShift { line: j, axis: Axis::Y });
        for &v in group {
            if !claim(&system, &bindings, v) {
                system.warnings.push(format!("line {j}: vertex {v} already constrained, skipped"));
                continue;
            }
            let p = mesh.vertices()[v];
            bindings.insert(v, (vec![(rx, p.x), (tx, 1.0)], 0.0));
            bindings.insert(n + v, (vec![(ry, p.y), (ty, 1.0)], 0.0));
        }
    }
    finish_substitution(system, bindings)
}

/// Substitutes stripe coordinates: `v = r y + c_b` on horizontal bands and
/// `u = r x + c_b` on vertical bands, with one scale `r` for both.
pub fn augment_chessboard_constraints(
    mut system: SparseSystem,
    constraints: &ConstraintSet,
    mesh: &Mesh,
) -> Result<SparseSystem, SolveError> {
    let (rows, cols) = (&constraints.row_bands, &constraints.column_bands);
    if rows.is_empty() && cols.is_empty() {
        return Ok(system);
    }
    if rows.is_empty() || cols.is_empty() {
        return Err(SolveError::InconsistentChessboard);
    }
    let n = mesh.vertex_count();
    let scale = system.add_param(ParamKind::ChessScale);
    let mut bindings: BTreeMap<usize, (Vec<(usize, f64)>, f64)> = BTreeMap::new();
    for (b, band) in rows.iter().enumerate() {
        check_vertices(mesh, &format!("horizontal stripe {b}"), band)?;
        let shift = system.add_param(ParamKind::RowBandShift { band: b });
        for &v in band {
            if is_free(&system, n + v) && !bindings.contains_key(&(n + v)) {
                bindings.insert(n + v, (vec![(scale, mesh.vertices()[v].y), (shift, 1.0)], 0.0));
            }
        }
    }
    for (b, band) in cols.iter().enumerate() {
        check_vertices(mesh, &format!("vertical stripe {b}"), band)?;
        let shift = system.add_param(ParamKind::ColumnBandShift { band: b });
        for &v in band {
            if is_free(&system, v) && !bindings.contains_key(&v) {
                bindings.insert(v, (vec![(scale, mesh.vertices()[v].x), (shift, 1.0)], 0.0));
            }
        }
    }
    finish_substitution(system, bindings)
}

/// How an overdetermined constrained system is reduced to a square one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMethod {
    /// Project the operator rows onto the constrained unknowns: the stationary
    /// point of the discrete energy over the constrained maps. Free vertices
    /// satisfy their operator rows exactly.
    Energy,
    /// Minimize the 2-norm of all operator rows through the normal equations.
    LeastSquares,
    /// Least squares fixes the constraint parameters; free coordinates then
    /// satisfy their own operator rows exactly with every constrained vertex held.
    /// Keeps each free vertex inside the hull of its neighbours when the
    /// operator has non-positive off-diagonals.
    #[default]
    Anchored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub method: SolveMethod,
    /// Tikhonov term added to the column-equilibrated normal equations.
    pub regularization: f64,
    pub refinement_steps: usize,
    /// Relative residual accepted for square systems.
    pub residual_tolerance: f64,
    /// Reject warps with a non-positive face Jacobian.
    pub reject_foldovers: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { method: SolveMethod::Anchored, regularization: 1e-12, refinement_steps: 2, residual_tolerance: 1e-10, reject_foldovers: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub rows: usize,
    pub cols: usize,
    pub square: bool,
    /// Operator-row residual 2-norm after the solve.
    pub residual_norm: f64,
    pub relative_residual: f64,
    pub min_jacobian: f64,
    pub warnings: Vec<String>,
    pub elapsed: Duration,
}

/// Target position of every vertex plus the recovered parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpField {
    pub positions: Vec<Point2>,
    pub params: Vec<(ParamKind, f64)>,
    pub report: SolveReport,
}

impl WarpField {
    pub fn param(&self, kind: ParamKind) -> Option<f64> {
        self.params.iter().find(|(k, _)| *k == kind).map(|&(_, v)| v)
    }

    pub fn object_scale(&self) -> Option<f64> {
        self.param(ParamKind::ObjectScale)
    }

    pub fn chess_scale(&self) -> Option<f64> {
        self.param(ParamKind::ChessScale)
    }
}

/// Row-compressed matrix used for the reduced least-squares problem.
struct Csr {
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl Csr {
    fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(c, v)| v * x[c]).sum()).collect()
    }

    fn mul_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                out[c] += v * y[r];
            }
        }
        out
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>, SolveError> {
        let t: Vec<_> = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |&(c, v)| Triplet::new(r, c, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.rows.len(), self.ncols, &t)
            .map_err(|_| SolveError::Singular { suspects: vec![] })
    }

    fn normal_matrix(&self, regularization: f64) -> Result<SparseColMat<usize, f64>, SolveError> {
        let mut t = Vec::new();
        for row in &self.rows {
            for &(i, a) in row {
                for &(j, b) in row {
                    if j <= i {
                        t.push((i, j, a * b));
                    }
                }
            }
        }
        let mut merged = merge_triplets(t);
        merged.extend((0..self.ncols).map(|i| (i, i, regularization)));
        let t: Vec<_> = merge_triplets(merged).into_iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.ncols, self.ncols, &t)
            .map_err(|_| SolveError::Singular { suspects: vec![] })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn col_vec(x: &[f64]) -> Mat<f64> {
    Mat::from_fn(x.len(), 1, |i, _| x[i])
}

fn suspects(system: &SparseSystem, columns: impl IntoIterator<Item = usize>) -> Vec<String> {
    let cols: BTreeSet<usize> = columns.into_iter().collect();
    let mut groups: BTreeSet<String> =
        system.params.iter().filter(|(_, c)| cols.contains(c)).map(|(k, _)| k.group()).collect();
    if groups.is_empty() {
        groups.extend(system.params.iter().map(|(k, _)| k.group()));
    }
    groups.into_iter().collect()
}

/// Exact equalities on parameters, reduced to `p = p0 + N z`.
struct ParamReduction {
    columns: Vec<usize>,
    particular: Vec<f64>,
    null_basis: Mat<f64>,
}

fn reduce_param_equalities(
    system: &SparseSystem,
    equalities: &[(Vec<(usize, f64)>, f64)],
) -> Result<ParamReduction, SolveError> {
    let columns: Vec<usize> =
        equalities.iter().flat_map(|(t, _)| t.iter().map(|&(c, _)| c)).collect::<BTreeSet<_>>().into_iter().collect();
    let local = |c: usize| columns.binary_search(&c).expect("column collected above");
    let (k, p) = (equalities.len(), columns.len());
    let mut c_mat = Mat::<f64>::zeros(k, p);
    let mut d = vec![0.0; k];
    for (r, (terms, rhs)) in equalities.iter().enumerate() {
        for &(c, v) in terms {
            c_mat[(r, local(c))] += v;
        }
        d[r] = *rhs;
    }
    let svd = c_mat.svd().map_err(|_| SolveError::Singular { suspects: suspects(system, columns.clone()) })?;
    let s = svd.S().column_vector();
    let (u, v) = (svd.U(), svd.V());
    let smax = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    let tol = 1e-10 * smax.max(1.0);
    let rank = (0..s.nrows()).filter(|&i| s[i] > tol).count();
    let mut particular = vec![0.0; p];
    for i in 0..rank {
        let coef = (0..k).map(|r| u[(r, i)] * d[r]).sum::<f64>() / s[i];
        for (j, pj) in particular.iter_mut().enumerate() {
            *pj += coef * v[(j, i)];
        }
    }
    let residual: f64 = (0..k)
        .map(|r| {
            let lhs: f64 = (0..p).map(|j| c_mat[(r, j)] * particular[j]).sum();
            (lhs - d[r]).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    if residual > 1e-8 * (1.0 + norm(&d)) {
        return Err(SolveError::ConflictingConstraints {
            groups: suspects(system, columns.iter().copied()).join(", "),
            residual,
        });
    }
    let null_basis = Mat::from_fn(p, p - rank, |j, t| v[(j, rank + t)]);
    Ok(ParamReduction { columns, particular, null_basis })
}

fn merge_row(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (c, v) in row {
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => out.push((c, v)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

/// Unit-norm column scaling; fails on an empty column.
fn equilibrate(a: &Csr) -> Result<(Csr, Vec<f64>), ()> {
    let mut col_norm = vec![0.0; a.ncols];
    for row in &a.rows {
        for &(c, v) in row {
            col_norm[c] += v * v;
        }
    }
    if col_norm.iter().any(|&s| s == 0.0) {
        return Err(());
    }
    let scale: Vec<f64> = col_norm.iter().map(|s| 1.0 / s.sqrt()).collect();
    let rows = a.rows.iter().map(|row| row.iter().map(|&(c, v)| (c, v * scale[c])).collect()).collect();
    Ok((Csr { ncols: a.ncols, rows }, scale))
}

/// Sparse LU with iterative refinement on a square system.
fn solve_square(a: &Csr, b: &[f64], opts: &SolveOptions) -> Result<Vec<f64>, ()> {
    let (a, scale) = equilibrate(a)?;
    let lu = a.to_faer().map_err(|_| ())?.sp_lu().map_err(|_| ())?;
    let mut y: Vec<f64> = lu.solve(&col_vec(b)).col(0).iter().copied().collect();
    for _ in 0..opts.refinement_steps {
        let ay = a.mul(&y);
        let r: Vec<f64> = b.iter().zip(&ay).map(|(bi, ai)| bi - ai).collect();
        let dy = lu.solve(&col_vec(&r));
        y.iter_mut().zip(dy.col(0).iter()).for_each(|(yi, d)| *yi += d);
    }
    Ok(y.iter().zip(&scale).map(|(y, s)| y * s).collect())
}

/// Regularized normal equations with iterative refinement.
fn solve_least_squares(a: &Csr, b: &[f64], opts: &SolveOptions) -> Result<Vec<f64>, ()> {
    let (a, scale) = equilibrate(a)?;
    let llt = a.normal_matrix(opts.regularization).map_err(|_| ())?.sp_cholesky(Side::Lower).map_err(|_| ())?;
    let mut y: Vec<f64> = llt.solve(&col_vec(&a.mul_t(b))).col(0).iter().copied().collect();
    for _ in 0..opts.refinement_steps {
        let ay = a.mul(&y);
        let r: Vec<f64> = b.iter().zip(&ay).map(|(bi, ai)| bi - ai).collect();
        let dy = llt.solve(&col_vec(&a.mul_t(&r)));
        y.iter_mut().zip(dy.col(0).iter()).for_each(|(yi, d)| *yi += d);
    }
    Ok(y.iter().zip(&scale).map(|(y, s)| y * s).collect())
}

/// Solves the augmented system and reconstructs every vertex position.
pub fn solve(system: &SparseSystem, mesh: &Mesh) -> Result<WarpField, SolveError> {
    solve_with(system, mesh, &SolveOptions::default())
}

pub fn solve_with(system: &SparseSystem, mesh: &Mesh, opts: &SolveOptions) -> Result<WarpField, SolveError> {
    let start = Instant::now();
    let param_cols: BTreeSet<usize> = system.params.iter().map(|&(_, c)| c).collect();

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); system.nrows];
    for &(r, c, v) in &merge_triplets(system.triplets.clone()) {
        rows[r].push((c, v));
    }

    // exact rows: pin single free columns, collect parameter equalities
    let mut fixed: BTreeMap<usize, f64> = BTreeMap::new();
    let mut equalities = Vec::new();
    for (r, kind) in system.row_kinds.iter().enumerate() {
        if matches!(kind, RowKind::Operator { .. }) {
            continue;
        }
        let row = &rows[r];
        match row.as_slice() {
            [(c, v)] if !param_cols.contains(c) => {
                let value = system.rhs[r] / v;
                if let Some(prev) = fixed.insert(*c, value) {
                    if (prev - value).abs() > 1e-9 * (1.0 + value.abs()) {
                        return Err(SolveError::ConflictingConstraints { groups: "boundary".into(), residual: (prev - value).abs() });
                    }
                }
            }
            [] => {}
            terms if terms.iter().all(|(c, _)| param_cols.contains(c)) => {
                equalities.push((terms.to_vec(), system.rhs[r]));
            }
            _ => {
                return Err(SolveError::ConflictingConstraints {
                    groups: suspects(system, row.iter().map(|t| t.0)).join(", "),
                    residual: f64::NAN,
                })
            }
        }
    }
    let reduction = if equalities.is_empty() {
        None
    } else {
        Some(reduce_param_equalities(system, &equalities)?)
    };

    // reduced column numbering
    let mut new_col = vec![usize::MAX; system.ncols];
    let mut ncols = 0;
    for c in 0..system.ncols {
        let reduced_away = fixed.contains_key(&c)
            || reduction.as_ref().is_some_and(|red| red.columns.binary_search(&c).is_ok());
        if !reduced_away {
            new_col[c] = ncols;
            ncols += 1;
        }
    }
    let null_offset = ncols;
    if let Some(red) = &reduction {
        ncols += red.null_basis.ncols();
    }

    // reduced form of an original column: entries plus constant offset
    let expand = |c: usize| -> (Vec<(usize, f64)>, f64) {
        if let Some(&value) = fixed.get(&c) {
            (Vec::new(), value)
        } else if let Some((red, j)) =
            reduction.as_ref().and_then(|red| red.columns.binary_search(&c).ok().map(|j| (red, j)))
        {
            let entries = (0..red.null_basis.ncols()).map(|t| (null_offset + t, red.null_basis[(j, t)])).collect();
            (entries, red.particular[j])
        } else {
            (vec![(new_col[c], 1.0)], 0.0)
        }
    };
    let n = system.vertex_count();
    let mut a_rows = Vec::new();
    let mut b = Vec::new();
    let mut row_coord = Vec::new();
    for (r, kind) in system.row_kinds.iter().enumerate() {
        let coord = match *kind {
            RowKind::Operator { vertex, axis: Axis::X } => vertex,
            RowKind::Operator { vertex, axis: Axis::Y } => n + vertex,
            RowKind::Dirichlet { .. } | RowKind::Fixed { .. } => continue,
        };
        let mut rhs = system.rhs[r];
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &(c, v) in &rows[r] {
            let (entries, offset) = expand(c);
            rhs -= v * offset;
            for (k, e) in entries {
                *acc.entry(k).or_insert(0.0) += v * e;
            }
        }
        let row: Vec<(usize, f64)> = acc.into_iter().filter(|&(_, v)| v != 0.0).collect();
        if !row.is_empty() {
            a_rows.push(row);
            b.push(rhs);
            row_coord.push(coord);
        }
    }
    if ncols == 0 {
        return Err(SolveError::NoFreeUnknowns);
    }
    let a = Csr { ncols, rows: a_rows };
    let square = a.rows.len() == ncols;
    let singular = || SolveError::Singular { suspects: suspects(system, param_cols.iter().copied()) };

    let y = if square {
        solve_square(&a, &b, opts).map_err(|_| singular())?
    } else {
        match opts.method {
            SolveMethod::Energy => {
                // derivative of each constrained coordinate with respect to the reduced unknowns
                let tangent = |coord: usize| -> Vec<(usize, f64)> {
                    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                    let mut add = |c: usize, coef: f64| {
                        for (k, e) in expand(c).0 {
                            *acc.entry(k).or_insert(0.0) += coef * e;
                        }
                    };
                    match &system.coords[coord] {
                        CoordBinding::Free(c) => add(*c, 1.0),
                        CoordBinding::Affine { terms, .. } => terms.iter().for_each(|&(c, k)| add(c, k)),
                    }
                    acc.into_iter().collect()
                };
                let mut projected = vec![Vec::new(); ncols];
                let mut pb = vec![0.0; ncols];
                for (k, row) in a.rows.iter().enumerate() {
                    for (j, pj) in tangent(row_coord[k]) {
                        projected[j].extend(row.iter().map(|&(c, v)| (c, pj * v)));
                        pb[j] += pj * b[k];
                    }
                }
                let g = Csr { ncols, rows: projected.into_iter().map(merge_row).collect() };
                solve_square(&g, &pb, opts).map_err(|_| singular())?
            }
            SolveMethod::LeastSquares | SolveMethod::Anchored => {
                if a.rows.len() < ncols {
                    return Err(SolveError::Underdetermined { rows: a.rows.len(), cols: ncols });
                }
                let mut y = solve_least_squares(&a, &b, opts).map_err(|_| singular())?;
                if opts.method == SolveMethod::Anchored {
                    // reduced columns that carry one free coordinate each
                    let mut local = vec![usize::MAX; ncols];
                    let mut owner = Vec::new();
                    for c in 0..system.ncols {
                        if new_col[c] != usize::MAX && !param_cols.contains(&c) {
                            local[new_col[c]] = owner.len();
                            owner.push(new_col[c]);
                        }
                    }
                    let mut rows = Vec::new();
                    let mut rhs = Vec::new();
                    for (k, row) in a.rows.iter().enumerate() {
                        let own = match system.coords[row_coord[k]] {
                            CoordBinding::Free(c) if new_col[c] != usize::MAX && !param_cols.contains(&c) => true,
                            _ => false,
                        };
                        if !own {
                            continue;
                        }
                        let mut r = b[k];
                        let mut entries = Vec::new();
                        for &(c, v) in row {
                            if local[c] == usize::MAX {
                                r -= v * y[c];
                            } else {
                                entries.push((local[c], v));
                            }
                        }
                        rows.push(entries);
                        rhs.push(r);
                    }
                    if !owner.is_empty() && rows.len() == owner.len() {
                        let inner = Csr { ncols: owner.len(), rows };
                        let z = solve_square(&inner, &rhs, opts).map_err(|_| singular())?;
                        for (j, &col) in owner.iter().enumerate() {
                            y[col] = z[j];
                        }
                    }
                }
                y
            }
        }
    };
    if y.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    let ay = a.mul(&y);
    let residual: Vec<f64> = b.iter().zip(&ay).map(|(bi, ai)| bi - ai).collect();
    let residual_norm = norm(&residual);
    let relative_residual = residual_norm / norm(&b).max(f64::MIN_POSITIVE);
    if square && residual_norm > opts.residual_tolerance * norm(&b).max(1.0) {
        return Err(SolveError::Inaccurate { relative: relative_residual, tolerance: opts.residual_tolerance });
    }

    // back to the original unknowns
    let mut x = vec![0.0; system.ncols];
    for c in 0..system.ncols {
        if let Some(&v) = fixed.get(&c) {
            x[c] = v;
        } else if new_col[c] != usize::MAX {
            x[c] = y[new_col[c]];
        }
    }
    if let Some(red) = &reduction {
        for (j, &c) in red.columns.iter().enumerate() {
            x[c] = red.particular[j]
                + (0..red.null_basis.ncols())
                    .map(|t| red.null_basis[(j, t)] * y[null_offset + t])
                    .sum::<f64>();
        }
    }
    let eval = |b: &CoordBinding| match b {
        CoordBinding::Free(c) => x[*c],
        CoordBinding::Affine { terms, constant } => terms.iter().map(|&(c, k)| k * x[c]).sum::<f64>() + constant,
    };
    let n = system.vertex_count();
    let positions: Vec<Point2> =
        (0..n).map(|i| Point2::new(eval(&system.coords[i]), eval(&system.coords[n + i]))).collect();

    let jac = jacobian_of_map(mesh, &positions)?;
    let min_jacobian = jac.iter().copied().fold(f64::INFINITY, f64::min);
    if opts.reject_foldovers {
        let bad: Vec<usize> = jac.iter().enumerate().filter(|(_, &j)| !(j > 0.0)).map(|(f, _)| f).collect();
        if !bad.is_empty() {
            return Err(SolveError::Foldover { faces: bad });
        }
    }
    for w in &system.warnings {
        log::warn!("{w}");
    }
    Ok(WarpField {
        positions,
        params: system.params.iter().map(|&(k, c)| (k, x[c])).collect(),
        report: SolveReport {
            rows: a.rows.len(),
            cols: ncols,
            square,
            residual_norm,
            relative_residual,
            min_jacobian,
            warnings: system.warnings.clone(),
            elapsed: start.elapsed(),
        },
    })
}

/// Assembles, constrains and solves in one go.
pub fn solve_beltrami(
    mesh: &Mesh,
    coeffs: &CoefficientField,
    target: TargetRect,
    constraints: &ConstraintSet,
) -> Result<WarpField, SolveError> {
    let system = assemble_laplacian(mesh, coeffs)?;
    let system = apply_boundary_conditions(system, mesh, target)?;
    let system = augment_chessboard_constraints(system, constraints, mesh)?;
    let system = augment_deformation_constraints(system, constraints, mesh)?;
    solve(&system, mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beltrami::{coefficients_from_mu, BeltramiField, Coefficients};
    use crate::mesh::{build_grid_mesh, build_regular_mesh, GridDims};
    use num_complex::Complex64;

    fn identity_coeffs(mesh: &Mesh) -> CoefficientField {
        CoefficientField(vec![Coefficients::IDENTITY; mesh.face_count()])
    }

    fn cot(a: Point2, b: Point2, c: Point2) -> f64 {
        // cotangent of the angle at a
        let (u, v) = (b - a, c - a);
        u.dot(v) / u.cross(v).abs()
    }

    #[test]
    fn identity_stiffness_is_cotangent_laplacian() {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(3.0, 0.0),
            Point2::new(3.0, 2.0),
            Point2::new(0.0, 2.0),
            Point2::new(1.3, 0.7),
        ];
        let faces = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
        let mesh = Mesh::new(3.0, 2.0, pts.clone(), faces.clone()).unwrap();
        let k = stiffness_triplets(&mesh, &identity_coeffs(&mesh)).unwrap();
        let mut oracle: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for f in &faces {
            for e in 0..3 {
                let (i, j, o) = (f[e], f[(e + 1) % 3], f[(e + 2) % 3]);
                let w = 0.5 * cot(pts[o], pts[i], pts[j]);
                *oracle.entry((i, j)).or_default() -= w;
                *oracle.entry((j, i)).or_default() -= w;
                *oracle.entry((i, i)).or_default() += w;
                *oracle.entry((j, j)).or_default() += w;
            }
        }
        let got: BTreeMap<(usize, usize), f64> = k.into_iter().map(|(r, c, v)| ((r, c), v)).collect();
        for (key, v) in &oracle {
            let g = got.get(key).copied().unwrap_or(0.0);
            assert!((g - v).abs() < 1e-12, "{key:?}: {g} vs {v}");
        }
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let mesh = build_regular_mesh(7.0, 5.0, 40).unwrap();
        let mu = BeltramiField((0..mesh.face_count()).map(|f| Complex64::new(0.3 * (f as f64).sin(), 0.2)).collect());
        let c = coefficients_from_mu(&mu).unwrap();
        let out = apply_operator(&mesh, &c, &vec![4.5; mesh.vertex_count()]).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn uniform_squeeze_is_reproduced() {
        let mesh = build_grid_mesh(8.0, 6.0, GridDims { cols: 8, rows: 6 }).unwrap();
        for w in [0.75, 0.5, 0.25] {
            let mu = BeltramiField::constant(mesh.face_count(), Complex64::new((w - 1.0) / (w + 1.0), 0.0));
            let c = coefficients_from_mu(&mu).unwrap();
            let target = TargetRect { width: 8.0 * w, height: 6.0 };
            let field = solve_beltrami(&mesh, &c, target, &ConstraintSet::default()).unwrap();
            assert!(field.report.square);
            for (p, q) in mesh.vertices().iter().zip(&field.positions) {
                assert!((q.x - w * p.x).abs() < 1e-10 && (q.y - p.y).abs() < 1e-10, "{p:?} -> {q:?}");
            }
        }
    }

    #[test]
    fn boundary_rows_pin_and_slide() {
        let mesh = build_grid_mesh(4.0, 4.0, GridDims { cols: 4, rows: 4 }).unwrap();
        let sys = assemble_laplacian(&mesh, &identity_coeffs(&mesh)).unwrap();
        let sys = apply_boundary_conditions(sys, &mesh, TargetRect { width: 2.0, height: 4.0 }).unwrap();
        let n = mesh.vertex_count();
        // corner 0 is pinned in both coordinates
        assert!(matches!(sys.row_kinds[0], RowKind::Dirichlet { .. }));
        assert!(matches!(sys.row_kinds[n], RowKind::Dirichlet { .. }));
        // top edge vertex (2, 4): v pinned to the height, u keeps its operator row
        let top = 4 * 5 + 2;
        assert!(matches!(sys.row_kinds[top], RowKind::Operator { .. }));
        assert_eq!(sys.row_kinds[n + top], RowKind::Dirichlet { vertex: top, axis: Axis::Y });
        assert_eq!(sys.rhs[n + top], 4.0);
        let right = 2 * 5 + 4;
        assert_eq!(sys.rhs[right], 2.0);
    }

    #[test]
    fn rejects_bad_target() {
        let mesh = build_regular_mesh(4.0, 4.0, 9).unwrap();
        let sys = assemble_laplacian(&mesh, &identity_coeffs(&mesh)).unwrap();
        let err = apply_boundary_conditions(sys, &mesh, TargetRect { width: 0.0, height: 4.0 }).unwrap_err();
        assert!(matches!(err, SolveError::InvalidTarget { .. }));
    }

    #[test]
    fn object_moves_rigidly() {
        let mesh = build_grid_mesh(10.0, 10.0, GridDims { cols: 10, rows: 10 }).unwrap();
        let mu = BeltramiField::constant(mesh.face_count(), Complex64::new(-1.0 / 3.0, 0.0));
        let c = coefficients_from_mu(&mu).unwrap();
        let object: Vec<usize> = [(4, 4), (5, 4), (6, 4), (4, 5), (5, 5), (6, 5), (4, 6), (5, 6), (6, 6)]
            .iter()
            .map(|&(x, y)| y * 11 + x)
            .collect();
        let cs = ConstraintSet { objects: vec![object.clone()], ..Default::default() };
        let field = solve_beltrami(&mesh, &c, TargetRect { width: 5.0, height: 10.0 }, &cs).unwrap();
        assert!(!field.report.square);
        let r = field.object_scale().unwrap();
        let tx = field.param(ParamKind::ObjectShift { object: 0, axis: Axis::X }).unwrap();
        let ty = field.param(ParamKind::ObjectShift { object: 0, axis: Axis::Y }).unwrap();
        assert!(r > 0.0);
        for &v in &object {
            let (p, q) = (mesh.vertices()[v], field.positions[v]);
            assert!((q.x - (r * p.x + tx)).abs() < 1e-12);
            assert!((q.y - (r * p.y + ty)).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_object_scale_is_honored() {
        let mesh = build_grid_mesh(10.0, 10.0, GridDims { cols: 10, rows: 10 }).unwrap();
        let c = coefficients_from_mu(&BeltramiField::constant(mesh.face_count(), Complex64::new(-1.0 / 3.0, 0.0))).unwrap();
        let object: Vec<usize> = [(4, 4), (5, 4), (4, 5), (5, 5)].iter().map(|&(x, y)| y * 11 + x).collect();
        let cs = ConstraintSet { objects: vec![object], ..Default::default() };
        let sys = assemble_laplacian(&mesh, &c).unwrap();
        let sys = apply_boundary_conditions(sys, &mesh, TargetRect { width: 5.0, height: 10.0 }).unwrap();
        let mut sys = augment_deformation_constraints(sys, &cs, &mesh).unwrap();
        sys.fix_param(ParamKind::ObjectScale, 0.3).unwrap();
        assert!(sys.fix_param(ParamKind::ChessScale, 1.0).is_err());
        let field = solve(&sys, &mesh).unwrap();
        assert!((field.object_scale().unwrap() - 0.3).abs() < 1e-12);
        assert!(field.report.min_jacobian > 0.0);
    }

    #[test]
    fn claimed_vertices_split_a_line() {
        let mesh = build_grid_mesh(8.0, 4.0, GridDims { cols: 8, rows: 4 }).unwrap();
        let object = crate::mesh::faces_for_polygon(
            &mesh,
            &[Point2::new(3.2, 1.2), Point2::new(4.8, 1.2), Point2::new(4.8, 2.8), Point2::new(3.2, 2.8)],
        )
        .unwrap();
        let line = crate::mesh::faces_for_polyline(&mesh, &[Point2::new(0.5, 2.0), Point2::new(7.5, 2.0)]).unwrap();
        let regions = RegionModel::from_face_sets(&mesh, vec![object], vec![line]);
        let cs = ConstraintSet::from_regions(&mesh, &regions, false);
        assert_eq!(cs.lines.len(), 2);
        let xs = |g: &Vec<usize>| g.iter().map(|&v| mesh.vertices()[v].x).fold(f64::NAN, f64::max);
        assert!(xs(&cs.lines[0]) < 4.0 || xs(&cs.lines[1]) < 4.0);
        for g in &cs.lines {
            assert!(g.iter().all(|v| !cs.objects[0].contains(v)));
        }
    }

    #[test]
    fn contradictory_boundary_constraints() {
        let mesh = build_grid_mesh(4.0, 4.0, GridDims { cols: 4, rows: 4 }).unwrap();
        let sys = assemble_laplacian(&mesh, &identity_coeffs(&mesh)).unwrap();
        let sys = apply_boundary_conditions(sys, &mesh, TargetRect { width: 2.0, height: 4.0 }).unwrap();
        // one object spans the width, another the height: a shared scale cannot match both
        let row: Vec<usize> = (0..5).map(|x| 2 * 5 + x).collect();
        let col: Vec<usize> = (0..5).map(|y| y * 5 + 2).filter(|v| !row.contains(v)).collect();
        let cs = ConstraintSet { objects: vec![row, col], ..Default::default() };
        let sys = augment_deformation_constraints(sys, &cs, &mesh).unwrap();
        let err = solve(&sys, &mesh).unwrap_err();
        assert!(matches!(err, SolveError::ConflictingConstraints { .. }), "{err:?}");
        assert!(err.to_string().contains("objects"));
    }

    #[test]
    fn half_chessboard_is_rejected() {
        let mesh = build_regular_mesh(4.0, 4.0, 9).unwrap();
        let sys = assemble_laplacian(&mesh, &identity_coeffs(&mesh)).unwrap();
        let cs = ConstraintSet { row_bands: vec![vec![0, 1]], ..Default::default() };
        assert_eq!(augment_chessboard_constraints(sys, &cs, &mesh).unwrap_err(), SolveError::InconsistentChessboard);
    }

    #[test]
    fn merging_and_triplet_dump() {
        let merged = merge_overlapping(vec![[1, 2].into(), [5].into(), [2, 3].into()]);
        assert_eq!(merged, vec![vec![1, 2, 3], vec![5]]);
        let mesh = build_regular_mesh(2.0, 2.0, 4).unwrap();
        let sys = assemble_laplacian(&mesh, &identity_coeffs(&mesh)).unwrap();
        let mut buf = Vec::new();
        sys.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# 8 rows 8 cols"));
        assert_eq!(text.lines().filter(|l| l.starts_with("rhs")).count(), 8);
    }
}
