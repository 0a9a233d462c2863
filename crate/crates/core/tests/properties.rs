use std::collections::BTreeMap;

use num_complex::Complex64;
use proptest::prelude::*;

use retarget_core::beltrami::{beltrami_of_map, coefficients_from_mu, jacobian_of_map, BeltramiField, CLAMP_EPSILON};
use retarget_core::clbs::{solve_beltrami, ConstraintSet, TargetRect};
use retarget_core::geometry::Point2;
use retarget_core::labels::{LabelSet, LineLabel, ObjectLabel};
use retarget_core::mesh::{build_grid_mesh, build_regular_mesh, faces_for_polygon, faces_for_polyline, GridDims, RegionModel};
use retarget_core::pipeline::{compute_warp, plan_output, RetargetJob, TargetSpec};
use retarget_core::prescribe::Choice;
use retarget_core::warp::build_inverse_map;

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point2> {
    vec![Point2::new(x0, y0), Point2::new(x1, y0), Point2::new(x1, y1), Point2::new(x0, y1)]
}

fn object_labels(x0: f64, y0: f64, w: f64, h: f64) -> LabelSet {
    LabelSet {
        objects: vec![ObjectLabel { polygon: vec![[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]] }],
        lines: vec![],
    }
}

fn choice() -> impl Strategy<Value = Choice> {
    prop_oneof![Just(Choice::Even), Just(Choice::Weak), Just(Choice::Strong)]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn mesh_tiles_the_rectangle(w in 5.0f64..400.0, h in 5.0f64..400.0, count in 9usize..800) {
        let mesh = build_regular_mesh(w, h, count).unwrap();
        let total: f64 = (0..mesh.face_count()).map(|f| mesh.face_area(f)).sum();
        prop_assert!((total - w * h).abs() <= 1e-9 * w * h);
        prop_assert!((0..mesh.face_count()).all(|f| mesh.face_area(f) > 0.0));
        let edges = mesh.edge_face_counts().unwrap();
        for (&(a, b), &c) in &edges {
            prop_assert!(c == 1 || c == 2);
            if c == 1 {
                let (ta, tb) = (mesh.tags()[a], mesh.tags()[b]);
                prop_assert!(ta.is_boundary() && tb.is_boundary());
            }
        }
    }

    #[test]
    fn polygon_selection_splits_by_centroid(
        x0 in 0.0f64..50.0, y0 in 0.0f64..40.0, dw in 5.0f64..50.0, dh in 5.0f64..35.0,
    ) {
        let mesh = build_regular_mesh(100.0, 80.0, 300).unwrap();
        let poly = rect(x0, y0, x0 + dw, y0 + dh);
        let inside = faces_for_polygon(&mesh, &poly).unwrap();
        for f in 0..mesh.face_count() {
            let c = mesh.face_centroid(f);
            let strictly_in = c.x > x0 && c.x < x0 + dw && c.y > y0 && c.y < y0 + dh;
            if strictly_in {
                prop_assert!(inside.contains(&f));
            }
            if inside.contains(&f) && !strictly_in {
                // selected from outside only by touching the boundary
                let b = mesh.face_bbox(f);
                prop_assert!(b.max.x >= x0 && b.min.x <= x0 + dw && b.max.y >= y0 && b.min.y <= y0 + dh);
            }
        }
    }

    #[test]
    fn stripes_contain_objects_and_regions_cover(
        x0 in 5.0f64..60.0, y0 in 5.0f64..40.0, dw in 5.0f64..30.0, dh in 5.0f64..30.0,
        lx in 1.0f64..99.0, ly in 1.0f64..79.0,
    ) {
        let mesh = build_regular_mesh(100.0, 80.0, 300).unwrap();
        let line = vec![Point2::new(0.5, 0.5), Point2::new(lx, ly)];
        let regions = RegionModel::build(&mesh, &[rect(x0, y0, x0 + dw, y0 + dh)], &[line]).unwrap();
        let objects = regions.all_object_faces();
        prop_assert!(!objects.is_empty());
        prop_assert!(objects.is_subset(&regions.stripe_h));
        prop_assert!(objects.is_subset(&regions.stripe_v));
        for f in 0..mesh.face_count() {
            let covered = regions.stripe_h.contains(&f)
                || regions.stripe_v.contains(&f)
                || objects.contains(&f)
                || regions.all_line_faces().contains(&f);
            prop_assert!(covered != regions.background.contains(&f));
        }
    }

    #[test]
    fn clamping_keeps_coefficients_valid(re in -5.0f64..5.0, im in -5.0f64..5.0) {
        let mu = Complex64::new(re, im);
        let clamped = BeltramiField::constant(3, mu).clamped(CLAMP_EPSILON);
        let c = clamped.values()[0];
        prop_assert!(c.norm() <= 1.0 - CLAMP_EPSILON + 1e-15);
        if mu.norm() < 1.0 - CLAMP_EPSILON {
            prop_assert_eq!(c, mu);
        }
        let coeffs = coefficients_from_mu(&clamped).unwrap();
        let a = coeffs.0[0];
        // the coefficient matrix always has unit determinant
        prop_assert!((a.determinant() - 1.0).abs() < 1e-6 * a.alpha1.max(a.alpha3).powi(2));
        prop_assert!(a.alpha1 > 0.0 && a.alpha3 > 0.0);
    }

    #[test]
    fn real_coefficients_have_reciprocal_diagonal(rho in -0.99f64..0.99) {
        let c = coefficients_from_mu(&BeltramiField::constant(1, Complex64::new(rho, 0.0))).unwrap().0[0];
        prop_assert!((c.alpha1 * c.alpha3 - 1.0).abs() < 1e-9);
        prop_assert_eq!(c.alpha2, 0.0);
    }

    #[test]
    fn label_json_round_trips(
        pts in proptest::collection::vec((0.0f64..500.0, 0.0f64..500.0), 3..8),
        line in proptest::collection::vec((0.0f64..500.0, 0.0f64..500.0), 2..5),
    ) {
        let labels = LabelSet {
            objects: vec![ObjectLabel { polygon: pts.iter().map(|&(x, y)| [x, y]).collect() }],
            lines: vec![LineLabel { polyline: line.iter().map(|&(x, y)| [x, y]).collect() }],
        };
        prop_assert_eq!(LabelSet::from_json(&labels.to_json()).unwrap(), labels);
    }

    #[test]
    fn output_dimensions_follow_the_ratio(w in 2u32..3000, h in 2u32..3000, ratio in 0.05f64..3.0) {
        let plan = plan_output(w, h, TargetSpec::Ratio(ratio)).unwrap();
        prop_assert_eq!(plan.out_height, h);
        prop_assert_eq!(plan.out_width, ((ratio * w as f64).round() as u32).max(1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn constant_real_coefficient_gives_affine_squeeze(k in -0.8f64..0.8) {
        let (m, n) = (60.0, 45.0);
        let mesh = build_regular_mesh(m, n, 300).unwrap();
        let coeffs = coefficients_from_mu(&BeltramiField::constant(mesh.face_count(), Complex64::new(k, 0.0))).unwrap();
        let w = (1.0 + k) / (1.0 - k);
        let field = solve_beltrami(&mesh, &coeffs, TargetRect { width: w * m, height: n }, &ConstraintSet::default()).unwrap();
        for (p, q) in mesh.vertices().iter().zip(&field.positions) {
            prop_assert!((q.x - w * p.x).abs() <= 1e-8 * m && (q.y - p.y).abs() <= 1e-8 * m);
        }
    }

    #[test]
    fn objects_move_by_one_similarity(
        x0 in 10.0f64..60.0, y0 in 10.0f64..40.0, dw in 8.0f64..30.0, dh in 8.0f64..30.0,
        ratio in 0.45f64..0.95, choice in choice(),
    ) {
        let job = RetargetJob { mesh_vertices: 400, choice, ..RetargetJob::with_ratio(ratio) };
        let sol = compute_warp(120, 90, &object_labels(x0, y0, dw, dh), &job).unwrap();
        let r = sol.metrics.object_scale.unwrap();
        let cs = ConstraintSet::from_regions(&sol.source_mesh, &sol.regions, false);
        for group in &cs.objects {
            let (p0, q0) = (sol.source_mesh.vertices()[group[0]], sol.positions[group[0]]);
            for &v in group {
                let expect = q0 + (sol.source_mesh.vertices()[v] - p0) * r;
                prop_assert!((sol.positions[v] - expect).norm() < 1e-9);
            }
        }
        let mu = beltrami_of_map(&sol.source_mesh, &sol.positions).unwrap();
        for f in sol.regions.all_object_faces() {
            prop_assert!(mu.values()[f].norm() < 1e-10);
        }
    }

    #[test]
    fn chessboard_bands_share_one_scale(
        x0 in 10.0f64..60.0, y0 in 10.0f64..40.0, dw in 8.0f64..30.0, dh in 8.0f64..30.0,
        ratio in 0.45f64..0.95,
    ) {
        let job = RetargetJob { mesh_vertices: 400, chessboard: true, ..RetargetJob::with_ratio(ratio) };
        let sol = compute_warp(120, 90, &object_labels(x0, y0, dw, dh), &job).unwrap();
        let r = sol.metrics.chess_scale.unwrap();
        let cs = ConstraintSet::from_regions(&sol.source_mesh, &sol.regions, true);
        let src = sol.source_mesh.vertices();
        for band in &cs.row_bands {
            let c = sol.positions[band[0]].y - r * src[band[0]].y;
            for &v in band {
                prop_assert!((sol.positions[v].y - (r * src[v].y + c)).abs() < 1e-9);
            }
        }
        for band in &cs.column_bands {
            let c = sol.positions[band[0]].x - r * src[band[0]].x;
            for &v in band {
                prop_assert!((sol.positions[v].x - (r * src[v].x + c)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn warps_are_bijective(
        x0 in 10.0f64..60.0, y0 in 10.0f64..40.0, dw in 8.0f64..40.0, dh in 8.0f64..40.0,
        ratio in 0.25f64..0.95, choice in choice(), chessboard in any::<bool>(),
    ) {
        let job = RetargetJob { mesh_vertices: 400, choice, chessboard, ..RetargetJob::with_ratio(ratio) };
        let sol = compute_warp(120, 90, &object_labels(x0, y0, dw, dh), &job).unwrap();
        let jac = jacobian_of_map(&sol.source_mesh, &sol.positions).unwrap();
        prop_assert!(jac.iter().all(|&j| j > 0.0));
    }

    #[test]
    fn unit_ratio_is_the_identity(
        x0 in 10.0f64..60.0, y0 in 10.0f64..40.0, dw in 8.0f64..40.0, dh in 8.0f64..40.0,
        choice in choice(), chessboard in any::<bool>(),
    ) {
        let job = RetargetJob { mesh_vertices: 300, choice, chessboard, ..RetargetJob::with_ratio(1.0) };
        let sol = compute_warp(120, 90, &object_labels(x0, y0, dw, dh), &job).unwrap();
        for (p, q) in sol.source_mesh.vertices().iter().zip(&sol.positions) {
            prop_assert!((*q - *p).norm() < 1e-8);
        }
    }

    #[test]
    fn inverse_map_round_trips(ratio in 0.3f64..0.95, s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let job = RetargetJob { mesh_vertices: 300, choice: Choice::Weak, ..RetargetJob::with_ratio(ratio) };
        let sol = compute_warp(120, 90, &object_labels(50.0, 30.0, 20.0, 20.0), &job).unwrap();
        let map = build_inverse_map(&sol.source_mesh, &sol.positions).unwrap();
        for f in 0..sol.source_mesh.face_count() {
            let tri = sol.source_mesh.face_points(f);
            let (a, b) = (s.min(1.0 - t), t.min(1.0 - s));
            let p = tri[0] + (tri[1] - tri[0]) * a + (tri[2] - tri[0]) * b;
            let q = map.push_forward(f, p);
            prop_assert!((map.pull_back(q).unwrap() - p).norm() < 1e-7);
        }
    }
}

#[test]
fn row_midline_meets_one_row_of_faces() {
    let mesh = build_grid_mesh(4.0, 4.0, GridDims { cols: 4, rows: 4 }).unwrap();
    let faces = faces_for_polyline(&mesh, &[Point2::new(0.0, 1.5), Point2::new(4.0, 1.5)]).unwrap();
    assert_eq!(faces.len(), 8);
    assert!(faces.iter().all(|&f| (mesh.face_centroid(f).y - 1.5).abs() < 0.5));
}

#[test]
fn segment_on_an_edge_takes_both_sides() {
    let mesh = build_grid_mesh(4.0, 4.0, GridDims { cols: 4, rows: 4 }).unwrap();
    let faces = faces_for_polyline(&mesh, &[Point2::new(1.2, 2.0), Point2::new(1.8, 2.0)]).unwrap();
    let mut rows: BTreeMap<bool, usize> = BTreeMap::new();
    for &f in &faces {
        *rows.entry(mesh.face_centroid(f).y > 2.0).or_default() += 1;
    }
    assert_eq!(rows.len(), 2, "faces above and below the edge: {faces:?}");
}
