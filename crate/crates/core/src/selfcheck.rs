//! Invariant self-test run from the command line.
//!
//! Every check uses a fixed seed so reports are reproducible.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::beltrami::{beltrami_of_map, coefficients_from_mu, divergence, face_linear_parts, BeltramiField};
use crate::clbs::{solve_beltrami, ConstraintSet, TargetRect};
use crate::geometry::Point2;
use crate::labels::{LabelSet, ObjectLabel};
use crate::mesh::{build_grid_mesh, build_regular_mesh, GridDims, Mesh};
use crate::pipeline::{compute_warp, RetargetJob};
use crate::prescribe::Choice;

pub const SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, tolerance: f64) -> CheckResult {
    CheckResult { name, passed: value <= tolerance, detail: format!("max error {value:.3e} (tolerance {tolerance:.0e})") }
}

/// Grid mesh with interior vertices moved inside their cells.
pub fn jittered_mesh(rng: &mut impl Rng, cols: usize, rows: usize) -> Mesh {
    let base = build_grid_mesh(cols as f64, rows as f64, GridDims { cols, rows }).expect("valid grid");
    let verts = base
        .vertices()
        .iter()
        .zip(base.tags())
        .map(|(p, t)| {
            if t.is_boundary() {
                *p
            } else {
                Point2::new(p.x + rng.gen_range(-0.3..0.3), p.y + rng.gen_range(-0.3..0.3))
            }
        })
        .collect();
    Mesh::new(cols as f64, rows as f64, verts, base.faces().to_vec()).expect("jitter keeps faces positive")
}

fn divergence_identities() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mesh = jittered_mesh(&mut rng, 6, 5);
        let warped: Vec<Point2> =
            mesh.vertices().iter().map(|p| Point2::new(p.x + rng.gen_range(-1.0..1.0), p.y + rng.gen_range(-1.0..1.0))).collect();
        let parts = face_linear_parts(&mesh, &warped).expect("source faces are non-degenerate");
        let pick = |f: fn(&crate::beltrami::FaceLinearPart) -> f64| parts.iter().map(f).collect::<Vec<_>>();
        let (a, b, c, d) = (pick(|p| p.a), pick(|p| p.b), pick(|p| p.c), pick(|p| p.d));
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let d1 = divergence(&mesh, &neg(&d), &c).expect("lengths match");
        let d2 = divergence(&mesh, &neg(&b), &a).expect("lengths match");
        for (i, t) in mesh.tags().iter().enumerate() {
            if !t.is_boundary() {
                worst = worst.max(d1[i].abs()).max(d2[i].abs());
            }
        }
    }
    check("divergence identities at interior vertices", worst, 1e-12)
}

fn scaling_reproduction() -> CheckResult {
    let mesh = build_regular_mesh(60.0, 45.0, 300).expect("valid mesh");
    let mut worst: f64 = 0.0;
    for w in [0.75, 0.5, 0.25] {
        let mu = BeltramiField::constant(mesh.face_count(), Complex64::new((w - 1.0) / (w + 1.0), 0.0));
        let coeffs = coefficients_from_mu(&mu).expect("|mu| < 1");
        let target = TargetRect { width: w * 60.0, height: 45.0 };
        match solve_beltrami(&mesh, &coeffs, target, &ConstraintSet::default()) {
            Ok(f) => {
                for (p, q) in mesh.vertices().iter().zip(&f.positions) {
                    worst = worst.max((q.x - w * p.x).abs()).max((q.y - p.y).abs());
                }
            }
            Err(_) => worst = f64::INFINITY,
        }
    }
    check("uniform squeeze reproduced", worst, 1e-8 * 60.0)
}

fn random_field_is_bijective() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mesh = build_regular_mesh(40.0, 30.0, 400).expect("valid mesh");
    let mu = BeltramiField(
        (0..mesh.face_count())
            .map(|_| Complex64::from_polar(rng.gen_range(0.0..0.6), rng.gen_range(0.0..std::f64::consts::TAU)))
            .collect(),
    );
    let coeffs = coefficients_from_mu(&mu).expect("|mu| < 1");
    let result = solve_beltrami(&mesh, &coeffs, TargetRect { width: 30.0, height: 30.0 }, &ConstraintSet::default());
    match result {
        Ok(f) => CheckResult {
            name: "random |mu| < 1 gives a bijective warp",
            passed: f.report.min_jacobian > 0.0,
            detail: format!("min Jacobian {:.3e}", f.report.min_jacobian),
        },
        Err(e) => CheckResult { name: "random |mu| < 1 gives a bijective warp", passed: false, detail: e.to_string() },
    }
}

fn square_object() -> LabelSet {
    LabelSet {
        objects: vec![ObjectLabel { polygon: vec![[40.0, 30.0], [70.0, 30.0], [70.0, 60.0], [40.0, 60.0]] }],
        lines: vec![],
    }
}

fn object_rigidity() -> CheckResult {
    let job = RetargetJob { mesh_vertices: 400, ..RetargetJob::with_ratio(0.75) };
    match compute_warp(120, 90, &square_object(), &job) {
        Ok(sol) => {
            let mu = beltrami_of_map(&sol.source_mesh, &sol.positions).expect("non-degenerate warp");
            let worst = sol.regions.all_object_faces().iter().map(|&f| mu.values()[f].norm()).fold(0.0, f64::max);
            check("object faces keep a zero coefficient", worst, 1e-8)
        }
        Err(e) => CheckResult { name: "object faces keep a zero coefficient", passed: false, detail: e.to_string() },
    }
}

fn identity_idempotence() -> CheckResult {
    let mut worst: f64 = 0.0;
    for choice in [Choice::Even, Choice::Weak, Choice::Strong] {
        for chessboard in [false, true] {
            let job = RetargetJob { mesh_vertices: 300, choice, chessboard, ..RetargetJob::with_ratio(1.0) };
            match compute_warp(120, 90, &square_object(), &job) {
                Ok(sol) => {
                    for (p, q) in sol.source_mesh.vertices().iter().zip(&sol.positions) {
                        worst = worst.max((*q - *p).norm());
                    }
                }
                Err(_) => worst = f64::INFINITY,
            }
        }
    }
    check("ratio 1 gives the identity", worst, 1e-8)
}

/// Runs every check; the suite passes when all results pass.
pub fn run_self_checks() -> Vec<CheckResult> {
    vec![
        divergence_identities(),
        scaling_reproduction(),
        random_field_is_bijective(),
        object_rigidity(),
        identity_idempotence(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_self_checks_pass() {
        for r in run_self_checks() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
