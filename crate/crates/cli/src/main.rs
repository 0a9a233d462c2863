//! `retarget`: resize an image to a new aspect ratio while keeping labelled
//! objects rigid and labelled lines straight.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use retarget_core::beltrami::beltrami_of_map;
use retarget_core::labels::{parse_labels, LabelSet};
use retarget_core::pipeline::{retarget, RetargetJob, TargetSpec, WarpSolution};
use retarget_core::prescribe::{Choice, DEFAULT_BETA};
use retarget_core::selfcheck::run_self_checks;
use retarget_core::warp::RasterImage;
use retarget_core::{FailureKind, RetargetError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ChoiceArg {
    /// Objects kept, the squeeze spread evenly over the rest.
    Even,
    /// Rows beside the objects absorb the extra squeeze.
    Weak,
    /// Every column outside the object columns squeezes alike.
    Strong,
}

impl From<ChoiceArg> for Choice {
    fn from(c: ChoiceArg) -> Self {
        match c {
            ChoiceArg::Even => Choice::Even,
            ChoiceArg::Weak => Choice::Weak,
            ChoiceArg::Strong => Choice::Strong,
        }
    }
}

/// Content-aware image retargeting with prescribed Beltrami coefficients.
///
/// Exit codes: 0 success, 2 input error, 3 solver failure, 4 foldover detected.
#[derive(Debug, Parser)]
#[command(name = "retarget", version)]
struct Args {
    /// Source image (PNG or JPEG).
    #[arg(long, required_unless_present = "seed_check")]
    input: Option<PathBuf>,
    /// Output image; the format follows the extension.
    #[arg(long, required_unless_present = "seed_check")]
    output: Option<PathBuf>,
    /// Label document with object polygons and line polylines.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Target width over source width (height kept).
    #[arg(long, conflicts_with_all = ["width", "height"])]
    ratio: Option<f64>,
    /// Exact target width in pixels (requires --height).
    #[arg(long, requires = "height")]
    width: Option<u32>,
    /// Exact target height in pixels (requires --width).
    #[arg(long, requires = "width")]
    height: Option<u32>,
    /// How distortion is distributed over the background.
    #[arg(long, value_enum, default_value_t = ChoiceArg::Even)]
    choice: ChoiceArg,
    /// Keep horizontal and vertical structures near objects straight.
    #[arg(long)]
    chessboard: bool,
    /// Shrink the objects too, for targets narrower than the objects.
    #[arg(long)]
    extremal: bool,
    /// Percent of the target width taken by objects in extremal mode.
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    /// Approximate number of mesh vertices.
    #[arg(long, default_value_t = 1500)]
    mesh_vertices: usize,
    /// Write source and warped meshes as OBJ text.
    #[arg(long)]
    dump_mesh: Option<PathBuf>,
    /// Write the per-face Beltrami coefficient table.
    #[arg(long)]
    dump_mu: Option<PathBuf>,
    /// Write the constrained linear system as `row col value` triplets.
    #[arg(long)]
    dump_system: Option<PathBuf>,
    /// Run the invariant self-test suite and exit.
    #[arg(long)]
    seed_check: bool,
}

struct Failure {
    code: &'static str,
    exit: u8,
    message: String,
}

impl From<RetargetError> for Failure {
    fn from(e: RetargetError) -> Self {
        let kind = e.kind();
        let exit = match kind {
            FailureKind::Input | FailureKind::Extremal => 2,
            FailureKind::Solver => 3,
            FailureKind::Foldover => 4,
        };
        Failure { code: kind.code(), exit, message: e.to_string() }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure { code: "input", exit: 2, message: message.into() }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: "io", exit: 2, message: format!("{}: {e}", path.display()) }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn write_mesh(path: &Path, sol: &WarpSolution) -> Result<(), Failure> {
    let write = || -> std::io::Result<()> {
        let mut out = create(path).map_err(|f| std::io::Error::other(f.message))?;
        let mesh = &sol.source_mesh;
        let n = mesh.vertex_count();
        writeln!(out, "# {} vertices, {} faces per object; y axis up", n, mesh.face_count())?;
        for (name, points, offset) in [("source", mesh.vertices(), 1), ("warped", &sol.positions[..], n + 1)] {
            writeln!(out, "o {name}")?;
            for p in points {
                writeln!(out, "v {:.10} {:.10} 0", p.x, p.y)?;
            }
            for f in mesh.faces() {
                writeln!(out, "f {} {} {}", f[0] + offset, f[1] + offset, f[2] + offset)?;
            }
        }
        out.flush()
    };
    write().map_err(|e| io_failure(path, e))
}

fn write_mu(path: &Path, sol: &WarpSolution) -> Result<(), Failure> {
    let measured = beltrami_of_map(&sol.source_mesh, &sol.positions).map_err(|e| RetargetError::from(e))?;
    let write = || -> std::io::Result<()> {
        let mut out = create(path).map_err(|f| std::io::Error::other(f.message))?;
        writeln!(out, "face prescribed_rho prescribed_tau rho tau abs")?;
        for (f, (p, m)) in sol.prescribed.values().iter().zip(measured.values()).enumerate() {
            writeln!(out, "{f} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e}", p.re, p.im, m.re, m.im, m.norm())?;
        }
        out.flush()
    };
    write().map_err(|e| io_failure(path, e))
}

fn write_system(path: &Path, sol: &WarpSolution) -> Result<(), Failure> {
    let mut out = create(path)?;
    sol.system.write_triplets(&mut out).and_then(|_| out.flush()).map_err(|e| io_failure(path, e))
}

fn seed_check() -> ExitCode {
    let results = run_self_checks();
    let mut failed = 0;
    for r in &results {
        failed += !r.passed as usize;
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("error[selfcheck]: {failed} of {} checks failed", results.len());
        ExitCode::from(3)
    }
}

fn run(args: &Args) -> Result<(), Failure> {
    let (input, output) = match (&args.input, &args.output) {
        (Some(i), Some(o)) => (i, o),
        _ => return Err(input_error("--input and --output are required")),
    };
    let target = match (args.ratio, args.width, args.height) {
        (Some(r), _, _) => TargetSpec::Ratio(r),
        (None, Some(width), Some(height)) => TargetSpec::Dimensions { width, height },
        _ => return Err(input_error("one of --ratio or --width/--height is required")),
    };
    let src = RasterImage::load(input).map_err(|e| input_error(format!("{}: {e}", input.display())))?;
    let labels = match &args.labels {
        Some(path) => parse_labels(path, src.width() as f64, src.height() as f64)
            .map_err(|e| input_error(format!("{}: {e}", path.display())))?,
        None => LabelSet::default(),
    };
    let job = RetargetJob {
        target,
        choice: args.choice.into(),
        chessboard: args.chessboard,
        force_extremal: args.extremal,
        beta: args.beta,
        mesh_vertices: args.mesh_vertices,
    };
    let out = retarget(&src, &labels, &job)?;
    out.image.save(output).map_err(|e| input_error(format!("{}: {e}", output.display())))?;
    let sol = &out.solution;
    if let Some(path) = &args.dump_mesh {
        write_mesh(path, sol)?;
    }
    if let Some(path) = &args.dump_mu {
        write_mu(path, sol)?;
    }
    if let Some(path) = &args.dump_system {
        write_system(path, sol)?;
    }
    let m = &sol.metrics;
    eprintln!(
        "{}x{} -> {}x{}: {} vertices, solve {:.1} ms, min Jacobian {:.4e}{}{}",
        src.width(),
        src.height(),
        out.image.width(),
        out.image.height(),
        m.vertices,
        m.solve_ms,
        m.min_jacobian,
        m.object_scale.map(|r| format!(", object scale {r:.4}")).unwrap_or_default(),
        if m.extremal { ", extremal" } else { "" },
    );
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.seed_check {
        return seed_check();
    }
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.code, f.message);
            ExitCode::from(f.exit)
        }
    }
}
