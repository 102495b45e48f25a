//! Command-line entry points: `rectify` binds the input files to the
//! optimization and writes the rectified image, `synth` generates
//! ground-truth scene bundles, `eval` scores a recovered mesh pair
//! against a bundle, `gradcheck` runs the finite-difference suite.

use clap::{Parser, Subcommand, ValueEnum};
use docrect_core::camera::CameraIntrinsics;
use docrect_core::cloud::PointCloud;
use docrect_core::error::Error;
use docrect_core::features::parse_segments;
use docrect_core::geom::{read_pair, write_obj_2d, write_obj_3d, write_pair, GridDims, Vec2};
use docrect_core::pipeline::{self, Diagnostics, PipelineConfig, PipelineInputs};
use docrect_core::rectify::{lifted_line_straightness, output_region, render, RegionMode, RenderOptions};
use docrect_core::synth::{sample_scene, SceneSpec, SynthBundle};
use docrect_core::{energy, gradcheck};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Bad or missing input files.
const EXIT_INPUT: u8 = 2;
/// The optimization aborted; partial outputs are kept.
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "docrect", version, about = "Document rectification from a point cloud, camera intrinsics and feature segments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimize the mesh pair from a cloud + intrinsics (+ optional
    /// segments) and resample the reference image.
    Rectify(RectifyArgs),
    /// Generate a synthetic scene bundle from a spec file.
    Synth(SynthArgs),
    /// Score a recovered mesh pair against a synthetic bundle.
    Eval(EvalArgs),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RegionArg {
    Auto,
    Boundary,
    Aabb,
    Mesh,
}

#[derive(Parser)]
struct RectifyArgs {
    /// Point cloud, one `x y z` line per point.
    #[arg(long)]
    cloud: PathBuf,
    /// Camera intrinsics file (f, ku, kv, cu, cv).
    #[arg(long)]
    cam: PathBuf,
    /// Reference image (PNG).
    #[arg(long)]
    image: PathBuf,
    /// Feature segments; omit for a feature-free run.
    #[arg(long)]
    segments: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// JSON file overriding optimization parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// How the output rectangle is chosen.
    #[arg(long, value_enum, default_value = "auto")]
    region: RegionArg,
    /// Output resolution of the longer side.
    #[arg(long, default_value_t = 1000)]
    long_side: u32,
    /// Background color as `r,g,b`.
    #[arg(long, default_value = "0,0,0")]
    background: String,
}

#[derive(Parser)]
struct SynthArgs {
    /// Scene spec file (text key-value).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for the bundle.
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the spec's surface sample count.
    #[arg(long)]
    points: Option<usize>,
    /// Override the spec's outlier count.
    #[arg(long)]
    outliers: Option<usize>,
}

#[derive(Parser)]
struct EvalArgs {
    /// Synthetic bundle directory (from `synth`).
    #[arg(long)]
    bundle: PathBuf,
    /// Recovered mesh pair (from `rectify`, `pair.txt`).
    #[arg(long)]
    pair: PathBuf,
    /// Metrics JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Parser)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of consecutive seeds to sweep.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// Relative tolerance.
    #[arg(long, default_value_t = gradcheck::DEFAULT_REL_TOL)]
    tol: f64,
    /// Absolute floor below which any mismatch passes.
    #[arg(long, default_value_t = gradcheck::DEFAULT_ABS_TOL)]
    abs_tol: f64,
}

/// Optional overrides of every tunable, mirroring PipelineConfig and
/// its weight schedule.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    l1: Option<f64>,
    l2: Option<f64>,
    l3: Option<f64>,
    l4: Option<f64>,
    l5: Option<f64>,
    l6: Option<f64>,
    escalation: Option<f64>,
    eps: Option<f64>,
    q_max: Option<usize>,
    rounds: Option<usize>,
    /// Initial grid as [rows, cols].
    dims: Option<[usize; 2]>,
    k: Option<usize>,
    phi: Option<f64>,
    endpoint_tol_factor: Option<f64>,
    straightness_tol: Option<f64>,
    lbfgs_steps: Option<usize>,
    project_lines: Option<bool>,
    arap_iters: Option<usize>,
}

impl ConfigFile {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let s = &mut cfg.schedule;
        macro_rules! take {
            ($($dst:expr, $src:ident;)*) => { $(if let Some(v) = self.$src { $dst = v; })* };
        }
        take! {
            s.l1, l1; s.l2, l2; s.l3, l3; s.l4, l4; s.l5, l5; s.l6, l6;
            s.escalation, escalation; s.eps, eps; s.q_max, q_max; s.rounds, rounds;
            cfg.k, k; cfg.phi, phi; cfg.endpoint_tol_factor, endpoint_tol_factor;
            cfg.straightness_tol, straightness_tol; cfg.lbfgs_steps, lbfgs_steps;
            cfg.project_lines, project_lines; cfg.arap_iters, arap_iters;
        }
        if let Some([n1, n2]) = self.dims {
            cfg.dims = GridDims::new(n1, n2);
        }
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn parse_background(s: &str) -> Option<[u8; 3]> {
    let parts: Vec<u8> = s.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    parts.try_into().ok()
}

fn cmd_rectify(args: &RectifyArgs) -> ExitCode {
    // Load and validate every input before touching the output directory.
    let cloud = match PointCloud::from_file(&args.cloud) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    let cam = match CameraIntrinsics::from_file(&args.cam) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    let reference = match image::open(&args.image) {
        Ok(img) => img.to_rgb8(),
        Err(e) => return fail(EXIT_INPUT, format!("{}: {e}", args.image.display())),
    };
    let segments = match &args.segments {
        Some(p) => match parse_segments(p) {
            Ok(s) => s,
            Err(e) => return fail(EXIT_INPUT, e),
        },
        None => Vec::new(),
    };
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &args.config {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(EXIT_INPUT, format!("{}: {e}", path.display())),
        };
        match serde_json::from_str::<ConfigFile>(&text) {
            Ok(overrides) => overrides.apply(&mut cfg),
            Err(e) => return fail(EXIT_INPUT, format!("{}: {e}", path.display())),
        }
    }
    if let Err(e) = cfg.validate() {
        return fail(EXIT_INPUT, e);
    }
    let Some(background) = parse_background(&args.background) else {
        return fail(EXIT_INPUT, format!("bad background color {:?}", args.background));
    };
    let region_mode = match args.region {
        RegionArg::Auto => RegionMode::Auto,
        RegionArg::Boundary => RegionMode::Boundary,
        RegionArg::Aabb => RegionMode::LineAabb,
        RegionArg::Mesh => RegionMode::MeshAabb,
    };

    if let Err(e) = std::fs::create_dir_all(&args.out) {
        return fail(1, format!("{}: {e}", args.out.display()));
    }
    let inputs = PipelineInputs {
        cloud,
        cam,
        segments,
        image_size: (reference.width() as f64, reference.height() as f64),
    };
    let mut diag = Diagnostics::default();
    let result = pipeline::run(&cfg, inputs, &mut diag);
    // The per-iteration log is worth keeping even when the run aborts.
    if let Err(e) = diag.write_csv(&args.out.join("diag.csv")) {
        return fail(1, e);
    }
    let out = match result {
        Ok(o) => o,
        Err(e @ Error::Diverged(_)) => return fail(EXIT_DIVERGED, e),
        Err(e) => return fail(1, e),
    };

    let write_all = || -> docrect_core::error::Result<()> {
        write_pair(&out.pair, &args.out.join("pair.txt"))?;
        write_obj_3d(&out.pair.space, &args.out.join("space.obj"))?;
        write_obj_2d(&out.pair.plane, &args.out.join("plane.obj"))?;
        let region = output_region(&out.lines, &out.pair.plane, region_mode)?;
        let opts = RenderOptions { long_side: args.long_side, background };
        let rectified = render(&out.pair, &cam, &reference, &region, &opts)?;
        rectified.save(args.out.join("rectified.png"))?;
        Ok(())
    };
    match write_all() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(1, e),
    }
}

fn cmd_synth(args: &SynthArgs) -> ExitCode {
    let mut spec = match SceneSpec::from_file(&args.spec) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(points) = args.points {
        spec.n_points = points;
    }
    if let Some(outliers) = args.outliers {
        spec.outliers = outliers;
    }
    let bundle = match sample_scene(spec) {
        Ok(b) => b,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    match bundle.write_dir(&args.out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(1, e),
    }
}

fn eval_metrics(bundle: &SynthBundle, pair_path: &Path) -> docrect_core::error::Result<serde_json::Value> {
    let pair = read_pair(pair_path)?;
    let truth = docrect_core::synth::ground_truth_layout(&bundle.scene, &pair.space)?;
    let displacement = docrect_core::rectify::displacement_error(&pair.plane, &truth)?;

    let layout = energy::StateLayout { n_verts: pair.dims().vertex_count(), n_lines: 0 };
    let residuals = energy::iso_face_residuals(&pair);
    let mean_iso = residuals.iter().flat_map(|r| r.iter().map(|c| c.abs())).sum::<f64>()
        / (3 * residuals.len().max(1)) as f64;
    let e_iso = energy::e_iso(&pair, &layout, None, 1.0);

    let n_lines = bundle.segment_line_ids.iter().max().map_or(0, |m| m + 1);
    let mut per_line: Vec<Vec<Vec2>> = vec![Vec::new(); n_lines];
    for (seg, &id) in bundle.segments.iter().zip(&bundle.segment_line_ids) {
        per_line[id].extend(seg.pixels.iter().copied());
    }
    let cam = bundle.scene.spec.cam;
    let mut straightness = Vec::new();
    for pixels in per_line.iter().filter(|p| p.len() >= 2) {
        if let Some(s) = lifted_line_straightness(&pair, &cam, pixels)? {
            straightness.push(s);
        }
    }
    let worst = straightness.iter().cloned().fold(0.0, f64::max);
    let mean = straightness.iter().sum::<f64>() / straightness.len().max(1) as f64;
    Ok(serde_json::json!({
        "displacement_error": displacement,
        "mean_abs_iso_residual": mean_iso,
        "e_iso": e_iso,
        "lines": {
            "measured": straightness.len(),
            "worst_straightness": worst,
            "mean_straightness": mean,
        },
    }))
}

fn cmd_eval(args: &EvalArgs) -> ExitCode {
    let bundle = match SynthBundle::load_dir(&args.bundle) {
        Ok(b) => b,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    let metrics = match eval_metrics(&bundle, &args.pair) {
        Ok(m) => m,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    let text = format!("{:#}", metrics);
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text + "\n") {
                return fail(1, format!("{}: {e}", path.display()));
            }
        }
        None => println!("{text}"),
    }
    ExitCode::SUCCESS
}

fn cmd_gradcheck(args: &GradcheckArgs) -> ExitCode {
    let report = gradcheck::run_suite(args.seed, args.seeds, args.tol, args.abs_tol);
    for check in &report.checks {
        println!(
            "{} seed {}: {} (worst |analytic-fd| {:.3e} at component {}, scale {:.3e})",
            check.term,
            check.seed,
            if check.pass { "ok" } else { "FAIL" },
            check.worst_abs,
            check.worst_component,
            check.worst_scale,
        );
    }
    if report.all_pass() {
        println!("{} checks passed", report.checks.len());
        ExitCode::SUCCESS
    } else {
        let worst = report.worst().unwrap();
        eprintln!(
            "gradient mismatch: term {} seed {} component {} (|analytic-fd| {:.3e}, scale {:.3e})",
            worst.term, worst.seed, worst.worst_component, worst.worst_abs, worst.worst_scale
        );
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Rectify(args) => cmd_rectify(&args),
        Cmd::Synth(args) => cmd_synth(&args),
        Cmd::Eval(args) => cmd_eval(&args),
        Cmd::Gradcheck(args) => cmd_gradcheck(&args),
    }
}
