//! Initialization and the full optimization loop: correspondence refresh,
//! feature-line generation, line fitting and projection, objective
//! minimization, convergence tests, subdivision, and weight escalation.

use crate::camera::CameraIntrinsics;
use crate::cloud::{filter_noise, KdTree, MeshDistanceIndex, PointCloud};
use crate::energy::{self, DistCorr, FrozenData, StateLayout, WeightSchedule};
use crate::error::{Error, Result};
use crate::features::{
    collect_feature_points, lift_segments, merge_feature_lines, project_feature_lines,
    FeatureLine, FeatureSegment,
};
use crate::flatten::flatten;
use crate::geom::{GridDims, Mesh2, Mesh3, MeshPair, Vec2};
use crate::solver::{minimize_traced, LbfgsOptions};
use crate::subdivide::{remap_anchors, subdivide_pair};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

/// All tunables of the optimization.
#[derive(Clone, Copy, Debug)]
pub struct PipelineConfig {
    pub schedule: WeightSchedule,
    /// Initial grid dims of the mesh pair.
    pub dims: GridDims,
    /// Neighbors used for depth interpolation during initialization.
    pub k: usize,
    /// Noise tolerance, relative to the cloud bounding-box diagonal.
    pub phi: f64,
    /// Endpoint tolerance for segment merging, in median plane-mesh edge
    /// lengths.
    pub endpoint_tol_factor: f64,
    /// OBB h/w ceiling when merging segments.
    pub straightness_tol: f64,
    /// Quasi-Newton step budget per inner iteration.
    pub lbfgs_steps: usize,
    /// Whether feature points are snapped to their fitted lines.
    pub project_lines: bool,
    /// Local/global iterations of the initial flattening.
    pub arap_iters: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schedule: WeightSchedule::default(),
            dims: GridDims::new(20, 30),
            k: 3,
            phi: 0.06,
            endpoint_tol_factor: 1.5,
            straightness_tol: 0.1,
            lbfgs_steps: 50,
            project_lines: true,
            arap_iters: 40,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.k < 1 || self.phi <= 0.0 || self.lbfgs_steps < 1 {
            return Err(Error::Degenerate("invalid pipeline configuration".into()));
        }
        Ok(())
    }
}

/// Everything the optimization consumes.
pub struct PipelineInputs {
    pub cloud: PointCloud,
    pub cam: CameraIntrinsics,
    pub segments: Vec<FeatureSegment>,
    /// Reference-image size in pixels (width, height).
    pub image_size: (f64, f64),
}

/// One diagnostics row per inner iteration.
#[derive(Clone, Debug)]
pub struct IterRecord {
    pub round: usize,
    pub iter: usize,
    pub f: f64,
    pub e_iso: f64,
    pub e_dist: f64,
    pub e_fair_m: f64,
    pub e_fair_mp: f64,
    pub e_line: f64,
    pub e_ray: f64,
    pub valid_points: usize,
    pub n_lines: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    pub records: Vec<IterRecord>,
    /// Accepted-value sequence of every inner solve, in execution order.
    pub solve_traces: Vec<Vec<f64>>,
    pub dropped_segments: usize,
    pub clamped_anchors: usize,
}

impl Diagnostics {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "round,iter,f,e_iso,e_dist,e_fair_m,e_fair_mp,e_line,e_ray,valid_points,n_lines,wall_ms"
        )?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.round, r.iter, r.f, r.e_iso, r.e_dist, r.e_fair_m, r.e_fair_mp, r.e_line,
                r.e_ray, r.valid_points, r.n_lines, r.wall_ms
            )?;
        }
        Ok(())
    }
}

/// Final state of a pipeline run.
pub struct PipelineOutput {
    pub pair: MeshPair,
    pub lines: Vec<FeatureLine>,
    pub cloud: PointCloud,
}

/// Uniform pixel grid over a rectangle of the reference image.
pub fn init_image_mesh(lo: Vec2, hi: Vec2, dims: GridDims) -> Result<Mesh2> {
    let span = hi - lo;
    if span.x <= 0.0 || span.y <= 0.0 {
        return Err(Error::Degenerate(format!("degenerate image bounds {span:?}")));
    }
    Ok(Mesh2::from_fn(dims, |i, j| {
        Vec2::new(
            lo.x + span.x * j as f64 / (dims.n2 - 1) as f64,
            lo.y + span.y * i as f64 / (dims.n1 - 1) as f64,
        )
    }))
}

/// Initialize the 3D mesh by interpolating cloud depths at the image-mesh
/// pixels with the radial basis `1/(1+r^2)` over the k nearest projected
/// cloud points, then back-projecting.
pub fn init_space_mesh(
    image_mesh: &Mesh2,
    cloud: &PointCloud,
    cam: &CameraIntrinsics,
    k: usize,
) -> Result<Mesh3> {
    let mut pix = Vec::with_capacity(cloud.points.len());
    let mut depths = Vec::with_capacity(cloud.points.len());
    for (p, ok) in cloud.points.iter().zip(cloud.valid.iter()) {
        if !ok {
            continue;
        }
        if let Ok(px) = cam.project(*p) {
            pix.push([px.x, px.y]);
            depths.push(p.z);
        }
    }
    if pix.len() < k {
        return Err(Error::TooFewPoints { need: k, got: pix.len() });
    }
    let tree = KdTree::build(pix.clone());
    let mut verts = Vec::with_capacity(image_mesh.dims.vertex_count());
    for v in &image_mesh.vertices {
        let near = tree.knn(&[v.x, v.y], k)?;
        let (mut num, mut den) = (0.0, 0.0);
        for idx in near {
            let d = Vec2::new(pix[idx][0] - v.x, pix[idx][1] - v.y).norm();
            let w = 1.0 / (1.0 + d * d);
            num += depths[idx] * w;
            den += w;
        }
        verts.push(cam.back_project(*v, num / den)?);
    }
    Ok(Mesh3::new(image_mesh.dims, verts))
}

fn cross2(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Flatten the 3D mesh and put the result upright: the boundary OBB axes
/// align with the coordinate axes, columns run along +x, rows along +y
/// (the reference-image convention), centered at the origin.
pub fn init_plane_mesh(space: &Mesh3, arap_iters: usize) -> Result<Mesh2> {
    let mut plane = flatten(space, arap_iters)?;
    let d = plane.dims;
    // Upright via the OBB of the boundary loop.
    let boundary: Vec<Vec2> = d.boundary_loop().iter().map(|&v| plane.vertices[v]).collect();
    let obb = crate::geom::obb_of_points(&boundary)?;
    let (ax, ay) = (obb.axes[0], obb.axes[1]);
    for v in plane.vertices.iter_mut() {
        let q = *v - obb.center;
        *v = Vec2::new(q.dot(&ax), q.dot(&ay));
    }
    // Columns should run along x more than y; otherwise rotate 90 degrees.
    let mut ecol = Vec2::zeros();
    let mut erow = Vec2::zeros();
    for i in 0..d.n1 {
        for j in 0..d.n2 {
            if j + 1 < d.n2 {
                ecol += plane.vertex(i, j + 1) - plane.vertex(i, j);
            }
            if i + 1 < d.n1 {
                erow += plane.vertex(i + 1, j) - plane.vertex(i, j);
            }
        }
    }
    if ecol.x.abs() < ecol.y.abs() {
        for v in plane.vertices.iter_mut() {
            *v = Vec2::new(v.y, -v.x);
        }
        let t = ecol;
        ecol = Vec2::new(t.y, -t.x);
        erow = Vec2::new(erow.y, -erow.x);
    }
    if ecol.x < 0.0 {
        for v in plane.vertices.iter_mut() {
            *v = -*v;
        }
        erow = -erow;
    }
    if erow.y < 0.0 {
        // Mirror rows to match the image orientation (rows grow with +y).
        for v in plane.vertices.iter_mut() {
            v.y = -v.y;
        }
    }
    // Reject fold-over collapse: every face must keep nonzero area.
    let scale2 = plane.median_edge_length().powi(2);
    for f in 0..d.face_count() {
        let c = d.face_corners(f)?;
        let a0 = cross2(
            plane.vertices[c[1]] - plane.vertices[c[0]],
            plane.vertices[c[2]] - plane.vertices[c[0]],
        );
        let a1 = cross2(
            plane.vertices[c[2]] - plane.vertices[c[0]],
            plane.vertices[c[3]] - plane.vertices[c[0]],
        );
        if a0.abs() < 1e-12 * scale2 || a1.abs() < 1e-12 * scale2 {
            return Err(Error::Degenerate(format!("collapsed face {f} in initial flattening")));
        }
    }
    Ok(plane)
}

/// One quasi-Newton solve of the full objective with frozen
/// correspondences. Returns the final value; `trace` receives the
/// monotone accepted-value sequence.
pub fn minimize_f(
    pair: &mut MeshPair,
    frozen: &FrozenData,
    params: &mut [(f64, f64)],
    schedule: &WeightSchedule,
    max_steps: usize,
    trace: &mut Vec<f64>,
) -> Result<f64> {
    let layout = StateLayout { n_verts: pair.dims().vertex_count(), n_lines: params.len() };
    let mut x = layout.pack(pair, params);
    let mut scratch_pair = pair.clone();
    let mut scratch_params = params.to_vec();
    let mut failed: Option<Error> = None;
    let opts = LbfgsOptions { max_iters: max_steps, ..Default::default() };
    minimize_traced(
        &mut x,
        &opts,
        |xv, g| {
            layout.unpack(xv, &mut scratch_pair, &mut scratch_params);
            match energy::total_objective(&scratch_pair, frozen, &scratch_params, schedule) {
                Ok(rep) => {
                    g.copy_from(&rep.grad);
                    rep.total
                }
                Err(e) => {
                    failed = Some(e);
                    g.fill(0.0);
                    f64::INFINITY
                }
            }
        },
        trace,
    );
    if let Some(e) = failed {
        return Err(e);
    }
    layout.unpack(&x, pair, params);
    Ok(*trace.last().unwrap())
}

struct InnerState<'a> {
    cfg: &'a PipelineConfig,
    cam: &'a CameraIntrinsics,
    segments: &'a [FeatureSegment],
    phi_abs: f64,
    started: Instant,
}

/// Run the inner loop (Algorithm-1 repeat block) for one round, mutating
/// the pair and cloud mask. Returns the feature lines of the last
/// iteration.
fn inner_loop(
    st: &InnerState,
    pair: &mut MeshPair,
    cloud: &mut PointCloud,
    schedule: &WeightSchedule,
    with_features: bool,
    round: usize,
    diag: &mut Diagnostics,
) -> Result<Vec<FeatureLine>> {
    let mut prev_f: Option<f64> = None;
    let mut rises = 0usize;
    let mut streak_start_f = f64::INFINITY;
    let mut lines: Vec<FeatureLine> = Vec::new();
    for iter in 0..schedule.q_max {
        // Correspondence refresh against the current 3D mesh. The filter
        // tolerance anneals across rounds: loose while the surface is
        // still far from the data, reaching the configured phi in the
        // final round so the converged mask reflects the true tolerance.
        // Anneal the working tolerance, but never below 2x: a region whose
        // data is masked can no longer be pulled back, so the working mask
        // stays a little permissive. The final mask is recomputed at
        // exactly phi after the last round.
        let anneal = 1.8f64
            .powi((st.cfg.schedule.rounds.saturating_sub(round)) as i32)
            .clamp(1.0, 3.0);
        let index = MeshDistanceIndex::build(&pair.space);
        let valid = filter_noise(cloud, &index, st.phi_abs * anneal);
        let mut dist = Vec::with_capacity(valid);
        for (p, ok) in cloud.points.iter().zip(cloud.valid.iter()) {
            if *ok {
                let fp = index.closest_point(*p);
                dist.push(DistCorr { point: *p, anchor: fp.anchor, normal: fp.normal });
            }
        }
        // Feature-line generation, fitting and projection.
        lines = Vec::new();
        if with_features && !st.segments.is_empty() {
            let (lifted, dropped) = lift_segments(st.segments, st.cam, pair);
            diag.dropped_segments += dropped;
            let tol = st.cfg.endpoint_tol_factor * pair.plane.median_edge_length();
            lines = merge_feature_lines(lifted, &pair.plane, tol, st.cfg.straightness_tol)?;
            if st.cfg.project_lines {
                project_feature_lines(pair, &mut lines)?;
            }
        }
        let (feature_points, mut params) = collect_feature_points(&lines);
        let frozen = FrozenData { dist, feature_points, n_lines: params.len() };

        let mut trace = Vec::new();
        let f = minimize_f(pair, &frozen, &mut params, schedule, st.cfg.lbfgs_steps, &mut trace)?;
        for (line, p) in lines.iter_mut().zip(params.iter()) {
            line.fitted = *p;
        }
        diag.solve_traces.push(trace);

        let rep = energy::total_objective(pair, &frozen, &params, schedule)?;
        diag.records.push(IterRecord {
            round,
            iter,
            f,
            e_iso: rep.e_iso,
            e_dist: rep.e_dist,
            e_fair_m: rep.e_fair_m,
            e_fair_mp: rep.e_fair_mp,
            e_line: rep.e_line,
            e_ray: rep.e_ray,
            valid_points: valid,
            n_lines: lines.len(),
            wall_ms: st.started.elapsed().as_secs_f64() * 1e3,
        });

        if let Some(pf) = prev_f {
            // Correspondence refreshes can trade one term against another and
            // nudge the objective up for a few iterations; that is a stall,
            // not a blow-up. Abort only when the rise is sustained and the
            // objective has materially grown since the streak began.
            if f > pf * (1.0 + 1e-3) {
                if rises == 0 {
                    streak_start_f = pf;
                }
                rises += 1;
                if rises >= 5 && f > 2.0 * streak_start_f {
                    return Err(Error::Diverged(format!(
                        "objective rose over {rises} consecutive iterations (round {round})"
                    )));
                }
            } else {
                rises = 0;
            }
            if (f - pf).abs() / pf.abs().max(1e-300) < schedule.eps {
                break;
            }
        }
        prev_f = Some(f);
    }
    Ok(lines)
}

/// The full algorithm: initialization, initial refinement without
/// feature terms, then `rounds` optimization rounds interleaved with
/// subdivisions and feature-weight escalation.
pub fn run(
    cfg: &PipelineConfig,
    inputs: PipelineInputs,
    diag: &mut Diagnostics,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let PipelineInputs { mut cloud, cam, segments, image_size } = inputs;
    let started = Instant::now();

    // The grid spans the document's boundary polylines when given;
    // otherwise the whole reference image.
    let (mut lo, mut hi) = (Vec2::zeros(), Vec2::new(image_size.0, image_size.1));
    let boundary_pixels: Vec<&Vec2> = segments
        .iter()
        .filter(|s| s.class == crate::features::SegmentClass::Boundary)
        .flat_map(|s| s.pixels.iter())
        .collect();
    if boundary_pixels.len() >= 3 {
        lo = Vec2::repeat(f64::INFINITY);
        hi = Vec2::repeat(f64::NEG_INFINITY);
        for p in boundary_pixels {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
    }
    // Orient the grid so the denser dimension follows the longer side of
    // the covered region, keeping cells near square.
    let span = hi - lo;
    let (dmin, dmax) = (cfg.dims.n1.min(cfg.dims.n2), cfg.dims.n1.max(cfg.dims.n2));
    let dims = if span.y >= span.x {
        GridDims::new(dmax, dmin)
    } else {
        GridDims::new(dmin, dmax)
    };
    let image_mesh = init_image_mesh(lo, hi, dims)?;
    let mut space = init_space_mesh(&image_mesh, &cloud, &cam, cfg.k)?;
    // Bootstrap the noise mask: gross outliers corrupt the depth blend,
    // so filter against the blended surface and re-blend from survivors,
    // tightening the tolerance each pass.
    let phi_abs = cfg.phi * cloud.diag;
    for mult in [12.0, 6.0, 3.0] {
        let index = MeshDistanceIndex::build(&space);
        filter_noise(&mut cloud, &index, phi_abs * mult);
        space = init_space_mesh(&image_mesh, &cloud, &cam, cfg.k)?;
    }
    let plane = init_plane_mesh(&space, cfg.arap_iters)?;
    let mut pair = MeshPair::new(space, plane)?;

    let st = InnerState {
        cfg,
        cam: &cam,
        segments: &segments,
        phi_abs: cfg.phi * cloud.diag,
        started,
    };

    // Step-4 refinement: the same loop with feature weights zeroed.
    let no_features = cfg.schedule.without_features();
    inner_loop(&st, &mut pair, &mut cloud, &no_features, false, 0, diag)?;

    let mut schedule = cfg.schedule;
    let mut lines = Vec::new();
    for round in 1..=schedule.rounds {
        lines = inner_loop(&st, &mut pair, &mut cloud, &schedule, true, round, diag)?;
        if round < schedule.rounds {
            let refined = subdivide_pair(&pair);
            for line in lines.iter_mut() {
                let (anchors, clamped) = remap_anchors(&pair, &refined, &line.anchors)?;
                line.anchors = anchors;
                diag.clamped_anchors += clamped;
            }
            pair = refined;
            schedule.l5 *= schedule.escalation;
            schedule.l6 *= schedule.escalation;
        }
    }
    // The working mask stayed permissive (see inner_loop); the reported
    // mask is the configured tolerance against the converged surface.
    let index = MeshDistanceIndex::build(&pair.space);
    filter_noise(&mut cloud, &index, st.phi_abs);
    Ok(PipelineOutput { pair, lines, cloud })
}
