//! Ground-truth scene generation: a flat textured sheet folded
//! isometrically (sequential creases) or bent into a cylindrical arc,
//! photographed by a pinhole camera. Emits the point cloud, feature
//! segments, reference image and ground-truth meshes the pipeline and its
//! tests consume. Fully deterministic per seed.

use crate::camera::CameraIntrinsics;
use crate::cloud::{MeshDistanceIndex, PointCloud};
use crate::error::{Error, Result};
use crate::features::{FeatureSegment, SegmentClass};
use crate::geom::{GridDims, Mesh2, Mesh3, MeshPair, Vec2, Vec3};
use image::RgbImage;
use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// One fold: the plane line `n.p = c` with `n = (cos theta, sin theta)`;
/// everything on the positive side rotates by `angle` about the crease.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crease {
    pub theta: f64,
    pub c: f64,
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Deform {
    Folds(Vec<Crease>),
    Cylinder { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Texture {
    Checker { cell: f64 },
    /// Horizontal ruled lines every `spacing`, `thickness` wide.
    Ruled { spacing: f64, thickness: f64 },
}

/// Full description of a synthetic capture.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub width: f64,
    pub height: f64,
    pub deform: Deform,
    pub pose_euler: (f64, f64, f64),
    pub pose_t: Vec3,
    pub cam: CameraIntrinsics,
    pub image_size: (u32, u32),
    pub texture: Texture,
    pub n_points: usize,
    /// Gaussian noise sigma, relative to the layout diagonal.
    pub sigma: f64,
    pub outliers: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 0.45,
            height: 0.6,
            deform: Deform::Folds(Vec::new()),
            pose_euler: (0.0, 0.0, 0.0),
            pose_t: Vec3::new(-0.225, -0.3, 1.3),
            cam: CameraIntrinsics::new(1.0, 1400.0, 1400.0, 400.0, 600.0),
            image_size: (800, 1200),
            texture: Texture::Checker { cell: 0.075 },
            n_points: 4000,
            sigma: 0.0,
            outliers: 0,
            seed: 1,
        }
    }
}

impl SceneSpec {
    pub fn diag(&self) -> f64 {
        (self.width * self.width + self.height * self.height).sqrt()
    }

    pub fn parse(text: &str, file: &Path) -> Result<Self> {
        let mut spec = SceneSpec::default();
        let mut folds = Vec::new();
        let mut cylinder = None;
        let err = |ln: usize, msg: &str| Error::Parse {
            file: file.to_path_buf(),
            msg: format!("line {}: {msg}", ln + 1),
        };
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let key = it.next().unwrap();
            let rest: Vec<&str> = it.collect();
            let nums = || -> Result<Vec<f64>> {
                rest.iter()
                    .map(|s| s.parse::<f64>().map_err(|_| err(ln, "bad number")))
                    .collect()
            };
            let one = || -> Result<f64> {
                let v = nums()?;
                if v.len() != 1 {
                    return Err(err(ln, "expected one value"));
                }
                Ok(v[0])
            };
            match key {
                "width" => spec.width = one()?,
                "height" => spec.height = one()?,
                "fold" => {
                    let v = nums()?;
                    if v.len() != 3 {
                        return Err(err(ln, "fold needs: theta c angle"));
                    }
                    folds.push(Crease { theta: v[0], c: v[1], angle: v[2] });
                }
                "cylinder" => cylinder = Some(one()?),
                "pose_euler" => {
                    let v = nums()?;
                    if v.len() != 3 {
                        return Err(err(ln, "pose_euler needs three angles"));
                    }
                    spec.pose_euler = (v[0], v[1], v[2]);
                }
                "pose_t" => {
                    let v = nums()?;
                    if v.len() != 3 {
                        return Err(err(ln, "pose_t needs three values"));
                    }
                    spec.pose_t = Vec3::new(v[0], v[1], v[2]);
                }
                "cam" => {
                    let v = nums()?;
                    if v.len() != 5 {
                        return Err(err(ln, "cam needs: f ku kv cu cv"));
                    }
                    spec.cam = CameraIntrinsics::new(v[0], v[1], v[2], v[3], v[4]);
                }
                "image" => {
                    let v = nums()?;
                    if v.len() != 2 || v[0] < 1.0 || v[1] < 1.0 {
                        return Err(err(ln, "image needs: width height"));
                    }
                    spec.image_size = (v[0] as u32, v[1] as u32);
                }
                "texture" => match rest.first().copied() {
                    Some("checker") if rest.len() == 2 => {
                        spec.texture = Texture::Checker {
                            cell: rest[1].parse().map_err(|_| err(ln, "bad cell"))?,
                        }
                    }
                    Some("ruled") if rest.len() == 3 => {
                        spec.texture = Texture::Ruled {
                            spacing: rest[1].parse().map_err(|_| err(ln, "bad spacing"))?,
                            thickness: rest[2].parse().map_err(|_| err(ln, "bad thickness"))?,
                        }
                    }
                    _ => return Err(err(ln, "texture needs: checker <cell> | ruled <spacing> <thickness>")),
                },
                "points" => spec.n_points = one()? as usize,
                "sigma" => spec.sigma = one()?,
                "outliers" => spec.outliers = one()? as usize,
                "seed" => spec.seed = one()? as u64,
                _ => return Err(err(ln, &format!("unknown key `{key}`"))),
            }
        }
        spec.deform = match cylinder {
            Some(r) if folds.is_empty() => Deform::Cylinder { radius: r },
            Some(_) => {
                return Err(Error::Parse {
                    file: file.to_path_buf(),
                    msg: "cannot combine folds with a cylinder".into(),
                })
            }
            None => Deform::Folds(folds),
        };
        if spec.width <= 0.0 || spec.height <= 0.0 {
            return Err(Error::Parse {
                file: file.to_path_buf(),
                msg: "layout must have positive extent".into(),
            });
        }
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        SceneSpec::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        use std::fmt::Write;
        writeln!(s, "width {}", self.width).unwrap();
        writeln!(s, "height {}", self.height).unwrap();
        match &self.deform {
            Deform::Folds(folds) => {
                for f in folds {
                    writeln!(s, "fold {} {} {}", f.theta, f.c, f.angle).unwrap();
                }
            }
            Deform::Cylinder { radius } => writeln!(s, "cylinder {radius}").unwrap(),
        }
        writeln!(s, "pose_euler {} {} {}", self.pose_euler.0, self.pose_euler.1, self.pose_euler.2).unwrap();
        writeln!(s, "pose_t {} {} {}", self.pose_t.x, self.pose_t.y, self.pose_t.z).unwrap();
        writeln!(s, "cam {} {} {} {} {}", self.cam.f, self.cam.ku, self.cam.kv, self.cam.cu, self.cam.cv).unwrap();
        writeln!(s, "image {} {}", self.image_size.0, self.image_size.1).unwrap();
        match self.texture {
            Texture::Checker { cell } => writeln!(s, "texture checker {cell}").unwrap(),
            Texture::Ruled { spacing, thickness } => {
                writeln!(s, "texture ruled {spacing} {thickness}").unwrap()
            }
        }
        writeln!(s, "points {}", self.n_points).unwrap();
        writeln!(s, "sigma {}", self.sigma).unwrap();
        writeln!(s, "outliers {}", self.outliers).unwrap();
        writeln!(s, "seed {}", self.seed).unwrap();
        s
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

// A rigid motion stored as q -> r * q + t.
#[derive(Clone, Copy, Debug)]
struct Rigid {
    r: Rotation3<f64>,
    t: Vec3,
}

impl Rigid {
    fn identity() -> Self {
        Rigid { r: Rotation3::identity(), t: Vec3::zeros() }
    }

    fn about_axis(origin: Vec3, dir: Vec3, angle: f64) -> Self {
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(dir), angle);
        Rigid { r, t: origin - r * origin }
    }

    fn apply(&self, q: Vec3) -> Vec3 {
        self.r * q + self.t
    }

    fn inverse_apply(&self, q: Vec3) -> Vec3 {
        self.r.inverse() * (q - self.t)
    }

    /// `self` after `other`: q -> self(other(q)).
    fn after(&self, other: &Rigid) -> Rigid {
        Rigid { r: self.r * other.r, t: self.r * other.t + self.t }
    }
}

// One affine piece of a fold map: a plane polygon and the rigid motion
// (including pose) carrying it into space.
struct Piece {
    polygon: Vec<Vec2>,
    motion: Rigid,
}

/// The built scene: the closed-form isometric embedding plane -> 3D and
/// its exact ray inverse.
pub struct Scene {
    pub spec: SceneSpec,
    creases: Vec<(Vec2, f64, Rigid)>, // (normal, offset, fold motion)
    pieces: Vec<Piece>,
    pose: Rigid,
}

fn clip_polygon(poly: &[Vec2], n: Vec2, c: f64, keep_positive: bool, tol: f64) -> Vec<Vec2> {
    // Sutherland-Hodgman against the half-plane n.p >= c (or <= c).
    let side = |p: &Vec2| {
        let s = n.dot(p) - c;
        if keep_positive {
            s
        } else {
            -s
        }
    };
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sa, sb) = (side(&a), side(&b));
        if sa >= -tol {
            out.push(a);
        }
        if (sa > tol && sb < -tol) || (sa < -tol && sb > tol) {
            let t = sa / (sa - sb);
            out.push(a + (b - a) * t);
        }
    }
    out
}

fn polygon_area(poly: &[Vec2]) -> f64 {
    let mut a = 0.0;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        a += p.x * q.y - p.y * q.x;
    }
    0.5 * a
}

fn point_in_polygon(poly: &[Vec2], p: Vec2, tol: f64) -> bool {
    if poly.len() < 3 {
        return false;
    }
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let e = b - a;
        if e.x * (p.y - a.y) - e.y * (p.x - a.x) < -tol {
            return false;
        }
    }
    true
}

fn segments_properly_intersect(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> bool {
    let cross = |o: Vec2, p: Vec2, q: Vec2| (p - o).x * (q - o).y - (p - o).y * (q - o).x;
    let d1 = cross(a0, a1, b0);
    let d2 = cross(a0, a1, b1);
    let d3 = cross(b0, b1, a0);
    let d4 = cross(b0, b1, a1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

impl Scene {
    pub fn build(spec: SceneSpec) -> Result<Self> {
        let (w, h) = (spec.width, spec.height);
        let rect = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(w, 0.0),
            Vec2::new(w, h),
            Vec2::new(0.0, h),
        ];
        let tol = 1e-9 * spec.diag();
        let (re, rp, ry) = spec.pose_euler;
        let pose = Rigid { r: Rotation3::from_euler_angles(re, rp, ry), t: spec.pose_t };

        let mut creases: Vec<(Vec2, f64, Rigid)> = Vec::new();
        let mut in_sheet: Vec<(Vec2, Vec2)> = Vec::new();
        if let Deform::Folds(folds) = &spec.deform {
            for (k, cr) in folds.iter().enumerate() {
                let n = Vec2::new(cr.theta.cos(), cr.theta.sin());
                let d2 = Vec2::new(-n.y, n.x);
                let o = n * cr.c;
                // Liang-Barsky clip of the crease line against the sheet.
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for (p0, dp, lim) in [(o.x, d2.x, w), (o.y, d2.y, h)] {
                    if dp.abs() < 1e-15 {
                        if p0 < -tol || p0 > lim + tol {
                            t1 = f64::NEG_INFINITY;
                        }
                    } else {
                        let (ta, tb) = ((-p0) / dp, (lim - p0) / dp);
                        t0 = t0.max(ta.min(tb));
                        t1 = t1.min(ta.max(tb));
                    }
                }
                if t1 - t0 < tol {
                    return Err(Error::Degenerate(format!("crease {k} misses the sheet")));
                }
                let (e0, e1) = (o + d2 * t0, o + d2 * t1);
                for (f0, f1) in &in_sheet {
                    if segments_properly_intersect(e0, e1, *f0, *f1) {
                        return Err(Error::Degenerate(format!(
                            "crease {k} intersects an earlier crease inside the sheet"
                        )));
                    }
                }
                in_sheet.push((e0, e1));
                // Fold axis: the crease image under the earlier folds.
                let partial = |p: Vec2| -> Vec3 {
                    let mut q = Vec3::new(p.x, p.y, 0.0);
                    for (pn, pc, motion) in &creases {
                        // Side decided at the crease midpoint (the crease
                        // never crosses an earlier one inside the sheet).
                        let mid = (e0 + e1) * 0.5;
                        if pn.dot(&mid) - pc > 0.0 {
                            q = motion.apply(q);
                        }
                    }
                    q
                };
                let (a0, a1) = (partial(e0), partial(e1));
                creases.push((n, cr.c, Rigid::about_axis(a0, a1 - a0, cr.angle)));
            }
        }

        // Enumerate the affine pieces (fold signatures with nonempty
        // in-sheet regions).
        let mut pieces = Vec::new();
        match &spec.deform {
            Deform::Folds(_) => {
                let kmax = creases.len();
                for sig in 0..(1usize << kmax) {
                    let mut poly = rect.clone();
                    for (k, (n, c, _)) in creases.iter().enumerate() {
                        poly = clip_polygon(&poly, *n, *c, sig >> k & 1 == 1, tol);
                        if poly.len() < 3 {
                            break;
                        }
                    }
                    if poly.len() < 3 || polygon_area(&poly).abs() < tol * tol {
                        continue;
                    }
                    let mut motion = Rigid::identity();
                    for (k, (_, _, m)) in creases.iter().enumerate() {
                        if sig >> k & 1 == 1 {
                            motion = m.after(&motion);
                        }
                    }
                    pieces.push(Piece { polygon: poly, motion: pose.after(&motion) });
                }
            }
            Deform::Cylinder { radius } => {
                if *radius <= 0.0 {
                    return Err(Error::Degenerate("cylinder radius must be positive".into()));
                }
                if w / radius >= std::f64::consts::PI {
                    return Err(Error::Degenerate("cylinder arc exceeds half a turn".into()));
                }
            }
        }

        let scene = Scene { spec, creases, pieces, pose };
        // Positive-depth invariant, checked on a sampling of the sheet.
        for i in 0..=24 {
            for j in 0..=24 {
                let p = Vec2::new(w * j as f64 / 24.0, h * i as f64 / 24.0);
                let z = scene.map(p).z;
                if z <= 0.0 {
                    return Err(Error::BehindCamera(z));
                }
            }
        }
        Ok(scene)
    }

    /// The isometric embedding: layout point -> 3D surface point.
    pub fn map(&self, p: Vec2) -> Vec3 {
        match &self.spec.deform {
            Deform::Folds(_) => {
                let mut q = Vec3::new(p.x, p.y, 0.0);
                for (n, c, motion) in &self.creases {
                    if n.dot(&p) - c > 0.0 {
                        q = motion.apply(q);
                    }
                }
                self.pose.apply(q)
            }
            Deform::Cylinder { radius } => {
                let r = *radius;
                let s = p.x / r;
                self.pose.apply(Vec3::new(r * s.sin(), p.y, r * (1.0 - s.cos())))
            }
        }
    }

    /// Exact inverse along a camera ray: the first surface hit, returned
    /// as the layout point, or `None` on a miss.
    pub fn raycast(&self, dir: Vec3) -> Option<Vec2> {
        let tol = 1e-9 * self.spec.diag();
        match &self.spec.deform {
            Deform::Folds(_) => {
                let mut best: Option<(f64, Vec2)> = None;
                for piece in &self.pieces {
                    // The piece carries plane z=0; its world normal/point:
                    let n = piece.motion.r * Vec3::z();
                    let p0 = piece.motion.t;
                    let denom = n.dot(&dir);
                    if denom.abs() < 1e-14 {
                        continue;
                    }
                    let t = n.dot(&p0) / denom;
                    if t <= 1e-9 {
                        continue;
                    }
                    let loc = piece.motion.inverse_apply(dir * t);
                    let p2 = Vec2::new(loc.x, loc.y);
                    if point_in_polygon(&piece.polygon, p2, tol)
                        && best.is_none_or(|(bt, _)| t < bt)
                    {
                        best = Some((t, p2));
                    }
                }
                best.map(|(_, p)| p)
            }
            Deform::Cylinder { radius } => {
                let r = *radius;
                // World cylinder axis through (0, y, r) in local coords.
                let axis_p = self.pose.apply(Vec3::new(0.0, 0.0, r));
                let axis_d = self.pose.r * Vec3::y();
                let oc = -axis_p;
                let dd = dir - axis_d * dir.dot(&axis_d);
                let qq = oc - axis_d * oc.dot(&axis_d);
                let a = dd.norm_squared();
                let b = 2.0 * dd.dot(&qq);
                let c = qq.norm_squared() - r * r;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 || a < 1e-18 {
                    return None;
                }
                let sq = disc.sqrt();
                let mut best: Option<(f64, Vec2)> = None;
                for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                    if t <= 1e-9 {
                        continue;
                    }
                    let loc = self.pose.inverse_apply(dir * t);
                    let s = r * loc.x.atan2(r - loc.z);
                    let u = loc.y;
                    if s >= -tol
                        && s <= self.spec.width + tol
                        && u >= -tol
                        && u <= self.spec.height + tol
                        && best.is_none_or(|(bt, _)| t < bt)
                    {
                        best = Some((t, Vec2::new(s.clamp(0.0, self.spec.width), u)));
                    }
                }
                best.map(|(_, p)| p)
            }
        }
    }

    /// Texture color at a layout point.
    pub fn texture_color(&self, p: Vec2) -> [u8; 3] {
        const PAPER: [u8; 3] = [245, 245, 240];
        const INK: [u8; 3] = [40, 40, 45];
        match self.spec.texture {
            Texture::Checker { cell } => {
                let k = (p.x / cell).floor() as i64 + (p.y / cell).floor() as i64;
                if k.rem_euclid(2) == 0 {
                    PAPER
                } else {
                    INK
                }
            }
            Texture::Ruled { spacing, thickness } => {
                let d = (p.y / spacing - (p.y / spacing).round()).abs() * spacing;
                let m = (p.y / spacing).round();
                if d < 0.5 * thickness && m >= 1.0 && m * spacing < self.spec.height {
                    INK
                } else {
                    PAPER
                }
            }
        }
    }

    /// The straight layout lines a perfect rectification should show:
    /// the four boundary edges plus the texture's ruled lines.
    pub fn plane_lines(&self) -> Vec<(SegmentClass, Vec2, Vec2)> {
        let (w, h) = (self.spec.width, self.spec.height);
        let mut out = vec![
            (SegmentClass::Boundary, Vec2::new(0.0, 0.0), Vec2::new(w, 0.0)),
            (SegmentClass::Boundary, Vec2::new(w, 0.0), Vec2::new(w, h)),
            (SegmentClass::Boundary, Vec2::new(w, h), Vec2::new(0.0, h)),
            (SegmentClass::Boundary, Vec2::new(0.0, h), Vec2::new(0.0, 0.0)),
        ];
        if let Texture::Ruled { spacing, .. } = self.spec.texture {
            let mut m = 1.0;
            while m * spacing < h - 1e-12 {
                out.push((
                    SegmentClass::Text,
                    Vec2::new(0.0, m * spacing),
                    Vec2::new(w, m * spacing),
                ));
                m += 1.0;
            }
        }
        out
    }

    /// Sample the ground-truth mesh pair at the given grid resolution.
    pub fn gt_pair(&self, dims: GridDims) -> Result<MeshPair> {
        let plane = Mesh2::from_fn(dims, |i, j| {
            Vec2::new(
                self.spec.width * j as f64 / (dims.n2 - 1) as f64,
                self.spec.height * i as f64 / (dims.n1 - 1) as f64,
            )
        });
        let space = Mesh3::new(dims, plane.vertices.iter().map(|p| self.map(*p)).collect());
        MeshPair::new(space, plane)
    }

    /// Render the reference image by exact per-pixel ray casting.
    pub fn render_reference(&self) -> RgbImage {
        const BACKGROUND: [u8; 3] = [90, 96, 104];
        let (w, h) = self.spec.image_size;
        RgbImage::from_fn(w, h, |x, y| {
            let px = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
            let ray = self.spec.cam.viewing_ray(px);
            match self.raycast(ray.direction) {
                Some(p) => image::Rgb(self.texture_color(p)),
                None => image::Rgb(BACKGROUND),
            }
        })
    }

    /// Emit pixel-space feature segments: every layout line split at the
    /// creases (or into short chunks on a cylinder), sampled, embedded and
    /// projected. Returns segments plus the source line id of each.
    pub fn feature_segments(&self) -> (Vec<FeatureSegment>, Vec<usize>) {
        let mut segments = Vec::new();
        let mut ids = Vec::new();
        let (iw, ih) = (self.spec.image_size.0 as f64, self.spec.image_size.1 as f64);
        for (line_id, (class, a, b)) in self.plane_lines().into_iter().enumerate() {
            // Split parameters where the line crosses a crease; cylinders
            // get fixed chunks so each piece stays near-straight on screen.
            let mut cuts = vec![0.0, 1.0];
            match &self.spec.deform {
                Deform::Folds(_) => {
                    for (n, c, _) in &self.creases {
                        let (sa, sb) = (n.dot(&a) - c, n.dot(&b) - c);
                        if (sa > 0.0) != (sb > 0.0) {
                            cuts.push(sa / (sa - sb));
                        }
                    }
                }
                Deform::Cylinder { .. } => {
                    for k in 1..6 {
                        cuts.push(k as f64 / 6.0);
                    }
                }
            }
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for win in cuts.windows(2) {
                let (t0, t1) = (win[0], win[1]);
                if t1 - t0 < 1e-9 {
                    continue;
                }
                let mut pixels = Vec::new();
                let samples = 25;
                for s in 0..samples {
                    let t = t0 + (t1 - t0) * (s as f64 + 0.5) / samples as f64;
                    let p3 = self.map(a + (b - a) * t);
                    if let Ok(px) = self.spec.cam.project(p3) {
                        if px.x >= 0.0 && px.x < iw && px.y >= 0.0 && px.y < ih {
                            pixels.push(px);
                        }
                    }
                }
                if pixels.len() >= 2 {
                    segments.push(FeatureSegment { class, pixels });
                    ids.push(line_id);
                }
            }
        }
        (segments, ids)
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u: f64 = rng.gen_range(1e-300..1.0);
    let v: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u.ln()).sqrt() * v.cos()
}

/// Everything a generated scene hands to the pipeline and the evaluator.
pub struct SynthBundle {
    pub scene: Scene,
    pub cloud: PointCloud,
    /// True for surface samples, false for box outliers.
    pub labels: Vec<bool>,
    pub segments: Vec<FeatureSegment>,
    pub segment_line_ids: Vec<usize>,
    pub reference: RgbImage,
}

/// Resolution of the ground-truth mesh used for closest-point unfolding.
pub const GT_FINE_DIMS: GridDims = GridDims { n1: 161, n2: 121 };

pub fn sample_scene(spec: SceneSpec) -> Result<SynthBundle> {
    let scene = Scene::build(spec)?;
    let spec = &scene.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sigma = spec.sigma * scene.spec.diag();
    let mut points = Vec::with_capacity(spec.n_points + spec.outliers);
    let mut attempts = 0usize;
    while points.len() < spec.n_points {
        attempts += 1;
        if attempts > 200 * spec.n_points.max(1) {
            return Err(Error::Degenerate("surface sampling failed to accept points".into()));
        }
        let p = Vec2::new(rng.gen_range(0.0..spec.width), rng.gen_range(0.0..spec.height));
        // Texture-weighted: ink attracts SfM features.
        let c = scene.texture_color(p);
        let darkness = 1.0 - (c[0] as f64 + c[1] as f64 + c[2] as f64) / (3.0 * 255.0);
        if rng.gen_range(0.0..1.0) > 0.35 + 0.65 * darkness {
            continue;
        }
        let mut q = scene.map(p);
        if sigma > 0.0 {
            q += Vec3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng)) * sigma;
        }
        points.push(q);
    }
    let mut labels = vec![true; points.len()];
    if spec.outliers > 0 {
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for p in &points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        for _ in 0..spec.outliers {
            points.push(Vec3::new(
                rng.gen_range(lo.x..hi.x),
                rng.gen_range(lo.y..hi.y),
                rng.gen_range(lo.z..hi.z),
            ));
            labels.push(false);
        }
    }
    let cloud = PointCloud::new(points)?;
    let (segments, segment_line_ids) = scene.feature_segments();
    let reference = scene.render_reference();
    Ok(SynthBundle { scene, cloud, labels, segments, segment_line_ids, reference })
}

impl SynthBundle {
    /// Write the file set consumed by the CLI: the spec (sufficient to
    /// regenerate everything), the pipeline inputs, and the labels.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.scene.spec.write_file(&dir.join("scene.txt"))?;
        self.cloud.write_file(&dir.join("cloud.xyz"))?;
        self.scene.spec.cam.write_file(&dir.join("cam.txt"))?;
        crate::features::write_segments(&self.segments, &dir.join("segments.txt"))?;
        let labels: String = self
            .labels
            .iter()
            .map(|&b| if b { "1\n" } else { "0\n" })
            .collect();
        std::fs::write(dir.join("labels.txt"), labels)?;
        let ids: String = self.segment_line_ids.iter().map(|i| format!("{i}\n")).collect();
        std::fs::write(dir.join("segment_lines.txt"), ids)?;
        self.reference
            .save(dir.join("reference.png"))
            .map_err(|e| Error::Degenerate(format!("png write failed: {e}")))?;
        Ok(())
    }

    /// Rebuild a bundle from a written directory. Generation is
    /// deterministic, so regenerating from the stored spec reproduces the
    /// stored files exactly.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        sample_scene(SceneSpec::from_file(&dir.join("scene.txt"))?)
    }
}

/// Ground-truth flat positions for each vertex of a recovered 3D mesh:
/// closest point on the fine ground-truth surface, carried into the
/// layout through the shared anchor.
pub fn ground_truth_layout(scene: &Scene, recovered_space: &Mesh3) -> Result<Mesh2> {
    let fine = scene.gt_pair(GT_FINE_DIMS)?;
    let index = MeshDistanceIndex::build(&fine.space);
    let verts = recovered_space
        .vertices
        .iter()
        .map(|v| fine.plane.eval(&index.closest_point(*v).anchor))
        .collect::<Result<Vec<_>>>()?;
    Ok(Mesh2::new(recovered_space.dims, verts))
}
