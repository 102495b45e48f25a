//! Point cloud storage, k-d tree queries, and exact closest-point
//! computation against the active 3D mesh.

use crate::error::{Error, Result};
use crate::geom::{BarycentricAnchor, Mesh3, Vec3};
use std::path::Path;

/// The input 3D points with per-point validity flags. Points never move;
/// filtering only toggles the mask.
#[derive(Clone, Debug)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub valid: Vec<bool>,
    /// Axis-aligned bounding-box diagonal at load time; distance
    /// tolerances are interpreted relative to this scale.
    pub diag: f64,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::TooFewPoints { need: 1, got: 0 });
        }
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for p in &points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let diag = (hi - lo).norm();
        let valid = vec![true; points.len()];
        Ok(PointCloud { points, valid, diag })
    }

    /// Load from text, one `x y z` per line. NaN/Inf are rejected.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut points = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    file: path.to_path_buf(),
                    msg: format!("line {}: {e}", ln + 1),
                })?;
            if vals.len() != 3 || vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    file: path.to_path_buf(),
                    msg: format!("line {}: expected three finite coordinates", ln + 1),
                });
            }
            points.push(Vec3::new(vals[0], vals[1], vals[2]));
        }
        PointCloud::new(points)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for p in &self.points {
            writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
        }
        Ok(())
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Static k-d tree over D-dimensional points. Exact queries; ties broken
/// by lower point index.
pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    // node i covers order[range]; flat recursion by median split
    order: Vec<u32>,
}

struct Heap {
    // max-heap of (dist2, idx) capped at k
    items: Vec<(f64, u32)>,
    k: usize,
}

impl Heap {
    fn push(&mut self, d2: f64, idx: u32) {
        if self.items.len() < self.k {
            self.items.push((d2, idx));
            self.items.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1).reverse()));
        } else if self.better(d2, idx) {
            self.items[0] = (d2, idx);
            self.items.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1).reverse()));
        }
    }
    fn better(&self, d2: f64, idx: u32) -> bool {
        let (wd, wi) = self.items[0];
        d2 < wd || (d2 == wd && idx < wi)
    }
    fn bound(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[0].0
        }
    }
}

impl<const D: usize> KdTree<D> {
    pub fn build(points: Vec<[f64; D]>) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let n = order.len();
        if n > 0 {
            Self::split(&points, &mut order, 0, n, 0);
        }
        KdTree { points, order }
    }

    fn split(points: &[[f64; D]], order: &mut [u32], lo: usize, hi: usize, depth: usize) {
        if hi - lo <= 1 {
            return;
        }
        let axis = depth % D;
        let mid = (lo + hi) / 2;
        order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a as usize][axis]
                .partial_cmp(&points[b as usize][axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        Self::split(points, order, lo, mid, depth + 1);
        Self::split(points, order, mid + 1, hi, depth + 1);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn dist2(a: &[f64; D], b: &[f64; D]) -> f64 {
        let mut s = 0.0;
        for i in 0..D {
            let d = a[i] - b[i];
            s += d * d;
        }
        s
    }

    /// Indices of the k nearest points, sorted by (distance, index).
    pub fn knn(&self, query: &[f64; D], k: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.points.len() {
            return Err(Error::TooFewPoints { need: k, got: self.points.len() });
        }
        let mut heap = Heap { items: Vec::with_capacity(k), k };
        self.knn_rec(query, 0, self.order.len(), 0, &mut heap);
        let mut out: Vec<(f64, u32)> = heap.items;
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        Ok(out.into_iter().map(|(_, i)| i as usize).collect())
    }

    fn knn_rec(&self, q: &[f64; D], lo: usize, hi: usize, depth: usize, heap: &mut Heap) {
        if lo >= hi {
            return;
        }
        let axis = depth % D;
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx as usize];
        let d2 = Self::dist2(q, p);
        if heap.items.len() < heap.k || heap.better(d2, idx) {
            heap.push(d2, idx);
        }
        let delta = q[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(q, near.0, near.1, depth + 1, heap);
        if delta * delta <= heap.bound() {
            self.knn_rec(q, far.0, far.1, depth + 1, heap);
        }
    }

    pub fn nearest(&self, query: &[f64; D]) -> Option<(usize, f64)> {
        if self.is_empty() {
            return None;
        }
        let idx = self.knn(query, 1).ok()?[0];
        Some((idx, Self::dist2(query, &self.points[idx]).sqrt()))
    }

    /// All indices within `radius` of the query (unsorted).
    pub fn within_radius(&self, query: &[f64; D], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_rec(query, radius * radius, 0, self.order.len(), 0, &mut out);
        out
    }

    fn radius_rec(&self, q: &[f64; D], r2: f64, lo: usize, hi: usize, depth: usize, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let axis = depth % D;
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx as usize];
        if Self::dist2(q, p) <= r2 {
            out.push(idx as usize);
        }
        let delta = q[axis] - p[axis];
        if delta < 0.0 || delta * delta <= r2 {
            self.radius_rec(q, r2, lo, mid, depth + 1, out);
        }
        if delta >= 0.0 || delta * delta <= r2 {
            self.radius_rec(q, r2, mid + 1, hi, depth + 1, out);
        }
    }
}

/// Closest point to `p` in 3D triangle (a,b,c) with barycentric weights.
/// Region classification per the standard Voronoi-region method.
pub fn closest_point_in_triangle3(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

/// Result of a closest-point query against the mesh.
#[derive(Clone, Copy, Debug)]
pub struct Footpoint {
    pub anchor: BarycentricAnchor,
    pub point: Vec3,
    pub normal: Vec3,
    pub distance: f64,
}

/// Exact closest-point queries against a fixed mesh state. A k-d tree
/// over triangle centroids prunes candidates; every centroid within
/// best-so-far + max circumradius is still tested, so results match the
/// brute-force scan exactly.
pub struct MeshDistanceIndex {
    tris: Vec<(usize, u8, Vec3, Vec3, Vec3)>,
    centroids: KdTree<3>,
    max_radius: f64,
}

impl MeshDistanceIndex {
    pub fn build(mesh: &Mesh3) -> Self {
        let mut tris = Vec::with_capacity(mesh.dims.face_count() * 2);
        let mut cents = Vec::with_capacity(tris.capacity());
        let mut max_radius: f64 = 0.0;
        for f in 0..mesh.dims.face_count() {
            for tri in 0..2u8 {
                let t = mesh.dims.triangle(f, tri).unwrap();
                let (a, b, c) = (mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
                let cen = (a + b + c) / 3.0;
                let r = (a - cen)
                    .norm()
                    .max((b - cen).norm())
                    .max((c - cen).norm());
                max_radius = max_radius.max(r);
                tris.push((f, tri, a, b, c));
                cents.push([cen.x, cen.y, cen.z]);
            }
        }
        MeshDistanceIndex { tris, centroids: KdTree::build(cents), max_radius }
    }

    pub fn closest_point(&self, x: Vec3) -> Footpoint {
        let q = [x.x, x.y, x.z];
        let (seed, _) = self.centroids.nearest(&q).expect("mesh has triangles");
        let mut best = self.eval_triangle(seed, x);
        let mut cands = self
            .centroids
            .within_radius(&q, best.distance + self.max_radius);
        cands.sort_unstable();
        for ti in cands {
            if ti == seed {
                continue;
            }
            let fp = self.eval_triangle(ti, x);
            if fp.distance < best.distance - 1e-15
                || (fp.distance <= best.distance + 1e-15
                    && (fp.anchor.face, fp.anchor.tri) < (best.anchor.face, best.anchor.tri))
            {
                best = fp;
            }
        }
        best
    }

    fn eval_triangle(&self, ti: usize, x: Vec3) -> Footpoint {
        let (f, tri, a, b, c) = self.tris[ti];
        let (q, w) = closest_point_in_triangle3(x, a, b, c);
        let n = (b - a).cross(&(c - a));
        let normal = if n.norm() > 0.0 { n.normalize() } else { Vec3::z() };
        Footpoint {
            anchor: BarycentricAnchor::new(f, tri, w),
            point: q,
            normal,
            distance: (x - q).norm(),
        }
    }
}

/// Brute-force closest point over every triangle; the oracle the index is
/// checked against.
pub fn closest_point_brute(mesh: &Mesh3, x: Vec3) -> Footpoint {
    let mut best: Option<Footpoint> = None;
    for f in 0..mesh.dims.face_count() {
        for tri in 0..2u8 {
            let t = mesh.dims.triangle(f, tri).unwrap();
            let (a, b, c) = (mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
            let (q, w) = closest_point_in_triangle3(x, a, b, c);
            let d = (x - q).norm();
            if best.as_ref().is_none_or(|bf| d < bf.distance - 1e-15) {
                let n = (b - a).cross(&(c - a));
                best = Some(Footpoint {
                    anchor: BarycentricAnchor::new(f, tri, w),
                    point: q,
                    normal: if n.norm() > 0.0 { n.normalize() } else { Vec3::z() },
                    distance: d,
                });
            }
        }
    }
    best.unwrap()
}

/// Update the validity mask: a point stays valid iff its distance to the
/// active mesh is at most `phi`. Returns the number of valid points.
pub fn filter_noise(cloud: &mut PointCloud, index: &MeshDistanceIndex, phi: f64) -> usize {
    let mut count = 0;
    for (i, p) in cloud.points.iter().enumerate() {
        let ok = index.closest_point(*p).distance <= phi;
        cloud.valid[i] = ok;
        count += ok as usize;
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::GridDims;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn knn_stored_point_first() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let tree = KdTree::build(pts);
        assert_eq!(tree.knn(&[1.0, 0.0], 2).unwrap()[0], 1);
    }

    #[test]
    fn knn_all_points_sorted() {
        let pts = vec![[3.0], [1.0], [2.0]];
        let tree = KdTree::build(pts);
        assert_eq!(tree.knn(&[0.0], 3).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn knn_empty_is_error() {
        let tree: KdTree<2> = KdTree::build(vec![]);
        assert!(tree.knn(&[0.0, 0.0], 1).is_err());
    }

    #[test]
    fn knn_matches_linear_scan() {
        let mut r = rng(11);
        let pts: Vec<[f64; 3]> = (0..800)
            .map(|_| [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)])
            .collect();
        let tree = KdTree::build(pts.clone());
        for _ in 0..500 {
            let q = [r.gen_range(-1.2..1.2), r.gen_range(-1.2..1.2), r.gen_range(-1.2..1.2)];
            let k = r.gen_range(1..8);
            let got = tree.knn(&q, k).unwrap();
            let mut idx: Vec<usize> = (0..pts.len()).collect();
            idx.sort_by(|&a, &b| {
                let da: f64 = (0..3).map(|i| (pts[a][i] - q[i]).powi(2)).sum();
                let db: f64 = (0..3).map(|i| (pts[b][i] - q[i]).powi(2)).sum();
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            });
            assert_eq!(got, idx[..k].to_vec());
        }
    }

    fn wavy_mesh() -> Mesh3 {
        Mesh3::from_fn(GridDims::new(7, 8), |i, j| {
            let x = j as f64 * 0.2;
            let y = i as f64 * 0.2;
            Vec3::new(x, y, 2.0 + 0.4 * (2.0 * x).sin() + 0.2 * (3.0 * y).cos())
        })
    }

    #[test]
    fn closest_point_on_vertex_is_exact() {
        let mesh = wavy_mesh();
        let idx = MeshDistanceIndex::build(&mesh);
        let v = mesh.vertices[10];
        let fp = idx.closest_point(v);
        assert!(fp.distance < 1e-12);
        assert!(fp.anchor.weights.iter().any(|&w| (w - 1.0).abs() < 1e-9));
    }

    #[test]
    fn point_above_face_center() {
        let mesh = Mesh3::from_fn(GridDims::new(2, 2), |i, j| {
            Vec3::new(j as f64, i as f64, 1.0)
        });
        let idx = MeshDistanceIndex::build(&mesh);
        let h = 0.3;
        let fp = idx.closest_point(Vec3::new(0.5, 0.5, 1.0 + h));
        assert!((fp.distance - h).abs() < 1e-12);
        let off = Vec3::new(0.5, 0.5, 1.0 + h) - fp.point;
        assert!((off.dot(&fp.normal).abs() - h).abs() < 1e-12);
    }

    #[test]
    fn index_matches_brute_force() {
        let mesh = wavy_mesh();
        let idx = MeshDistanceIndex::build(&mesh);
        let mut r = rng(12);
        for _ in 0..1000 {
            let x = Vec3::new(
                r.gen_range(-0.3..1.7),
                r.gen_range(-0.3..1.5),
                r.gen_range(1.0..3.2),
            );
            let a = idx.closest_point(x);
            let b = closest_point_brute(&mesh, x);
            assert!(
                (a.point - b.point).norm() < 1e-9,
                "footpoint mismatch at {x:?}: {a:?} vs {b:?}"
            );
        }
    }

    #[test]
    fn filter_monotone_in_phi() {
        let mesh = wavy_mesh();
        let idx = MeshDistanceIndex::build(&mesh);
        let mut r = rng(13);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| Vec3::new(r.gen_range(0.0..1.4), r.gen_range(0.0..1.2), r.gen_range(1.5..2.8)))
            .collect();
        let mut cloud = PointCloud::new(pts).unwrap();
        filter_noise(&mut cloud, &idx, 0.05);
        let small = cloud.valid.clone();
        filter_noise(&mut cloud, &idx, 0.2);
        for (s, l) in small.iter().zip(cloud.valid.iter()) {
            assert!(!s || *l, "phi monotonicity violated");
        }
    }

    #[test]
    fn filter_extremes() {
        let mesh = wavy_mesh();
        let idx = MeshDistanceIndex::build(&mesh);
        let mut cloud = PointCloud::new(vec![Vec3::new(0.5, 0.5, 10.0); 4]).unwrap();
        assert_eq!(filter_noise(&mut cloud, &idx, f64::INFINITY), 4);
        assert_eq!(filter_noise(&mut cloud, &idx, 0.0), 0);
    }

    #[test]
    fn loader_rejects_nan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.xyz");
        std::fs::write(&path, "0 0 1\nnan 0 1\n").unwrap();
        assert!(PointCloud::from_file(&path).is_err());
    }
}
