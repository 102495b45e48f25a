//! Pinhole camera model: projection, back-projection, viewing rays and
//! ray-mesh intersection. The camera center is the origin of the one
//! coordinate system everything lives in.

use crate::error::{Error, Result};
use crate::geom::{BarycentricAnchor, Mesh3, Vec2, Vec3};
use std::path::Path;

/// Pinhole parameters: `u = f*ku*x/z + cu`, `v = f*kv*y/z + cv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub f: f64,
    pub ku: f64,
    pub kv: f64,
    pub cu: f64,
    pub cv: f64,
}

impl CameraIntrinsics {
    pub fn new(f: f64, ku: f64, kv: f64, cu: f64, cv: f64) -> Self {
        assert!(f * ku > 0.0 && f * kv > 0.0, "invalid intrinsics");
        CameraIntrinsics { f, ku, kv, cu, cv }
    }

    /// Read intrinsics from a key-value text file (`f`, `ku`, `kv`, `cu`,
    /// `cv`, one `key value` pair per line, `#` comments allowed).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut vals = std::collections::HashMap::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let key = it.next().unwrap().to_string();
            let val: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    file: path.to_path_buf(),
                    msg: format!("bad line: {line}"),
                })?;
            vals.insert(key, val);
        }
        let get = |k: &str| {
            vals.get(k).copied().ok_or_else(|| Error::Parse {
                file: path.to_path_buf(),
                msg: format!("missing key `{k}`"),
            })
        };
        let (f, ku, kv, cu, cv) = (get("f")?, get("ku")?, get("kv")?, get("cu")?, get("cv")?);
        if f * ku <= 0.0 || f * kv <= 0.0 {
            return Err(Error::Parse {
                file: path.to_path_buf(),
                msg: "f*ku and f*kv must be positive".into(),
            });
        }
        Ok(CameraIntrinsics { f, ku, kv, cu, cv })
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(
            path,
            format!(
                "f {}\nku {}\nkv {}\ncu {}\ncv {}\n",
                self.f, self.ku, self.kv, self.cu, self.cv
            ),
        )?;
        Ok(())
    }

    pub fn project(&self, p: Vec3) -> Result<Vec2> {
        if p.z <= 0.0 {
            return Err(Error::BehindCamera(p.z));
        }
        Ok(Vec2::new(
            self.f * self.ku * p.x / p.z + self.cu,
            self.f * self.kv * p.y / p.z + self.cv,
        ))
    }

    pub fn back_project(&self, pixel: Vec2, z: f64) -> Result<Vec3> {
        if z <= 0.0 {
            return Err(Error::BehindCamera(z));
        }
        Ok(Vec3::new(
            (pixel.x - self.cu) * z / (self.f * self.ku),
            (pixel.y - self.cv) * z / (self.f * self.kv),
            z,
        ))
    }

    /// The viewing ray through a pixel, with the two plane normals that
    /// express membership of a 3D point on the ray.
    pub fn viewing_ray(&self, pixel: Vec2) -> ViewingRay {
        let direction = self.back_project(pixel, 1.0).unwrap().normalize();
        ViewingRay::from_direction(direction)
    }
}

/// A ray from the camera center. A point `p` lies on the ray iff
/// `n1.p = 0` and `n2.p = 0`; the pair of residuals is the projection
/// constraint, and their squared sum is the squared point-to-ray distance.
#[derive(Clone, Copy, Debug)]
pub struct ViewingRay {
    pub direction: Vec3,
    pub n1: Vec3,
    pub n2: Vec3,
}

impl ViewingRay {
    pub fn from_direction(direction: Vec3) -> Self {
        let direction = direction.normalize();
        // Pick the seed axis least aligned with the direction.
        let seed = if direction.x.abs() <= direction.y.abs() && direction.x.abs() <= direction.z.abs()
        {
            Vec3::x()
        } else if direction.y.abs() <= direction.z.abs() {
            Vec3::y()
        } else {
            Vec3::z()
        };
        let n1 = direction.cross(&seed).normalize();
        let n2 = direction.cross(&n1);
        ViewingRay { direction, n1, n2 }
    }

    /// The two ray-membership residuals (n1.p, n2.p).
    pub fn residual(&self, p: Vec3) -> Vec2 {
        Vec2::new(self.n1.dot(&p), self.n2.dot(&p))
    }

    pub fn distance_to(&self, p: Vec3) -> f64 {
        self.residual(p).norm()
    }
}

const DET_EPS: f64 = 1e-12;

/// Moller-Trumbore intersection of an origin ray with one triangle.
/// Returns (t, barycentric weights) for hits with t > 0.
fn ray_triangle(dir: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Option<(f64, [f64; 3])> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < DET_EPS {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = -a; // ray origin is the camera center
    let u = tvec.dot(&pvec) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    if t <= DET_EPS {
        return None;
    }
    let w = [(1.0 - u - v).max(0.0), u.max(0.0), v.max(0.0)];
    let s = w[0] + w[1] + w[2];
    Some((t, [w[0] / s, w[1] / s, w[2] / s]))
}

/// Nearest intersection (smallest positive ray parameter) of the ray with
/// the 3D mesh, as a barycentric anchor; `None` on a miss. Ties on shared
/// edges resolve to the lowest (face, triangle) pair.
pub fn intersect_ray_mesh(ray: &ViewingRay, mesh: &Mesh3) -> Option<BarycentricAnchor> {
    let mut best: Option<(f64, BarycentricAnchor)> = None;
    for f in 0..mesh.dims.face_count() {
        for tri in 0..2u8 {
            let t = mesh.dims.triangle(f, tri).unwrap();
            let (a, b, c) = (mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
            if let Some((tp, w)) = ray_triangle(ray.direction, a, b, c) {
                if best.is_none_or(|(bt, _)| tp < bt - 1e-15) {
                    best = Some((tp, BarycentricAnchor::new(f, tri, w)));
                }
            }
        }
    }
    best.map(|(_, a)| a)
}
