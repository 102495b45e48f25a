//! Initial flattening of the 3D mesh into the plane: breadth-first face
//! development to seed a layout, then as-rigid-as-possible local/global
//! iterations to spread the distortion.
//!
//! The edge set is the grid edges plus both diagonals of every quad, so
//! each face contributes six springs and shearing is resisted.

use crate::error::{Error, Result};
use crate::geom::{GridDims, Mesh2, Mesh3, Vec2, Vec3};
use std::collections::VecDeque;

/// Isometrically develop one quad into local 2D coordinates: v0 at the
/// origin, v1 on the +x axis, winding preserved.
fn develop_face(mesh: &Mesh3, f: usize) -> Result<[Vec2; 4]> {
    let c = mesh.dims.face_corners(f)?;
    let v: Vec<Vec3> = c.iter().map(|&i| mesh.vertices[i]).collect();
    let l01 = (v[1] - v[0]).norm();
    if l01 < 1e-15 {
        return Err(Error::Degenerate(format!("zero-length edge in face {f}")));
    }
    let p0 = Vec2::zeros();
    let p1 = Vec2::new(l01, 0.0);
    // Triangle (v0, v1, v2) above the p0-p1 edge.
    let place = |a: Vec2, b: Vec2, ra: f64, rb: f64, side: f64| -> Vec2 {
        let d = b - a;
        let len = d.norm();
        let x = (len * len + ra * ra - rb * rb) / (2.0 * len);
        let y = (ra * ra - x * x).max(0.0).sqrt();
        let t = d / len;
        let n = Vec2::new(-t.y, t.x);
        a + t * x + n * (side * y)
    };
    let p2 = place(p0, p1, (v[2] - v[0]).norm(), (v[2] - v[1]).norm(), 1.0);
    // Triangle (v0, v2, v3) on the other side of the diagonal from p1.
    let diag = p2 - p0;
    let side1 = (diag.x * (p1 - p0).y - diag.y * (p1 - p0).x).signum();
    let p3 = place(p0, p2, (v[3] - v[0]).norm(), (v[3] - v[2]).norm(), -side1);
    Ok([p0, p1, p2, p3])
}

/// BFS face development from the center face: each visited face is
/// developed locally and rigidly aligned to the already-placed vertices of
/// the shared edge; newly reached vertices take the aligned positions.
fn bfs_seed(mesh: &Mesh3) -> Result<Mesh2> {
    let d = mesh.dims;
    let mut placed = vec![false; d.vertex_count()];
    let mut pos = vec![Vec2::zeros(); d.vertex_count()];
    let mut seen = vec![false; d.face_count()];
    let start = d.fid((d.n1 - 1) / 2, (d.n2 - 1) / 2);
    let local = develop_face(mesh, start)?;
    for (k, &vi) in d.face_corners(start)?.iter().enumerate() {
        pos[vi] = local[k];
        placed[vi] = true;
    }
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(f) = queue.pop_front() {
        let (fi, fj) = d.fpos(f);
        let mut neighbors = Vec::new();
        if fi > 0 {
            neighbors.push(d.fid(fi - 1, fj));
        }
        if fi + 2 < d.n1 {
            neighbors.push(d.fid(fi + 1, fj));
        }
        if fj > 0 {
            neighbors.push(d.fid(fi, fj - 1));
        }
        if fj + 2 < d.n2 {
            neighbors.push(d.fid(fi, fj + 1));
        }
        for nf in neighbors {
            if seen[nf] {
                continue;
            }
            seen[nf] = true;
            let corners = d.face_corners(nf)?;
            let local = develop_face(mesh, nf)?;
            // Rigidly align the local development to two already-placed
            // corners (the shared edge with the visited region).
            let anchored: Vec<usize> = (0..4).filter(|&k| placed[corners[k]]).collect();
            if anchored.len() < 2 {
                // Should not happen on a grid BFS, but stay safe.
                queue.push_back(nf);
                seen[nf] = false;
                continue;
            }
            let (ka, kb) = (anchored[0], anchored[1]);
            let (la, lb) = (local[ka], local[kb]);
            let (ga, gb) = (pos[corners[ka]], pos[corners[kb]]);
            let u = lb - la;
            let w = gb - ga;
            let ul = u.norm().max(1e-300);
            let wl = w.norm().max(1e-300);
            // Rotation taking u to w (no reflection; development preserved
            // the 3D winding so orientations agree).
            let cos = u.dot(&w) / (ul * wl);
            let sin = (u.x * w.y - u.y * w.x) / (ul * wl);
            let rot = |p: Vec2| -> Vec2 {
                let q = p - la;
                ga + Vec2::new(cos * q.x - sin * q.y, sin * q.x + cos * q.y)
            };
            for (k, &vi) in corners.iter().enumerate() {
                if !placed[vi] {
                    pos[vi] = rot(local[k]);
                    placed[vi] = true;
                }
            }
            queue.push_back(nf);
        }
    }
    if placed.iter().any(|&p| !p) {
        return Err(Error::Degenerate("seed development left vertices unplaced".into()));
    }
    Ok(Mesh2::new(d, pos))
}

// The spring set of one face: corner index pairs of the four edges and
// both diagonals.
const FACE_SPRINGS: [(usize, usize); 6] = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (1, 3)];

struct FaceRef {
    verts: [usize; 4],
    /// Rest 2D edge vectors of the six springs, from local development.
    rest: [Vec2; 6],
}

fn face_refs(mesh: &Mesh3) -> Result<Vec<FaceRef>> {
    let mut out = Vec::with_capacity(mesh.dims.face_count());
    for f in 0..mesh.dims.face_count() {
        let local = develop_face(mesh, f)?;
        let verts = mesh.dims.face_corners(f)?;
        let mut rest = [Vec2::zeros(); 6];
        for (s, &(a, b)) in FACE_SPRINGS.iter().enumerate() {
            rest[s] = local[b] - local[a];
        }
        out.push(FaceRef { verts, rest });
    }
    Ok(out)
}

/// Matrix-free conjugate gradients on the spring-graph Laplacian. The
/// nullspace (constants) is removed by mean-centering.
fn cg_laplacian(
    dims: GridDims,
    faces: &[FaceRef],
    rhs: &mut [Vec2],
    x: &mut [Vec2],
    iters: usize,
    tol: f64,
) {
    let n = dims.vertex_count();
    let apply = |v: &[Vec2], out: &mut [Vec2]| {
        for o in out.iter_mut() {
            *o = Vec2::zeros();
        }
        for fr in faces {
            for &(a, b) in FACE_SPRINGS.iter() {
                let (ia, ib) = (fr.verts[a], fr.verts[b]);
                let d = v[ia] - v[ib];
                out[ia] += d;
                out[ib] -= d;
            }
        }
    };
    let center = |v: &mut [Vec2]| {
        let mean = v.iter().fold(Vec2::zeros(), |s, p| s + p) / n as f64;
        for p in v.iter_mut() {
            *p -= mean;
        }
    };
    center(rhs);
    center(x);
    let mut r = vec![Vec2::zeros(); n];
    let mut ax = vec![Vec2::zeros(); n];
    apply(x, &mut ax);
    for i in 0..n {
        r[i] = rhs[i] - ax[i];
    }
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|v| v.norm_squared()).sum();
    let rhs_norm: f64 = rhs.iter().map(|v| v.norm_squared()).sum::<f64>().max(1e-300);
    let mut ap = vec![Vec2::zeros(); n];
    for _ in 0..iters {
        if rs / rhs_norm < tol * tol {
            break;
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(ap.iter()).map(|(a, b)| a.dot(b)).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        let rs_new: f64 = r.iter().map(|v| v.norm_squared()).sum();
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + p[i] * beta;
        }
        center(x);
    }
}

/// Flatten a 3D quad mesh into the plane. For developable (piecewise
/// planar or singly curved) input the result is near-isometric; the
/// pose in the plane is arbitrary (uprighting is the caller's job).
pub fn flatten(mesh: &Mesh3, arap_iters: usize) -> Result<Mesh2> {
    let seed = bfs_seed(mesh)?;
    let faces = face_refs(mesh)?;
    let n = mesh.dims.vertex_count();
    let mut cur: Vec<Vec2> = seed.vertices;
    let mut rhs = vec![Vec2::zeros(); n];
    for _ in 0..arap_iters {
        // Local step: best-fit rotation per face, then target edge vectors.
        for r in rhs.iter_mut() {
            *r = Vec2::zeros();
        }
        for fr in &faces {
            let (mut sa, mut sb) = (0.0, 0.0);
            for (s, &(a, b)) in FACE_SPRINGS.iter().enumerate() {
                let u = cur[fr.verts[b]] - cur[fr.verts[a]];
                let e = fr.rest[s];
                sa += u.x * e.x + u.y * e.y;
                sb += u.y * e.x - u.x * e.y;
            }
            let norm = (sa * sa + sb * sb).sqrt().max(1e-300);
            let (cos, sin) = (sa / norm, sb / norm);
            for (s, &(a, b)) in FACE_SPRINGS.iter().enumerate() {
                let e = fr.rest[s];
                let t = Vec2::new(cos * e.x - sin * e.y, sin * e.x + cos * e.y);
                rhs[fr.verts[a]] -= t;
                rhs[fr.verts[b]] += t;
            }
        }
        // Global step: Laplacian solve toward the rotated rest shapes.
        cg_laplacian(mesh.dims, &faces, &mut rhs, &mut cur, 200, 1e-10);
    }
    Ok(Mesh2::new(mesh.dims, cur))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{e_iso, StateLayout};
    use crate::geom::MeshPair;
    use approx::assert_relative_eq;

    fn iso_energy(space: &Mesh3, plane: &Mesh2) -> f64 {
        let pair = MeshPair::new(space.clone(), plane.clone()).unwrap();
        let layout = StateLayout { n_verts: space.dims.vertex_count(), n_lines: 0 };
        e_iso(&pair, &layout, None, 1.0)
    }

    #[test]
    fn planar_mesh_flattens_congruently() {
        let dims = GridDims::new(6, 8);
        let rot = nalgebra::Rotation3::from_euler_angles(0.4, -0.3, 0.9);
        let space = Mesh3::from_fn(dims, |i, j| {
            rot * Vec3::new(j as f64 * 0.1, i as f64 * 0.1, 0.0) + Vec3::new(0.2, 0.1, 2.0)
        });
        let flat = flatten(&space, 10).unwrap();
        assert!(iso_energy(&space, &flat) < 1e-10);
        // Edge lengths preserved exactly (up to numerics).
        for i in 0..dims.n1 {
            for j in 0..dims.n2 - 1 {
                let l3 = (space.vertex(i, j + 1) - space.vertex(i, j)).norm();
                let l2 = (flat.vertex(i, j + 1) - flat.vertex(i, j)).norm();
                assert_relative_eq!(l2, l3, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn single_fold_flattens_isometrically() {
        let dims = GridDims::new(8, 12);
        let (sx, sy) = (0.05, 0.05);
        let space = Mesh3::from_fn(dims, |i, j| {
            let x = j as f64 * sx;
            let y = i as f64 * sy;
            if x <= 0.3 {
                Vec3::new(x, y, 2.0)
            } else {
                // 90 degree fold upward at x = 0.3
                Vec3::new(0.3, y, 2.0 + (x - 0.3))
            }
        });
        let flat = flatten(&space, 30).unwrap();
        let area = 11.0 * sx * 7.0 * sy;
        let e = iso_energy(&space, &flat);
        assert!(e < 1e-8 * area, "fold flatten residual {e}");
        // Geodesic width across the fold is recovered.
        let w = (flat.vertex(0, dims.n2 - 1) - flat.vertex(0, 0)).norm();
        assert_relative_eq!(w, 11.0 * sx, epsilon = 1e-4);
    }

    #[test]
    fn cylinder_flattens_to_unrolled_rectangle() {
        let dims = GridDims::new(7, 15);
        let r = 0.5;
        let space = Mesh3::from_fn(dims, |i, j| {
            // Quarter cylinder: arc length along columns = r * angle.
            let theta = j as f64 / (dims.n2 - 1) as f64 * std::f64::consts::FRAC_PI_2;
            Vec3::new(r * theta.sin(), i as f64 * 0.08, 2.0 - r * theta.cos())
        });
        let flat = flatten(&space, 40).unwrap();
        // Unrolled width approximates the arc length r*pi/2; faceting of
        // the polygonal arc gives chord-length, slightly shorter.
        let w = (flat.vertex(3, dims.n2 - 1) - flat.vertex(3, 0)).norm();
        let chord_total: f64 = (0..dims.n2 - 1)
            .map(|j| (space.vertex(3, j + 1) - space.vertex(3, j)).norm())
            .sum();
        assert_relative_eq!(w, chord_total, epsilon = 1e-3);
        // Heights preserved.
        let h = (flat.vertex(dims.n1 - 1, 7) - flat.vertex(0, 7)).norm();
        assert_relative_eq!(h, 6.0 * 0.08, epsilon = 1e-4);
    }

    #[test]
    fn degenerate_face_is_error() {
        let dims = GridDims::new(2, 2);
        let space = Mesh3::new(dims, vec![Vec3::new(0.0, 0.0, 1.0); 4]);
        assert!(flatten(&space, 5).is_err());
    }
}
