//! The six energy terms of the rectification objective and their analytic
//! gradients with respect to the 3D vertices, the planar vertices, and the
//! fitted-line parameters.
//!
//! The unknown vector is packed as `[V (3 per vertex) | V' (2 per vertex) |
//! (theta, c) per feature line]`. Fitted lines are parameterized by angle
//! so the unit-normal constraint holds implicitly: `n = (cos t, sin t)`,
//! line `n.x = c`.

use crate::camera::ViewingRay;
use crate::error::{Error, Result};
use crate::geom::{BarycentricAnchor, Mesh2, Mesh3, MeshPair, Vec2, Vec3};
use nalgebra::DVector;

pub const BETA1: f64 = 1.0;
pub const BETA2: f64 = 0.1;

/// Weights and loop parameters of the objective.
#[derive(Clone, Copy, Debug)]
pub struct WeightSchedule {
    /// E_iso
    pub l1: f64,
    /// E_dist
    pub l2: f64,
    /// E_fair of the 3D mesh
    pub l3: f64,
    /// E_fair of the planar mesh
    pub l4: f64,
    /// E_line
    pub l5: f64,
    /// E_ray
    pub l6: f64,
    /// Multiplier applied to l5, l6 after each subdivision.
    pub escalation: f64,
    /// Relative-decrease convergence tolerance of the inner loop.
    pub eps: f64,
    /// Max inner iterations per round.
    pub q_max: usize,
    /// Number of optimization rounds (subdivisions + 1).
    pub rounds: usize,
}

impl Default for WeightSchedule {
    fn default() -> Self {
        WeightSchedule {
            l1: 1.0,
            l2: 1.0,
            l3: 1e-4,
            l4: 0.1,
            l5: 1.0,
            l6: 1.0,
            escalation: 4.0,
            eps: 0.01,
            q_max: 100,
            rounds: 4,
        }
    }
}

impl WeightSchedule {
    pub fn validate(&self) -> Result<()> {
        let ws = [self.l1, self.l2, self.l3, self.l4, self.l5, self.l6];
        if ws.iter().any(|w| *w < 0.0) || self.eps <= 0.0 || self.q_max < 1 || self.rounds < 1 {
            return Err(Error::Degenerate("invalid weight schedule".into()));
        }
        Ok(())
    }

    /// Copy with the feature-line weights zeroed (initial refinement).
    pub fn without_features(mut self) -> Self {
        self.l5 = 0.0;
        self.l6 = 0.0;
        self
    }
}

/// One point-to-mesh correspondence, frozen for the duration of a solve.
#[derive(Clone, Copy, Debug)]
pub struct DistCorr {
    pub point: Vec3,
    pub anchor: BarycentricAnchor,
    pub normal: Vec3,
}

/// One feature point: its anchor (shared by both meshes) and its viewing ray.
#[derive(Clone, Copy, Debug)]
pub struct FeaturePoint {
    pub line: usize,
    pub anchor: BarycentricAnchor,
    pub ray: ViewingRay,
}

/// All correspondence data held fixed within one solve.
#[derive(Clone, Debug, Default)]
pub struct FrozenData {
    pub dist: Vec<DistCorr>,
    pub feature_points: Vec<FeaturePoint>,
    pub n_lines: usize,
}

/// Per-term values (unweighted), the weighted total, and the stacked gradient.
#[derive(Clone, Debug)]
pub struct EnergyReport {
    pub e_iso: f64,
    pub e_dist: f64,
    pub e_fair_m: f64,
    pub e_fair_mp: f64,
    pub e_line: f64,
    pub e_ray: f64,
    pub total: f64,
    pub grad: DVector<f64>,
}

/// Index layout of the packed unknown vector.
#[derive(Clone, Copy, Debug)]
pub struct StateLayout {
    pub n_verts: usize,
    pub n_lines: usize,
}

impl StateLayout {
    pub fn len(&self) -> usize {
        5 * self.n_verts + 2 * self.n_lines
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn v3(&self, i: usize) -> usize {
        3 * i
    }

    #[inline]
    pub fn v2(&self, i: usize) -> usize {
        3 * self.n_verts + 2 * i
    }

    #[inline]
    pub fn line(&self, l: usize) -> usize {
        5 * self.n_verts + 2 * l
    }

    pub fn pack(&self, pair: &MeshPair, lines: &[(f64, f64)]) -> DVector<f64> {
        assert_eq!(pair.dims().vertex_count(), self.n_verts);
        assert_eq!(lines.len(), self.n_lines);
        let mut x = DVector::zeros(self.len());
        for (i, v) in pair.space.vertices.iter().enumerate() {
            x[self.v3(i)] = v.x;
            x[self.v3(i) + 1] = v.y;
            x[self.v3(i) + 2] = v.z;
        }
        for (i, v) in pair.plane.vertices.iter().enumerate() {
            x[self.v2(i)] = v.x;
            x[self.v2(i) + 1] = v.y;
        }
        for (l, (theta, c)) in lines.iter().enumerate() {
            x[self.line(l)] = *theta;
            x[self.line(l) + 1] = *c;
        }
        x
    }

    pub fn unpack(&self, x: &DVector<f64>, pair: &mut MeshPair, lines: &mut [(f64, f64)]) {
        for (i, v) in pair.space.vertices.iter_mut().enumerate() {
            v.x = x[self.v3(i)];
            v.y = x[self.v3(i) + 1];
            v.z = x[self.v3(i) + 2];
        }
        for (i, v) in pair.plane.vertices.iter_mut().enumerate() {
            v.x = x[self.v2(i)];
            v.y = x[self.v2(i) + 1];
        }
        for (l, lp) in lines.iter_mut().enumerate() {
            lp.0 = x[self.line(l)];
            lp.1 = x[self.line(l) + 1];
        }
    }
}

fn add3(grad: &mut DVector<f64>, at: usize, v: Vec3) {
    grad[at] += v.x;
    grad[at + 1] += v.y;
    grad[at + 2] += v.z;
}

fn add2(grad: &mut DVector<f64>, at: usize, v: Vec2) {
    grad[at] += v.x;
    grad[at + 1] += v.y;
}

/// Per-face isometry residuals (c1, c2, c3): the two diagonal
/// length-squared mismatches and the diagonal inner-product mismatch
/// between the 3D mesh and its planar counterpart.
pub fn iso_face_residuals(pair: &MeshPair) -> Vec<[f64; 3]> {
    let dims = pair.dims();
    let mut out = Vec::with_capacity(dims.face_count());
    for f in 0..dims.face_count() {
        let c = dims.face_corners(f).unwrap();
        let d02 = pair.space.vertices[c[0]] - pair.space.vertices[c[2]];
        let d13 = pair.space.vertices[c[1]] - pair.space.vertices[c[3]];
        let p02 = pair.plane.vertices[c[0]] - pair.plane.vertices[c[2]];
        let p13 = pair.plane.vertices[c[1]] - pair.plane.vertices[c[3]];
        out.push([
            d02.norm_squared() - p02.norm_squared(),
            d13.norm_squared() - p13.norm_squared(),
            d02.dot(&d13) - p02.dot(&p13),
        ]);
    }
    out
}

/// Isometric-mapping energy: per face, squared residuals of the two
/// diagonal lengths and the diagonal inner product between the pair.
pub fn e_iso(pair: &MeshPair, layout: &StateLayout, grad: Option<&mut DVector<f64>>, weight: f64) -> f64 {
    let dims = pair.dims();
    let mut total = 0.0;
    let mut g = grad;
    for f in 0..dims.face_count() {
        let c = dims.face_corners(f).unwrap();
        let d02 = pair.space.vertices[c[0]] - pair.space.vertices[c[2]];
        let d13 = pair.space.vertices[c[1]] - pair.space.vertices[c[3]];
        let p02 = pair.plane.vertices[c[0]] - pair.plane.vertices[c[2]];
        let p13 = pair.plane.vertices[c[1]] - pair.plane.vertices[c[3]];
        let c1 = d02.norm_squared() - p02.norm_squared();
        let c2 = d13.norm_squared() - p13.norm_squared();
        let c3 = d02.dot(&d13) - p02.dot(&p13);
        total += c1 * c1 + c2 * c2 + c3 * c3;
        if let Some(g) = g.as_deref_mut() {
            let w = weight;
            // c1: d/dv0 = 2*d02, d/dv2 = -2*d02; primes negated
            add3(g, layout.v3(c[0]), d02 * (4.0 * c1 * w));
            add3(g, layout.v3(c[2]), d02 * (-4.0 * c1 * w));
            add2(g, layout.v2(c[0]), p02 * (-4.0 * c1 * w));
            add2(g, layout.v2(c[2]), p02 * (4.0 * c1 * w));
            // c2
            add3(g, layout.v3(c[1]), d13 * (4.0 * c2 * w));
            add3(g, layout.v3(c[3]), d13 * (-4.0 * c2 * w));
            add2(g, layout.v2(c[1]), p13 * (-4.0 * c2 * w));
            add2(g, layout.v2(c[3]), p13 * (4.0 * c2 * w));
            // c3: d/dv0 = d13, d/dv2 = -d13, d/dv1 = d02, d/dv3 = -d02
            add3(g, layout.v3(c[0]), d13 * (2.0 * c3 * w));
            add3(g, layout.v3(c[2]), d13 * (-2.0 * c3 * w));
            add3(g, layout.v3(c[1]), d02 * (2.0 * c3 * w));
            add3(g, layout.v3(c[3]), d02 * (-2.0 * c3 * w));
            add2(g, layout.v2(c[0]), p13 * (-2.0 * c3 * w));
            add2(g, layout.v2(c[2]), p13 * (2.0 * c3 * w));
            add2(g, layout.v2(c[1]), p02 * (-2.0 * c3 * w));
            add2(g, layout.v2(c[3]), p02 * (2.0 * c3 * w));
        }
    }
    total
}

/// Fairness of the 3D mesh: second differences along rows and columns.
pub fn e_fair_space(mesh: &Mesh3, layout: &StateLayout, grad: Option<&mut DVector<f64>>, weight: f64) -> f64 {
    let d = mesh.dims;
    let mut total = 0.0;
    let mut g = grad;
    let mut visit = |a: usize, b: usize, c: usize| {
        let r = mesh.vertices[a] - mesh.vertices[b] * 2.0 + mesh.vertices[c];
        total += r.norm_squared();
        if let Some(g) = g.as_deref_mut() {
            add3(g, layout.v3(a), r * (2.0 * weight));
            add3(g, layout.v3(b), r * (-4.0 * weight));
            add3(g, layout.v3(c), r * (2.0 * weight));
        }
    };
    for i in 0..d.n1 {
        for j in 1..d.n2 - 1 {
            visit(d.vid(i, j - 1), d.vid(i, j), d.vid(i, j + 1));
        }
    }
    for j in 0..d.n2 {
        for i in 1..d.n1 - 1 {
            visit(d.vid(i - 1, j), d.vid(i, j), d.vid(i + 1, j));
        }
    }
    total
}

/// Fairness of the planar mesh.
pub fn e_fair_plane(mesh: &Mesh2, layout: &StateLayout, grad: Option<&mut DVector<f64>>, weight: f64) -> f64 {
    let d = mesh.dims;
    let mut total = 0.0;
    let mut g = grad;
    let mut visit = |a: usize, b: usize, c: usize| {
        let r = mesh.vertices[a] - mesh.vertices[b] * 2.0 + mesh.vertices[c];
        total += r.norm_squared();
        if let Some(g) = g.as_deref_mut() {
            add2(g, layout.v2(a), r * (2.0 * weight));
            add2(g, layout.v2(b), r * (-4.0 * weight));
            add2(g, layout.v2(c), r * (2.0 * weight));
        }
    };
    for i in 0..d.n1 {
        for j in 1..d.n2 - 1 {
            visit(d.vid(i, j - 1), d.vid(i, j), d.vid(i, j + 1));
        }
    }
    for j in 0..d.n2 {
        for i in 1..d.n1 - 1 {
            visit(d.vid(i - 1, j), d.vid(i, j), d.vid(i + 1, j));
        }
    }
    total
}

/// Blended point-point / point-tangent distance from the valid data points
/// to their frozen footpoints.
pub fn e_dist(
    mesh: &Mesh3,
    corrs: &[DistCorr],
    layout: &StateLayout,
    grad: Option<&mut DVector<f64>>,
    weight: f64,
) -> Result<f64> {
    if corrs.is_empty() {
        return Err(Error::NoValidPoints);
    }
    let inv_h1 = 1.0 / corrs.len() as f64;
    let mut total = 0.0;
    let mut g = grad;
    for corr in corrs {
        let t = mesh.dims.triangle(corr.anchor.face, corr.anchor.tri)?;
        let w = corr.anchor.weights;
        let foot = mesh.vertices[t[0]] * w[0] + mesh.vertices[t[1]] * w[1] + mesh.vertices[t[2]] * w[2];
        let r = corr.point - foot;
        let rn = r.dot(&corr.normal);
        total += BETA1 * r.norm_squared() + BETA2 * rn * rn;
        if let Some(g) = g.as_deref_mut() {
            // d/dv_i of the residual is -w_i * identity.
            let common = (r * (2.0 * BETA1) + corr.normal * (2.0 * BETA2 * rn)) * (-inv_h1 * weight);
            for k in 0..3 {
                add3(g, layout.v3(t[k]), common * w[k]);
            }
        }
    }
    Ok(total * inv_h1)
}

/// Ray-membership energy of the 3D feature points.
pub fn e_ray(
    mesh: &Mesh3,
    points: &[FeaturePoint],
    layout: &StateLayout,
    grad: Option<&mut DVector<f64>>,
    weight: f64,
) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let inv_h2 = 1.0 / points.len() as f64;
    let mut total = 0.0;
    let mut g = grad;
    for fp in points {
        let t = mesh.dims.triangle(fp.anchor.face, fp.anchor.tri)?;
        let w = fp.anchor.weights;
        let p = mesh.vertices[t[0]] * w[0] + mesh.vertices[t[1]] * w[1] + mesh.vertices[t[2]] * w[2];
        let r1 = fp.ray.n1.dot(&p);
        let r2 = fp.ray.n2.dot(&p);
        total += r1 * r1 + r2 * r2;
        if let Some(g) = g.as_deref_mut() {
            let common = (fp.ray.n1 * (2.0 * r1) + fp.ray.n2 * (2.0 * r2)) * (inv_h2 * weight);
            for k in 0..3 {
                add3(g, layout.v3(t[k]), common * w[k]);
            }
        }
    }
    Ok(total * inv_h2)
}

/// Straightness of the planar feature points against their fitted lines.
/// Gradients flow into both the planar vertices and the line parameters.
pub fn e_line(
    mesh: &Mesh2,
    points: &[FeaturePoint],
    line_params: &[(f64, f64)],
    layout: &StateLayout,
    grad: Option<&mut DVector<f64>>,
    weight: f64,
) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let inv_h2 = 1.0 / points.len() as f64;
    let mut total = 0.0;
    let mut g = grad;
    for fp in points {
        let (theta, c) = line_params[fp.line];
        let n = Vec2::new(theta.cos(), theta.sin());
        let dn = Vec2::new(-theta.sin(), theta.cos());
        let t = mesh.dims.triangle(fp.anchor.face, fp.anchor.tri)?;
        let w = fp.anchor.weights;
        let p = mesh.vertices[t[0]] * w[0] + mesh.vertices[t[1]] * w[1] + mesh.vertices[t[2]] * w[2];
        let r = n.dot(&p) - c;
        total += r * r;
        if let Some(g) = g.as_deref_mut() {
            let gv = n * (2.0 * r * inv_h2 * weight);
            for k in 0..3 {
                add2(g, layout.v2(t[k]), gv * w[k]);
            }
            g[layout.line(fp.line)] += 2.0 * r * dn.dot(&p) * inv_h2 * weight;
            g[layout.line(fp.line) + 1] += -2.0 * r * inv_h2 * weight;
        }
    }
    Ok(total * inv_h2)
}

/// Full objective: weighted sum of the six terms with the stacked gradient
/// over (V, V', line parameters).
pub fn total_objective(
    pair: &MeshPair,
    frozen: &FrozenData,
    line_params: &[(f64, f64)],
    schedule: &WeightSchedule,
) -> Result<EnergyReport> {
    let layout = StateLayout {
        n_verts: pair.dims().vertex_count(),
        n_lines: line_params.len(),
    };
    let mut grad = DVector::zeros(layout.len());
    let iso = e_iso(pair, &layout, Some(&mut grad), schedule.l1);
    let dist = if frozen.dist.is_empty() && schedule.l2 == 0.0 {
        0.0
    } else {
        e_dist(&pair.space, &frozen.dist, &layout, Some(&mut grad), schedule.l2)?
    };
    let fair_m = e_fair_space(&pair.space, &layout, Some(&mut grad), schedule.l3);
    let fair_mp = e_fair_plane(&pair.plane, &layout, Some(&mut grad), schedule.l4);
    let line = e_line(
        &pair.plane,
        &frozen.feature_points,
        line_params,
        &layout,
        Some(&mut grad),
        schedule.l5,
    )?;
    let ray = e_ray(&pair.space, &frozen.feature_points, &layout, Some(&mut grad), schedule.l6)?;
    let total = schedule.l1 * iso
        + schedule.l2 * dist
        + schedule.l3 * fair_m
        + schedule.l4 * fair_mp
        + schedule.l5 * line
        + schedule.l6 * ray;
    Ok(EnergyReport {
        e_iso: iso,
        e_dist: dist,
        e_fair_m: fair_m,
        e_fair_mp: fair_mp,
        e_line: line,
        e_ray: ray,
        total,
        grad,
    })
}
