//! Central finite-difference verification of every analytic gradient.
//!
//! Used both by the test suite and the `gradcheck` CLI command. The FD
//! route shares no code with the analytic gradients it checks.

use crate::camera::ViewingRay;
use crate::energy::{self, DistCorr, FeaturePoint, FrozenData, StateLayout, WeightSchedule};
use crate::geom::{BarycentricAnchor, GridDims, Mesh2, Mesh3, MeshPair, Vec2, Vec3};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;
pub const DEFAULT_REL_TOL: f64 = 1e-5;
pub const DEFAULT_ABS_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct TermCheck {
    pub term: &'static str,
    pub seed: u64,
    /// Worst (|analytic - fd|, component index) over the state vector.
    pub worst_abs: f64,
    pub worst_component: usize,
    pub worst_scale: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default)]
pub struct GradcheckReport {
    pub checks: Vec<TermCheck>,
}

impl GradcheckReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn worst(&self) -> Option<&TermCheck> {
        self.checks
            .iter()
            .max_by(|a, b| {
                let ra = a.worst_abs / a.worst_scale.max(1.0);
                let rb = b.worst_abs / b.worst_scale.max(1.0);
                ra.partial_cmp(&rb).unwrap()
            })
    }
}

/// Random 5x7 pair with correspondences, mirroring a mid-solve state.
pub fn random_state(seed: u64) -> (MeshPair, FrozenData, Vec<(f64, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = GridDims::new(5, 7);
    let plane = Mesh2::from_fn(dims, |i, j| {
        Vec2::new(
            j as f64 * 0.1 + rng.gen_range(-0.015..0.015),
            i as f64 * 0.1 + rng.gen_range(-0.015..0.015),
        )
    });
    let space = Mesh3::from_fn(dims, |i, j| {
        Vec3::new(
            j as f64 * 0.1 - 0.3 + rng.gen_range(-0.015..0.015),
            i as f64 * 0.1 - 0.2 + rng.gen_range(-0.015..0.015),
            2.0 + rng.gen_range(-0.08..0.08),
        )
    });
    let pair = MeshPair::new(space, plane).unwrap();
    let mut frozen = FrozenData { dist: Vec::new(), feature_points: Vec::new(), n_lines: 3 };
    let random_anchor = |rng: &mut ChaCha8Rng| {
        let face = rng.gen_range(0..dims.face_count());
        let tri = rng.gen_range(0..2u8);
        let (mut a, mut b) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        if a + b > 1.0 {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        BarycentricAnchor::new(face, tri, [1.0 - a - b, a, b])
    };
    for _ in 0..60 {
        let anchor = random_anchor(&mut rng);
        let foot = pair.space.eval(&anchor).unwrap();
        let normal = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), 1.0).normalize();
        frozen.dist.push(DistCorr {
            point: foot
                + Vec3::new(
                    rng.gen_range(-0.03..0.03),
                    rng.gen_range(-0.03..0.03),
                    rng.gen_range(-0.03..0.03),
                ),
            anchor,
            normal,
        });
    }
    for line in 0..3 {
        for _ in 0..7 {
            let anchor = random_anchor(&mut rng);
            let dir = Vec3::new(rng.gen_range(-0.25..0.25), rng.gen_range(-0.25..0.25), 1.0);
            frozen.feature_points.push(FeaturePoint {
                line,
                anchor,
                ray: ViewingRay::from_direction(dir),
            });
        }
    }
    let params: Vec<(f64, f64)> = (0..3)
        .map(|_| (rng.gen_range(0.0..std::f64::consts::PI), rng.gen_range(-0.3..0.3)))
        .collect();
    (pair, frozen, params)
}

fn check_term(
    term: &'static str,
    seed: u64,
    rel_tol: f64,
    abs_tol: f64,
    schedule: &WeightSchedule,
) -> TermCheck {
    let (pair, frozen, params) = random_state(seed);
    let layout = StateLayout { n_verts: pair.dims().vertex_count(), n_lines: params.len() };
    let x0 = layout.pack(&pair, &params);
    let value_at = |x: &DVector<f64>| -> f64 {
        let mut p = pair.clone();
        let mut lp = params.clone();
        layout.unpack(x, &mut p, &mut lp);
        energy::total_objective(&p, &frozen, &lp, schedule).unwrap().total
    };
    let report = {
        let mut p = pair.clone();
        let mut lp = params.clone();
        layout.unpack(&x0, &mut p, &mut lp);
        energy::total_objective(&p, &frozen, &lp, schedule).unwrap()
    };
    let mut worst = TermCheck {
        term,
        seed,
        worst_abs: 0.0,
        worst_component: 0,
        worst_scale: 0.0,
        pass: true,
    };
    for k in 0..layout.len() {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[k] += FD_STEP;
        xm[k] -= FD_STEP;
        let fd = (value_at(&xp) - value_at(&xm)) / (2.0 * FD_STEP);
        let diff = (report.grad[k] - fd).abs();
        let scale = report.grad[k].abs().max(fd.abs());
        if diff > worst.worst_abs {
            worst.worst_abs = diff;
            worst.worst_component = k;
            worst.worst_scale = scale;
        }
        if diff > abs_tol && diff > rel_tol * scale {
            worst.pass = false;
        }
    }
    worst
}

/// Check each term in isolation, plus the full weighted objective, on a
/// random state derived from `seed`.
pub fn check_all_terms(seed: u64, rel_tol: f64, abs_tol: f64) -> GradcheckReport {
    let zero = WeightSchedule {
        l1: 0.0,
        l2: 0.0,
        l3: 0.0,
        l4: 0.0,
        l5: 0.0,
        l6: 0.0,
        ..Default::default()
    };
    let mut report = GradcheckReport::default();
    report.checks.push(check_term("e_iso", seed, rel_tol, abs_tol, &WeightSchedule { l1: 1.0, ..zero }));
    report.checks.push(check_term("e_dist", seed, rel_tol, abs_tol, &WeightSchedule { l2: 1.0, ..zero }));
    report.checks.push(check_term("e_fair_m", seed, rel_tol, abs_tol, &WeightSchedule { l3: 1.0, ..zero }));
    report.checks.push(check_term("e_fair_mp", seed, rel_tol, abs_tol, &WeightSchedule { l4: 1.0, ..zero }));
    report.checks.push(check_term("e_line", seed, rel_tol, abs_tol, &WeightSchedule { l5: 1.0, ..zero }));
    report.checks.push(check_term("e_ray", seed, rel_tol, abs_tol, &WeightSchedule { l6: 1.0, ..zero }));
    report.checks.push(check_term("total", seed, rel_tol, abs_tol, &WeightSchedule::default()));
    report
}

/// The full acceptance sweep: all terms on several seeds.
pub fn run_suite(base_seed: u64, seeds: usize, rel_tol: f64, abs_tol: f64) -> GradcheckReport {
    let mut report = GradcheckReport::default();
    for s in 0..seeds {
        report.checks.extend(check_all_terms(base_seed + s as u64, rel_tol, abs_tol).checks);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_gradients_match_finite_differences() {
        let report = check_all_terms(42, DEFAULT_REL_TOL, DEFAULT_ABS_TOL);
        for c in &report.checks {
            assert!(
                c.pass,
                "{} gradient mismatch: |diff|={} at component {} (scale {})",
                c.term, c.worst_abs, c.worst_component, c.worst_scale
            );
        }
    }

    #[test]
    fn injected_sign_error_is_detected() {
        // Sanity check the checker itself: corrupt the gradient and make
        // sure the FD comparison notices.
        let (pair, frozen, params) = random_state(9);
        let layout = StateLayout { n_verts: pair.dims().vertex_count(), n_lines: params.len() };
        let schedule = WeightSchedule::default();
        let mut rep = energy::total_objective(&pair, &frozen, &params, &schedule).unwrap();
        rep.grad[0] = -rep.grad[0] + 1.0;
        let x0 = layout.pack(&pair, &params);
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[0] += FD_STEP;
        xm[0] -= FD_STEP;
        let eval = |x: &DVector<f64>| {
            let mut p = pair.clone();
            let mut lp = params.clone();
            layout.unpack(x, &mut p, &mut lp);
            energy::total_objective(&p, &frozen, &lp, &schedule).unwrap().total
        };
        let fd = (eval(&xp) - eval(&xm)) / (2.0 * FD_STEP);
        assert!((rep.grad[0] - fd).abs() > DEFAULT_REL_TOL * fd.abs().max(1.0));
    }
}
