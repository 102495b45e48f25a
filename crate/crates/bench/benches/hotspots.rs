//! The two hot paths of the optimization: full objective + gradient
//! evaluation (the L-BFGS inner loop body) and closest-point queries
//! (the correspondence refresh).

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use docrect_core::cloud::MeshDistanceIndex;
use docrect_core::energy::{self, WeightSchedule};
use docrect_core::geom::{GridDims, Mesh3, Vec3};
use docrect_core::gradcheck::random_state;
use docrect_core::solver::{minimize, LbfgsOptions};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};

fn bench_objective(c: &mut Criterion) {
    let (pair, frozen, params) = random_state(3);
    let schedule = WeightSchedule::default();
    let layout = energy::StateLayout {
        n_verts: pair.dims().vertex_count(),
        n_lines: params.len(),
    };
    c.bench_function("total_objective_with_gradient_5x7", |b| {
        b.iter(|| {
            let rep = energy::total_objective(&pair, &frozen, &params, &schedule).unwrap();
            criterion::black_box((rep.total, rep.grad.norm()));
        })
    });
    let x0 = layout.pack(&pair, &params);
    let opts = LbfgsOptions { max_iters: 10, ..Default::default() };
    c.bench_function("lbfgs_10_steps_5x7", |b| {
        b.iter_batched(
            || (x0.clone(), pair.clone(), params.clone()),
            |(mut x, mut scratch, mut sp)| {
                minimize(&mut x, &opts, |xv: &DVector<f64>, g: &mut DVector<f64>| {
                    layout.unpack(xv, &mut scratch, &mut sp);
                    let rep = energy::total_objective(&scratch, &frozen, &sp, &schedule).unwrap();
                    g.copy_from(&rep.grad);
                    rep.total
                });
                criterion::black_box(x[0]);
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_closest_point(c: &mut Criterion) {
    let mesh = Mesh3::from_fn(GridDims::new(77, 117), |i, j| {
        Vec3::new(
            j as f64 * 0.01,
            i as f64 * 0.01,
            2.0 + 0.1 * (j as f64 * 0.1).sin() * (i as f64 * 0.13).cos(),
        )
    });
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let queries: Vec<Vec3> = (0..1000)
        .map(|_| {
            Vec3::new(
                rng.gen_range(-0.1..1.3),
                rng.gen_range(-0.1..0.9),
                rng.gen_range(1.8..2.2),
            )
        })
        .collect();
    c.bench_function("mesh_distance_index_build_77x117", |b| {
        b.iter(|| criterion::black_box(MeshDistanceIndex::build(&mesh)))
    });
    let index = MeshDistanceIndex::build(&mesh);
    c.bench_function("closest_point_1k_queries_77x117", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for q in &queries {
                acc += index.closest_point(*q).distance;
            }
            criterion::black_box(acc);
        })
    });
}

criterion_group!(benches, bench_objective, bench_closest_point);
criterion_main!(benches);
