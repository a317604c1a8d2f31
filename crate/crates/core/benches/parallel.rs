//! Data-parallel kernels on a one-thread pool (sequential) and on the default
//! rayon pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::Vector3;
use rayon::ThreadPool;
use uvrecon::fixtures::head_mesh;
use uvrecon::fusion::{poisson_solve, PoissonOptions, PoissonProblem};
use uvrecon::geometry::rasterize_depth;
use uvrecon::optimize::{build_render_map, features};
use uvrecon::projection::project_texture;
use uvrecon::{Camera, Image};

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()),
    ]
}

fn textured(w: usize, h: usize) -> Image {
    let data = (0..w * h * 3).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
    Image::from_data(w, h, data).unwrap()
}

fn kernels(c: &mut Criterion) {
    let mesh = head_mesh(64, 48);
    let cam = Camera::orbit(512, 512, 2.0 * mesh.bbox_diagonal(), 30.0, 0.0, 0.0, Vector3::zeros());
    let image = textured(512, 512);
    let map = build_render_map(&mesh, &cam, 256).unwrap();
    let texture: Vec<f64> = (0..256 * 256 * 3).map(|i| (i % 255) as f64 / 255.0).collect();

    let side = 130;
    let region: Vec<bool> = (0..side * side)
        .map(|p| {
            let (x, y) = (p % side, p / side);
            x > 0 && y > 0 && x + 1 < side && y + 1 < side
        })
        .collect();
    let boundary = (0..side * side).map(|p| ((p % side) as f64).sin()).collect();
    let poisson = PoissonProblem::harmonic(side, side, region, boundary);

    for (name, pool) in pools() {
        let mut g = c.benchmark_group("kernels");
        g.sample_size(10);
        g.bench_function(BenchmarkId::new("rasterize_512", name), |b| {
            b.iter(|| pool.install(|| rasterize_depth(&mesh, &cam, 512, 512).unwrap()))
        });
        g.bench_function(BenchmarkId::new("project_256", name), |b| {
            b.iter(|| pool.install(|| project_texture(&mesh, &cam, &image, 256, 1e-3).unwrap()))
        });
        g.bench_function(BenchmarkId::new("render_512", name), |b| {
            b.iter(|| pool.install(|| map.render_values(&texture).unwrap()))
        });
        g.bench_function(BenchmarkId::new("features_512", name), |b| b.iter(|| pool.install(|| features(&image))));
        g.bench_function(BenchmarkId::new("poisson_128", name), |b| {
            b.iter(|| pool.install(|| poisson_solve(&poisson, &PoissonOptions::default()).unwrap()))
        });
        g.finish();
    }
}

criterion_group!(benches, kernels);
criterion_main!(benches);
