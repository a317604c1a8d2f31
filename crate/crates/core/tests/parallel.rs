#![cfg(feature = "parallel")]

use nalgebra::Vector3;
use uvrecon::fixtures::head_mesh;
use uvrecon::fusion::{poisson_solve, PoissonOptions, PoissonProblem};
use uvrecon::generator::{fit_pca, synth_corpus, FitParams, Layout, StyleParams};
use uvrecon::geometry::rasterize_depth;
use uvrecon::optimize::{build_render_map, features, invert_latent, OptimSchedule};
use uvrecon::projection::project_texture;
use uvrecon::registration::{nicp_register, NicpParams};
use uvrecon::{Camera, Image};

fn on_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f)
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let run = || {
        let mesh = head_mesh(32, 24);
        let cam = Camera::orbit(96, 96, 2.0 * mesh.bbox_diagonal(), 30.0, 20.0, 5.0, Vector3::zeros());
        let image = Image::from_data(96, 96, (0..96 * 96 * 3).map(|i| (i % 97) as f64 / 97.0).collect()).unwrap();

        let depth = rasterize_depth(&mesh, &cam, 96, 96).unwrap();
        let projected = project_texture(&mesh, &cam, &image, 64, 1e-3).unwrap();
        let map = build_render_map(&mesh, &cam, 64).unwrap();
        let cotangent: Vec<f64> = (0..96 * 96 * 3).map(|i| ((i % 13) as f64 - 6.0) / 6.0).collect();
        let vjp = map.render_vjp(&cotangent).unwrap();
        let feats = features(&image);

        let side = 40;
        let region = (0..side * side).map(|p| p % side > 0 && p % side < side - 1 && p > side && p < side * (side - 1)).collect();
        let boundary = (0..side * side).map(|p| (p as f64 * 0.37).sin()).collect();
        let poisson = poisson_solve(&PoissonProblem::harmonic(side, side, region, boundary), &PoissonOptions::default()).unwrap();

        let corpus = synth_corpus(&Layout::default_face(), &StyleParams::default(), 12, 64).unwrap();
        let model = fit_pca(corpus.as_slice(), &FitParams { d_w: 6, d_z: 6, mapper_seed: 3 }).unwrap();
        let schedule = OptimSchedule { z_steps: 10, w_steps: 10, ..OptimSchedule::default() };
        let inverted = invert_latent(&model, &projected, &schedule).unwrap();

        let moved = {
            let mut m = mesh.clone();
            m.vertices.iter_mut().for_each(|v| *v += Vector3::new(0.02, 0.0, -0.01));
            m
        };
        let registered = nicp_register(&mesh, &moved, &NicpParams::default()).unwrap();

        (
            bits(&depth.depth),
            depth.triangle,
            bits(&projected.data),
            bits(&projected.mask),
            bits(&vjp),
            bits(&feats),
            bits(&poisson.values),
            bits(&model.basis),
            bits(&inverted.latent),
            registered.vertices.iter().flat_map(|v| v.iter().map(|x| x.to_bits())).collect::<Vec<_>>(),
        )
    };
    let one = on_threads(1, run);
    let four = on_threads(4, run);
    assert!(one == four);
}
