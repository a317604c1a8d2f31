use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvrecon::fusion::{forward_differences, fuse, poisson_solve, PoissonOptions, PoissonProblem};
use uvrecon::{ChartMask, Error, TextureMap};

/// `side × side` grid whose interior (all but the outer ring) is Ω.
fn interior(side: usize) -> Vec<bool> {
    (0..side * side)
        .map(|p| {
            let (x, y) = (p % side, p / side);
            x > 0 && y > 0 && x + 1 < side && y + 1 < side
        })
        .collect()
}

#[test]
fn harmonic_quadratic_is_reproduced() {
    let side = 66;
    let f = |p: usize| {
        let (x, y) = ((p % side) as f64 / (side - 1) as f64, (p / side) as f64 / (side - 1) as f64);
        x * x - y * y
    };
    let region = interior(side);
    let boundary = (0..side * side).map(|p| if region[p] { 0.0 } else { f(p) }).collect();
    let sol = poisson_solve(&PoissonProblem::harmonic(side, side, region, boundary), &PoissonOptions::default()).unwrap();
    let err = (0..side * side).map(|p| (sol.values[p] - f(p)).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-3, "L-inf error {err}");
    assert!(sol.islands.is_empty());
}

#[test]
fn constant_boundary_gives_a_constant() {
    let side = 20;
    let region = interior(side);
    let sol = poisson_solve(
        &PoissonProblem::harmonic(side, side, region, vec![0.37; side * side]),
        &PoissonOptions::default(),
    )
    .unwrap();
    assert!(sol.values.iter().all(|v| (v - 0.37).abs() < 1e-8));
}

fn random_problem(rng: &mut ChaCha8Rng, side: usize) -> PoissonProblem {
    let n = side * side;
    PoissonProblem {
        width: side,
        height: side,
        region: interior(side),
        domain: vec![true; n],
        boundary: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        guidance_x: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        guidance_y: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        source: None,
    }
}

/// Assembles the same equations densely and solves them by LU.
fn dense_solve(p: &PoissonProblem) -> Vec<f64> {
    let w = p.width;
    let cells: Vec<usize> = (0..w * p.height).filter(|&i| p.region[i]).collect();
    let idx = |i: usize| cells.iter().position(|&c| c == i);
    let m = cells.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (r, &i) in cells.iter().enumerate() {
        let (x, y) = (i % w, i / w);
        let mut nb = Vec::new();
        if x + 1 < w {
            nb.push((i + 1, -p.guidance_x[i]));
        }
        if x > 0 {
            nb.push((i - 1, p.guidance_x[i - 1]));
        }
        if y + 1 < p.height {
            nb.push((i + w, -p.guidance_y[i]));
        }
        if y > 0 {
            nb.push((i - w, p.guidance_y[i - w]));
        }
        for (q, v) in nb.into_iter().filter(|&(q, _)| p.domain[q]) {
            a[(r, r)] += 1.0;
            b[r] += v;
            match idx(q) {
                Some(c) => a[(r, c)] -= 1.0,
                None => b[r] += p.boundary[q],
            }
        }
    }
    let x = a.lu().solve(&b).unwrap();
    let mut out = p.boundary.clone();
    for (r, &i) in cells.iter().enumerate() {
        out[i] = x[r];
    }
    out
}

#[test]
fn small_region_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        // 6x6 interior of an 8x8 grid.
        let p = random_problem(&mut rng, 8);
        let ours = poisson_solve(&p, &PoissonOptions::default()).unwrap().values;
        let oracle = dense_solve(&p);
        let err = ours.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-8, "max difference {err}");
    }
}

#[test]
fn chart_edges_act_as_neumann_boundaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut p = random_problem(&mut rng, 8);
    // Cut a vertical wall out of the domain through the region.
    for y in 0..8 {
        p.domain[y * 8 + 4] = false;
        p.region[y * 8 + 4] = false;
    }
    let ours = poisson_solve(&p, &PoissonOptions::default()).unwrap().values;
    let oracle = dense_solve(&p);
    let err = ours.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-8, "max difference {err}");
}

#[test]
fn jacobi_preconditioning_gives_the_same_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = random_problem(&mut rng, 24);
    let plain = poisson_solve(&p, &PoissonOptions::default()).unwrap().values;
    let jac = poisson_solve(&p, &PoissonOptions { jacobi: true, ..PoissonOptions::default() }).unwrap().values;
    let err = plain.iter().zip(&jac).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn gradient_guidance_reproduces_its_source() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let side = 30;
    let g: Vec<f64> = (0..side * side).map(|_| rng.random_range(0.0..1.0)).collect();
    let p = PoissonProblem::guided(side, side, interior(side), vec![true; side * side], g.clone(), g.clone());
    let sol = poisson_solve(&p, &PoissonOptions::default()).unwrap();
    let err = sol.values.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn exhausted_iterations_report_the_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let p = random_problem(&mut rng, 24);
    let opts = PoissonOptions {
        max_iterations: Some(2),
        ..PoissonOptions::default()
    };
    match poisson_solve(&p, &opts) {
        Err(Error::NotConverged { iterations, residual }) => {
            assert_eq!(iterations, 2);
            assert!(residual > 1e-8 && residual.is_finite());
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn islands_take_the_source_mean() {
    let side = 6;
    let n = side * side;
    let source: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let p = PoissonProblem::guided(side, side, vec![true; n], vec![true; n], vec![0.0; n], source);
    let sol = poisson_solve(&p, &PoissonOptions::default()).unwrap();
    assert_eq!(sol.islands.len(), 1);
    assert!(sol.values.iter().all(|&v| v == (n - 1) as f64 / 2.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn solve_is_linear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, 10);
        let q = random_problem(&mut rng, 10);
        let opts = PoissonOptions { tolerance: 1e-14, ..PoissonOptions::default() };
        let mix = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| a * x + b * y).collect::<Vec<_>>();
        let combined = PoissonProblem {
            boundary: mix(&p.boundary, &q.boundary),
            guidance_x: mix(&p.guidance_x, &q.guidance_x),
            guidance_y: mix(&p.guidance_y, &q.guidance_y),
            ..p.clone()
        };
        let fp = poisson_solve(&p, &opts).unwrap().values;
        let fq = poisson_solve(&q, &opts).unwrap().values;
        let fc = poisson_solve(&combined, &opts).unwrap().values;
        for ((x, y), z) in fp.iter().zip(&fq).zip(&fc) {
            prop_assert!((a * x + b * y - z).abs() <= 1e-10);
        }
    }
}

fn half_plane_mask(side: usize) -> Vec<f64> {
    (0..side * side).map(|i| if i % side < side / 2 { 1.0 } else { 0.0 }).collect()
}

#[test]
fn fully_valid_input_is_returned_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let side = 16;
    let data = (0..side * side * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    let t = TextureMap::from_parts(side, data, vec![1.0; side * side]).unwrap();
    let sd = TextureMap::filled(side, [0.5; 3]);
    let (out, report) = fuse(&t, &sd, &ChartMask::full(side), &PoissonOptions::default()).unwrap();
    assert_eq!(out, t);
    assert_eq!(report.region_size, 0);
}

#[test]
fn nothing_valid_returns_the_completion() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let side = 16;
    let data = (0..side * side * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    let sd = TextureMap::from_parts(side, data, vec![1.0; side * side]).unwrap();
    let (out, report) = fuse(&TextureMap::new(side), &sd, &ChartMask::full(side), &PoissonOptions::default()).unwrap();
    assert_eq!(out.data, sd.data);
    assert_eq!(out.mask, vec![1.0; side * side]);
    assert_eq!(report.island_count, 1);
}

#[test]
fn tonal_offset_is_removed() {
    let side = 32;
    let mask = half_plane_mask(side);
    let mut proj = TextureMap::filled(side, [0.3, 0.5, 0.1]);
    for i in 0..side * side {
        if mask[i] == 0.0 {
            proj.set_texel(i, [0.0; 3]);
        }
    }
    proj.mask = mask;
    let sd = TextureMap::filled(side, [0.5, 0.7, 0.3]);
    let (out, _) = fuse(&proj, &sd, &ChartMask::full(side), &PoissonOptions::default()).unwrap();
    for i in 0..side * side {
        let c = out.texel(i);
        assert!((c[0] - 0.3).abs() < 1e-6 && (c[1] - 0.5).abs() < 1e-6 && (c[2] - 0.1).abs() < 1e-6, "{c:?}");
    }
}

#[test]
fn uncharted_texels_stay_empty() {
    let side = 16;
    let mut chart = ChartMask::full(side);
    for i in 0..side * side {
        chart.covered[i] = i % side < 12;
    }
    let mut proj = TextureMap::new(side);
    for i in 0..side * side {
        if i % side < 4 {
            proj.set_texel(i, [0.2; 3]);
            proj.mask[i] = 1.0;
        }
    }
    let (gx, _) = forward_differences(side, side, &vec![0.0; side * side]);
    assert!(gx.iter().all(|&v| v == 0.0));
    let (out, _) = fuse(&proj, &TextureMap::filled(side, [0.9; 3]), &chart, &PoissonOptions::default()).unwrap();
    for i in 0..side * side {
        if i % side >= 12 {
            assert_eq!(out.mask[i], 0.0);
            assert_eq!(out.texel(i), [0.0; 3]);
        } else {
            assert_eq!(out.mask[i], 1.0);
            assert!((out.texel(i)[0] - 0.2).abs() < 1e-6);
        }
    }
}

#[test]
fn side_mismatch_is_rejected() {
    assert!(fuse(&TextureMap::new(8), &TextureMap::new(16), &ChartMask::full(8), &PoissonOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn valid_texels_are_never_modified(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = 12;
        let data = (0..side * side * 3).map(|_| rng.random_range(0.0..1.0)).collect();
        let mask = (0..side * side).map(|_| if rng.random_bool(0.6) { 1.0 } else { 0.0 }).collect();
        let proj = TextureMap::from_parts(side, data, mask).unwrap();
        let sd_data = (0..side * side * 3).map(|_| rng.random_range(0.0..1.0)).collect();
        let sd = TextureMap::from_parts(side, sd_data, vec![1.0; side * side]).unwrap();
        let (out, _) = fuse(&proj, &sd, &ChartMask::full(side), &PoissonOptions::default()).unwrap();
        for i in 0..side * side {
            if proj.is_valid(i) {
                for c in 0..3 {
                    prop_assert_eq!(out.data[3 * i + c].to_bits(), proj.data[3 * i + c].to_bits());
                }
            }
        }
    }
}
