use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use uvrecon::fixtures::head_mesh;
use uvrecon::registration::{
    closest_point_on_triangle, closest_surface_point, load_landmarks, nicp_register, nicp_register_with_report,
    Landmark, NicpParams,
};
use uvrecon::{Error, Mesh};

fn mean_error(a: &Mesh, b: &Mesh) -> f64 {
    a.vertices.iter().zip(&b.vertices).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.vertices.len() as f64
}

fn transformed(m: &Mesh, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Mesh {
    let mut out = m.clone();
    out.vertices = m.vertices.iter().map(f).collect();
    out
}

fn warp(m: &Mesh, amplitude: f64) -> Mesh {
    let a = amplitude * m.bbox_diagonal();
    transformed(m, |v| {
        v + Vector3::new(
            a * (1.5 * v.y + 0.3).sin(),
            a * (1.5 * v.z - 0.2).sin(),
            a * (1.5 * v.x + 0.5).sin(),
        )
    })
}

fn landmarks(target: &Mesh, k: usize) -> Vec<Landmark> {
    let n = target.vertices.len();
    (0..k)
        .map(|j| {
            let vertex = j * n / k + n / (2 * k);
            Landmark {
                vertex,
                target: target.vertices[vertex].into(),
            }
        })
        .collect()
}

#[test]
fn identity_is_a_fixed_point() {
    let m = head_mesh(24, 12);
    let out = nicp_register(&m, &m, &NicpParams::default()).unwrap();
    let max = m.vertices.iter().zip(&out.vertices).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(max <= 1e-6, "max deviation {max}");
}

#[test]
fn translation_is_recovered() {
    let m = head_mesh(24, 12);
    let target = transformed(&m, |v| v + Vector3::new(0.1, 0.0, 0.0));
    let out = nicp_register(&m, &target, &NicpParams::default()).unwrap();
    let err = mean_error(&out, &target) / target.bbox_diagonal();
    assert!(err <= 1e-4, "relative mean error {err}");
}

#[test]
fn rotation_is_recovered() {
    let m = head_mesh(24, 12);
    for (deg, axis) in [(10.0f64, Vector3::y()), (30.0, Vector3::x()), (30.0, Vector3::y()), (30.0, Vector3::z())] {
        let r = Rotation3::from_scaled_axis(axis * deg.to_radians());
        let target = transformed(&m, |v| r * v);
        let out = nicp_register(&m, &target, &NicpParams::default()).unwrap();
        let err = mean_error(&out, &target) / target.bbox_diagonal();
        assert!(err <= 1e-3, "{deg} degrees about {axis:?}: relative mean error {err}");
    }
}

#[test]
fn smooth_warp_is_recovered_and_topology_kept() {
    let m = head_mesh(32, 16);
    let r = Rotation3::from_euler_angles(0.1, 0.15, 0.0);
    let target = warp(&transformed(&m, |v| r * v + Vector3::new(0.05, -0.03, 0.02)), 0.02);
    let params = NicpParams {
        landmarks: landmarks(&target, 8),
        ..NicpParams::default()
    };
    let (out, report) = nicp_register_with_report(&m, &target, &params).unwrap();
    let err = mean_error(&out, &target) / target.bbox_diagonal();
    assert!(err <= 0.01, "relative mean error {err}");
    assert_eq!(out.triangles, m.triangles);
    assert_eq!(out.uv_corners, m.uv_corners);
    assert_eq!(report.levels.len(), 7);
}

#[test]
fn objective_is_non_increasing_within_levels() {
    let m = head_mesh(24, 12);
    let target = warp(&m, 0.02);
    let (_, report) = nicp_register_with_report(&m, &target, &NicpParams::default()).unwrap();
    for level in &report.levels {
        for w in level.objectives.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12, "alpha {}: {:?}", level.stiffness, level.objectives);
        }
    }
}

#[test]
fn landmarks_pull_vertices() {
    let m = head_mesh(24, 12);
    let target = transformed(&m, |v| v + Vector3::new(0.05, 0.0, 0.0));
    let params = NicpParams {
        landmarks: vec![Landmark {
            vertex: 0,
            target: (target.vertices[0]).into(),
        }],
        ..NicpParams::default()
    };
    let out = nicp_register(&m, &target, &params).unwrap();
    assert!((out.vertices[0] - target.vertices[0]).norm() < 1e-3 * target.bbox_diagonal());
}

#[test]
fn non_finite_input_is_rejected() {
    let m = head_mesh(12, 6);
    let mut bad = m.clone();
    bad.vertices[3].x = f64::NAN;
    assert!(matches!(nicp_register(&bad, &m, &NicpParams::default()), Err(Error::InvalidMesh(_))));
    assert!(matches!(nicp_register(&m, &bad, &NicpParams::default()), Err(Error::InvalidMesh(_))));
}

#[test]
fn all_pruned_names_the_level() {
    let m = head_mesh(12, 6);
    let params = NicpParams {
        distance_cutoff: 1e-6,
        ..NicpParams::default()
    };
    match nicp_register(&m, &warp(&m, 0.3), &params) {
        Err(Error::SingularSystem { stiffness, .. }) => assert_eq!(stiffness, 100.0),
        other => panic!("expected singular system, got {other:?}"),
    }
}

#[test]
fn disconnected_template_is_rejected() {
    let mut m = head_mesh(12, 6);
    m.vertices.push(Vector3::new(5.0, 5.0, 5.0));
    assert!(nicp_register(&m, &head_mesh(12, 6), &NicpParams::default()).is_err());
}

#[test]
fn invalid_schedule_is_rejected() {
    let m = head_mesh(12, 6);
    let params = NicpParams {
        stiffness: vec![1.0, 2.0],
        ..NicpParams::default()
    };
    assert!(matches!(nicp_register(&m, &m, &params), Err(Error::InvalidArgument(_))));
}

fn brute_force(target: &Mesh, p: &Vector3<f64>) -> f64 {
    target
        .triangles
        .iter()
        .map(|t| {
            let q = closest_point_on_triangle(p, &target.vertices[t[0]], &target.vertices[t[1]], &target.vertices[t[2]]);
            (q - p).norm_squared()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn closest_point_matches_brute_force_on_1000_queries() {
    use rand::{Rng, SeedableRng};
    let target = head_mesh(32, 16);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let p = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        let c = closest_surface_point(&target, &p);
        assert!((c.distance_squared.sqrt() - brute_force(&target, &p).sqrt()).abs() <= 1e-9);
    }
}

#[test]
fn closest_point_at_vertex_and_above_face() {
    let target = head_mesh(16, 8);
    let v = target.vertices[7];
    let c = closest_surface_point(&target, &v);
    assert!(c.distance_squared.sqrt() < 1e-12);
    assert!((c.point - v).norm() < 1e-12);

    let quad = uvrecon::fixtures::unit_quad();
    let c = closest_surface_point(&quad, &Vector3::new(0.3, -0.4, 2.0));
    assert!((c.point - Vector3::new(0.3, -0.4, 0.0)).norm() < 1e-12);
    assert!((c.normal.z.abs() - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn closest_point_is_no_farther_than_any_vertex(x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0) {
        let target = head_mesh(12, 6);
        let p = Vector3::new(x, y, z);
        let c = closest_surface_point(&target, &p);
        for v in &target.vertices {
            prop_assert!(c.distance_squared <= (v - p).norm_squared() + 1e-12);
        }
    }
}

#[test]
fn landmark_file_parses_and_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lm.txt");
    std::fs::write(&path, "# idx x y z\n3 0.5 -1 2\n\n10 1e-3 0 0\n").unwrap();
    let lms = load_landmarks(&path).unwrap();
    assert_eq!(lms.len(), 2);
    assert_eq!(lms[0], Landmark { vertex: 3, target: [0.5, -1.0, 2.0] });
    std::fs::write(&path, "1 2 3 4\n5 6 x 8\n").unwrap();
    match load_landmarks(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected parse error, got {other:?}"),
    }
}
