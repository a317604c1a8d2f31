//! Procedural test geometry and the default facial region layout.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::Mesh;

/// Facial region layout matching the UV parameterization of [`head_mesh`].
pub const FACE_LAYOUT_JSON: &str = include_str!("../fixtures/face_layout.json");

/// Longitude warp of the head UV layout: the face (longitude 0) receives more
/// texels per radian than the back of the head.
const U_WARP: f64 = 0.6;

/// UV coordinate for a point at longitude `phi ∈ [−π, π]` and polar angle
/// `theta ∈ [0, π]` (0 at the crown).
pub fn head_uv(phi: f64, theta: f64) -> [f64; 2] {
    let u = 0.5 + (phi + U_WARP * phi.sin()) / (2.0 * PI);
    [u.clamp(0.0, 1.0), (theta / PI).clamp(0.0, 1.0)]
}

fn head_point(phi: f64, theta: f64) -> Vector3<f64> {
    let d = Vector3::new(theta.sin() * phi.sin(), theta.cos(), theta.sin() * phi.cos());
    let bump = |p0: f64, wp: f64, t0: f64, wt: f64| (-((phi - p0) / wp).powi(2) - ((theta - t0) / wt).powi(2)).exp();
    // Nose, brow ridge, chin and ears on a tapered ellipsoid facing +z.
    let nose = 0.22 * bump(0.0, 0.22, 0.56 * PI, 0.14);
    let brow = 0.06 * bump(0.0, 0.6, 0.42 * PI, 0.08);
    let chin = 0.10 * bump(0.0, 0.35, 0.80 * PI, 0.10);
    let ears = 0.12 * (bump(0.5 * PI, 0.12, 0.52 * PI, 0.12) + bump(-0.5 * PI, 0.12, 0.52 * PI, 0.12));
    let jaw = if theta > 0.5 * PI {
        1.0 - 0.2 * ((theta - 0.5 * PI) / (0.5 * PI)).powi(2)
    } else {
        1.0
    };
    let r = 1.0 + nose + brow + chin + ears;
    Vector3::new(0.76 * jaw * r * d.x, 1.0 * r * d.y, 0.92 * r * d.z)
}

/// Closed head-like surface: an ellipsoid with a nose and brow ridge facing +z,
/// latitude/longitude tessellated with `lon` segments around and `lat` bands
/// from crown to chin. UV charts tile the unit square with a seam at the back.
pub fn head_mesh(lon: usize, lat: usize) -> Mesh {
    assert!(lon >= 3 && lat >= 2);
    let phi = |j: usize| -PI + 2.0 * PI * j as f64 / lon as f64;
    let theta = |k: usize| PI * k as f64 / lat as f64;

    let mut vertices = vec![head_point(0.0, 0.0)];
    for k in 1..lat {
        for j in 0..lon {
            vertices.push(head_point(phi(j), theta(k)));
        }
    }
    let bottom = vertices.len();
    vertices.push(head_point(0.0, PI));
    let ring = |k: usize, j: usize| 1 + (k - 1) * lon + (j % lon);

    let mut triangles = Vec::new();
    let mut uv_corners = Vec::new();
    for j in 0..lon {
        let mid = 0.5 * (phi(j) + phi(j + 1));
        // Crown cap.
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
        uv_corners.push([
            head_uv(mid, 0.0),
            head_uv(phi(j), theta(1)),
            head_uv(phi(j + 1), theta(1)),
        ]);
        for k in 1..lat - 1 {
            let (a, b, c, d) = (ring(k, j), ring(k, j + 1), ring(k + 1, j + 1), ring(k + 1, j));
            let (ua, ub, uc, ud) = (
                head_uv(phi(j), theta(k)),
                head_uv(phi(j + 1), theta(k)),
                head_uv(phi(j + 1), theta(k + 1)),
                head_uv(phi(j), theta(k + 1)),
            );
            triangles.push([a, d, c]);
            uv_corners.push([ua, ud, uc]);
            triangles.push([a, c, b]);
            uv_corners.push([ua, uc, ub]);
        }
        // Chin cap.
        triangles.push([ring(lat - 1, j), bottom, ring(lat - 1, j + 1)]);
        uv_corners.push([
            head_uv(phi(j), theta(lat - 1)),
            head_uv(mid, PI),
            head_uv(phi(j + 1), theta(lat - 1)),
        ]);
    }
    Mesh {
        vertices,
        triangles,
        uv_corners,
        normals: None,
    }
}

/// Two triangles spanning `[−1, 1]²` at `z = 0`, with UVs tiling the unit square.
pub fn unit_quad() -> Mesh {
    Mesh {
        vertices: vec![
            Vector3::new(-1.0, -1.0, 0.0),
            Vector3::new(1.0, -1.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::new(-1.0, 1.0, 0.0),
        ],
        triangles: vec![[0, 1, 2], [0, 2, 3]],
        uv_corners: vec![
            [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]],
            [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        ],
        normals: None,
    }
}
