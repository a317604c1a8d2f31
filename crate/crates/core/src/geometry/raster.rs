use super::camera::project_camera_space;
use super::mesh::grid_range;
use super::{Camera, Mesh};
use crate::{par, Error, Result};

/// Camera-space depth at or below which a point counts as behind the camera.
pub const BEHIND_CAMERA_EPS: f64 = 1e-9;

/// Per-pixel nearest depth and winning triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBuffer {
    pub width: usize,
    pub height: usize,
    /// Camera-space z at each pixel center; `+inf` where nothing is drawn.
    pub depth: Vec<f64>,
    pub triangle: Vec<Option<u32>>,
}

impl DepthBuffer {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, Option<u32>) {
        let i = y * self.width + x;
        (self.depth[i], self.triangle[i])
    }

    /// `(min, max)` over finite depths, `None` for an empty buffer.
    pub fn depth_range(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &d in &self.depth {
            if d.is_finite() {
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    pub fn covered_count(&self) -> usize {
        self.triangle.iter().filter(|t| t.is_some()).count()
    }
}

/// Barycentric weights of `p` with respect to the 2D triangle `(a, b, c)`, or
/// `None` for a degenerate (zero-area) triangle. Weights are signed; the point
/// is covered when all three are `≥ 0`.
#[inline]
pub fn barycentric_2d(a: [f64; 2], b: [f64; 2], c: [f64; 2], p: [f64; 2]) -> Option<[f64; 3]> {
    let area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    if area == 0.0 || !area.is_finite() {
        return None;
    }
    let w0 = ((b[0] - p[0]) * (c[1] - p[1]) - (b[1] - p[1]) * (c[0] - p[0])) / area;
    let w1 = ((c[0] - p[0]) * (a[1] - p[1]) - (c[1] - p[1]) * (a[0] - p[0])) / area;
    let w2 = ((a[0] - p[0]) * (b[1] - p[1]) - (a[1] - p[1]) * (b[0] - p[0])) / area;
    Some([w0, w1, w2])
}

/// A triangle projected into pixel space, with camera-space depths at its
/// corners.
#[derive(Debug, Clone, Copy)]
pub struct ScreenTriangle {
    pub xy: [[f64; 2]; 3],
    pub z: [f64; 3],
}

impl ScreenTriangle {
    /// Screen barycentrics and perspective-correct depth at `p` when covered.
    #[inline]
    pub fn hit(&self, p: [f64; 2]) -> Option<([f64; 3], f64)> {
        let w = barycentric_2d(self.xy[0], self.xy[1], self.xy[2], p)?;
        if w[0] >= 0.0 && w[1] >= 0.0 && w[2] >= 0.0 {
            let depth = 1.0 / (w[0] / self.z[0] + w[1] / self.z[1] + w[2] / self.z[2]);
            Some((w, depth))
        } else {
            None
        }
    }

    /// Converts screen barycentrics to perspective-correct (surface) barycentrics.
    #[inline]
    pub fn perspective_weights(&self, w: [f64; 3]) -> [f64; 3] {
        let q = [w[0] / self.z[0], w[1] / self.z[1], w[2] / self.z[2]];
        let s = q[0] + q[1] + q[2];
        [q[0] / s, q[1] / s, q[2] / s]
    }
}

/// Projects every triangle; triangles with a vertex at or behind the camera
/// plane map to `None`.
pub(crate) fn project_triangles(mesh: &Mesh, camera: &Camera) -> Vec<Option<ScreenTriangle>> {
    let r = camera.rotation_matrix();
    let t = camera.translation_vector();
    let projected: Vec<_> = mesh
        .vertices
        .iter()
        .map(|v| project_camera_space(camera, &(r * v + t)))
        .collect();
    mesh.triangles
        .iter()
        .map(|tri| {
            let [a, b, c] = tri.map(|i| projected[i]);
            let (a, b, c) = (a?, b?, c?);
            let st = ScreenTriangle {
                xy: [[a.x, a.y], [b.x, b.y], [c.x, c.y]],
                z: [a.depth, b.depth, c.depth],
            };
            st.xy.iter().flatten().all(|v| v.is_finite()).then_some(st)
        })
        .collect()
}

/// Z-buffer rasterization at pixel centers.
///
/// Coverage is inclusive (all barycentrics `≥ 0`); the smallest depth wins and
/// ties go to the smallest triangle index. Triangles with any vertex behind the
/// camera are skipped.
pub fn rasterize_depth(mesh: &Mesh, camera: &Camera, width: usize, height: usize) -> Result<DepthBuffer> {
    let tris = project_triangles(mesh, camera);
    rasterize_depth_rows(&tris, width, height)
}

/// Rasterizes already projected triangles (`None` entries are skipped). Rows
/// are processed independently.
pub fn rasterize_depth_rows(
    tris: &[Option<ScreenTriangle>],
    width: usize,
    height: usize,
) -> Result<DepthBuffer> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("depth buffer must be non-empty".into()));
    }
    // Bin triangles by the rows their (padded) bounding boxes touch; bins stay
    // in ascending triangle order.
    let mut bins: Vec<Vec<(u32, u32, u32)>> = vec![Vec::new(); height];
    for (i, t) in tris.iter().enumerate() {
        let Some(t) = t else { continue };
        let (x0, x1, y0, y1) = grid_range(&t.xy, width, height);
        if x0 >= x1 {
            continue;
        }
        for bin in &mut bins[y0..y1] {
            bin.push((i as u32, x0 as u32, x1 as u32));
        }
    }
    let rows: Vec<(Vec<f64>, Vec<Option<u32>>)> = par::map(height, |y| {
        let mut depth = vec![f64::INFINITY; width];
        let mut tri = vec![None; width];
        let py = y as f64 + 0.5;
        for &(i, x0, x1) in &bins[y] {
            let t = tris[i as usize].as_ref().unwrap();
            for x in x0 as usize..x1 as usize {
                if let Some((_, d)) = t.hit([x as f64 + 0.5, py]) {
                    if d < depth[x] {
                        depth[x] = d;
                        tri[x] = Some(i);
                    }
                }
            }
        }
        (depth, tri)
    });
    let mut buf = DepthBuffer {
        width,
        height,
        depth: Vec::with_capacity(width * height),
        triangle: Vec::with_capacity(width * height),
    };
    for (d, t) in rows {
        buf.depth.extend(d);
        buf.triangle.extend(t);
    }
    Ok(buf)
}
