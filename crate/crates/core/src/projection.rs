//! Image-to-UV projection: the partial texture `T_proj`, its visibility mask,
//! and randomized mask libraries.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    barycentric_2d, bilinear_sample, project_triangles, rasterize_depth_rows, Camera, DepthBuffer, ScreenTriangle,
};
use crate::{par, ChartMask, Error, Image, Mesh, Result, TextureMap};

/// Default visibility bias, as a fraction of the scene depth range.
pub const DEFAULT_DEPTH_BIAS: f64 = 1e-3;

/// Cached UV-space rasterization: for every texel center, the chart triangle
/// containing it and the barycentric coordinates within that triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct UvCoverage {
    pub side: usize,
    pub triangle: Vec<Option<u32>>,
    pub bary: Vec<[f64; 3]>,
}

impl UvCoverage {
    pub fn chart_mask(&self) -> ChartMask {
        ChartMask {
            side: self.side,
            covered: self.triangle.iter().map(Option::is_some).collect(),
        }
    }

    pub fn covered_count(&self) -> usize {
        self.triangle.iter().filter(|t| t.is_some()).count()
    }

    /// Surface point of texel `i`, if covered.
    pub fn surface_point(&self, mesh: &Mesh, i: usize) -> Option<Vector3<f64>> {
        let t = self.triangle[i]? as usize;
        let [a, b, c] = mesh.triangles[t];
        let w = self.bary[i];
        Some(mesh.vertices[a] * w[0] + mesh.vertices[b] * w[1] + mesh.vertices[c] * w[2])
    }
}

/// Rasterizes the UV charts at texel centers with the same inclusive coverage
/// and lowest-index tie-break as [`crate::geometry::rasterize_depth`].
pub fn build_uv_coverage(mesh: &Mesh, side: usize) -> Result<UvCoverage> {
    if side == 0 {
        return Err(Error::InvalidArgument("texture side must be positive".into()));
    }
    let s = side as f64;
    let tris: Vec<Option<ScreenTriangle>> = mesh
        .uv_corners
        .iter()
        .map(|uv| {
            Some(ScreenTriangle {
                xy: uv.map(|p| [p[0] * s, p[1] * s]),
                z: [1.0; 3],
            })
        })
        .collect();
    let buf = rasterize_depth_rows(&tris, side, side)?;
    let bary = par::map(side * side, |i| match buf.triangle[i] {
        Some(t) => {
            let st = tris[t as usize].as_ref().unwrap();
            let p = [(i % side) as f64 + 0.5, (i / side) as f64 + 0.5];
            barycentric_2d(st.xy[0], st.xy[1], st.xy[2], p).unwrap_or([0.0; 3])
        }
        None => [0.0; 3],
    });
    Ok(UvCoverage {
        side,
        triangle: buf.triangle,
        bary,
    })
}

/// Where a covered texel lands in the image and whether it passed the
/// visibility test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexelProjection {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
    pub visible: bool,
}

/// Projects every covered texel into the camera and applies the in-image and
/// depth tests. Uncovered texels map to `None`.
///
/// A texel is occluded when its depth exceeds the occluding surface depth
/// plus `depth_bias` times the scene depth range. The occluding depth is the
/// plane depth of the pixel's winning triangle evaluated at the texel's exact
/// sub-pixel position, so slanted surfaces do not self-occlude within a pixel.
pub fn project_texels(
    mesh: &Mesh,
    camera: &Camera,
    coverage: &UvCoverage,
    depth_bias: f64,
) -> Result<Vec<Option<TexelProjection>>> {
    camera.validate()?;
    if !(depth_bias >= 0.0) {
        return Err(Error::InvalidArgument("depth bias must be non-negative".into()));
    }
    let screen = project_triangles(mesh, camera);
    let buf = rasterize_depth_rows(&screen, camera.width, camera.height)?;
    let range = buf.depth_range().map_or(0.0, |(lo, hi)| hi - lo);
    let slack = depth_bias * range;
    Ok(par::map(coverage.side * coverage.side, |i| {
        let p = coverage.surface_point(mesh, i)?;
        Some(match camera.project_point(&p) {
            Some(q) => {
                let visible = in_image(camera, q.x, q.y)
                    && q.depth <= occluder_depth(&buf, &screen, q.x, q.y) + slack;
                TexelProjection {
                    x: q.x,
                    y: q.y,
                    depth: q.depth,
                    visible,
                }
            }
            None => TexelProjection {
                x: f64::NAN,
                y: f64::NAN,
                depth: f64::NAN,
                visible: false,
            },
        })
    }))
}

fn in_image(camera: &Camera, x: f64, y: f64) -> bool {
    x >= 0.0 && y >= 0.0 && x < camera.width as f64 && y < camera.height as f64
}

fn occluder_depth(buf: &DepthBuffer, screen: &[Option<ScreenTriangle>], x: f64, y: f64) -> f64 {
    let (px, py) = (x as usize, y as usize);
    let (stored, tri) = buf.at(px, py);
    let Some(t) = tri.and_then(|t| screen[t as usize].as_ref()) else {
        return stored;
    };
    // Extend the winning triangle's plane to the sub-pixel position.
    match barycentric_2d(t.xy[0], t.xy[1], t.xy[2], [x, y]) {
        Some(w) => {
            let inv = w[0] / t.z[0] + w[1] / t.z[1] + w[2] / t.z[2];
            if inv > 0.0 {
                1.0 / inv
            } else {
                stored
            }
        }
        None => stored,
    }
}

/// Samples `image` into the UV grid: visible texels get the bilinear image
/// color and mask 1, all others color 0 and mask 0.
pub fn project_texture(
    mesh: &Mesh,
    camera: &Camera,
    image: &Image,
    side: usize,
    depth_bias: f64,
) -> Result<TextureMap> {
    let coverage = build_uv_coverage(mesh, side)?;
    project_texture_with(mesh, camera, image, &coverage, depth_bias)
}

/// [`project_texture`] with a precomputed coverage.
pub fn project_texture_with(
    mesh: &Mesh,
    camera: &Camera,
    image: &Image,
    coverage: &UvCoverage,
    depth_bias: f64,
) -> Result<TextureMap> {
    if (image.width, image.height) != (camera.width, camera.height) {
        return Err(Error::ShapeMismatch(format!(
            "image is {}x{} but the camera expects {}x{}",
            image.width, image.height, camera.width, camera.height
        )));
    }
    let proj = project_texels(mesh, camera, coverage, depth_bias)?;
    let mut tex = TextureMap::new(coverage.side);
    for (i, p) in proj.iter().enumerate() {
        if let Some(p) = p.filter(|p| p.visible) {
            tex.set_texel(i, bilinear_sample(image, p.x, p.y));
            tex.mask[i] = 1.0;
        }
    }
    Ok(tex)
}

/// Removes valid texels within `radius` texels (Chebyshev distance) of an
/// invalid covered texel. Texels outside the charts never cause erosion.
pub fn erode_mask(mask: &[f64], chart: &ChartMask, radius: usize) -> Vec<f64> {
    let side = chart.side;
    let r = radius as isize;
    par::map(side * side, |i| {
        if mask[i] < 0.5 {
            return 0.0;
        }
        let (x, y) = ((i % side) as isize, (i / side) as isize);
        for dy in -r..=r {
            for dx in -r..=r {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= side as isize || ny >= side as isize {
                    continue;
                }
                let j = ny as usize * side + nx as usize;
                if chart.covered[j] && mask[j] < 0.5 {
                    return 0.0;
                }
            }
        }
        1.0
    })
}

/// Camera distribution for [`synth_masks`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskSynthParams {
    pub count: usize,
    /// Inclusive yaw range in degrees; equal bounds give a fixed yaw.
    pub yaw_deg: [f64; 2],
    pub pitch_deg: [f64; 2],
    pub seed: u64,
    pub image_size: usize,
    /// Camera distance as a multiple of the mesh bounding-box diagonal.
    pub distance: f64,
    pub fov_y_deg: f64,
    pub depth_bias: f64,
    /// Erosion radius in texels; the CLI exposes only 0 and 2.
    pub erode: usize,
}

impl Default for MaskSynthParams {
    fn default() -> Self {
        Self {
            count: 100,
            yaw_deg: [-60.0, 60.0],
            pitch_deg: [-20.0, 20.0],
            seed: 7,
            image_size: 256,
            distance: 2.0,
            fov_y_deg: 30.0,
            depth_bias: DEFAULT_DEPTH_BIAS,
            erode: 0,
        }
    }
}

impl MaskSynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("mask synthesis: {m}")));
        if self.count == 0 {
            return bad("count must be at least 1");
        }
        for (name, r) in [("yaw", self.yaw_deg), ("pitch", self.pitch_deg)] {
            if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                return bad(&format!("{name} range must be finite with lower <= upper"));
            }
        }
        if !(self.pitch_deg[0] > -90.0 && self.pitch_deg[1] < 90.0) {
            return bad("pitch must stay inside (-90, 90)");
        }
        if self.image_size == 0 || !(self.distance > 0.0) || !(self.fov_y_deg > 0.0 && self.fov_y_deg < 180.0) {
            return bad("image size, distance and field of view must be positive");
        }
        Ok(())
    }

    /// The `k`-th camera; cameras are drawn in order from one seeded stream.
    pub fn cameras(&self, mesh: &Mesh) -> Vec<Camera> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (lo, hi) = mesh.bbox();
        let center = (lo + hi) / 2.0;
        let dist = self.distance * mesh.bbox_diagonal();
        let draw = |rng: &mut ChaCha8Rng, r: [f64; 2]| {
            if r[0] == r[1] {
                r[0]
            } else {
                rng.random_range(r[0]..=r[1])
            }
        };
        (0..self.count)
            .map(|_| {
                let yaw = draw(&mut rng, self.yaw_deg);
                let pitch = draw(&mut rng, self.pitch_deg);
                Camera::orbit(self.image_size, self.image_size, dist, self.fov_y_deg, yaw, pitch, center)
            })
            .collect()
    }
}

/// Visibility masks under cameras drawn uniformly from the pose ranges.
/// Deterministic for a fixed seed.
pub fn synth_masks(mesh: &Mesh, side: usize, params: &MaskSynthParams) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    let coverage = build_uv_coverage(mesh, side)?;
    let chart = coverage.chart_mask();
    params
        .cameras(mesh)
        .iter()
        .map(|cam| {
            let proj = project_texels(mesh, cam, &coverage, params.depth_bias)?;
            let mask: Vec<f64> = proj
                .iter()
                .map(|p| if p.is_some_and(|p| p.visible) { 1.0 } else { 0.0 })
                .collect();
            Ok(if params.erode > 0 {
                erode_mask(&mask, &chart, params.erode)
            } else {
                mask
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{head_mesh, unit_quad};

    #[test]
    fn quad_covers_every_texel_split_on_the_diagonal() {
        let cov = build_uv_coverage(&unit_quad(), 16).unwrap();
        assert_eq!(cov.covered_count(), 256);
        for y in 0..16 {
            for x in 0..16 {
                // Triangle 0 is the lower-right half (u >= v), ties included.
                let expect = if x >= y { 0 } else { 1 };
                assert_eq!(cov.triangle[y * 16 + x], Some(expect), "texel ({x},{y})");
            }
        }
        for b in &cov.bary {
            assert!(b.iter().all(|&w| w >= 0.0));
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_side_is_rejected() {
        assert!(build_uv_coverage(&unit_quad(), 0).is_err());
    }

    #[test]
    fn erosion_ignores_uncovered_texels() {
        let chart = ChartMask {
            side: 5,
            covered: (0..25).map(|i| i % 5 != 0).collect(),
        };
        let mut mask = vec![1.0; 25];
        mask[24] = 0.0;
        let out = erode_mask(&mask, &chart, 1);
        // Column 0 is outside the charts but valid in the input: kept.
        assert_eq!(out[0], 1.0);
        assert_eq!(out[18], 0.0);
        assert_eq!(out[12], 1.0);
    }

    #[test]
    fn camera_stream_is_reproducible() {
        let m = head_mesh(8, 4);
        let p = MaskSynthParams {
            count: 5,
            ..MaskSynthParams::default()
        };
        assert_eq!(p.cameras(&m), p.cameras(&m));
    }
}
