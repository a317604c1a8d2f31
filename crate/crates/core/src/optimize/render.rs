//! Differentiable UV rendering: image pixels look up the texture through a
//! frozen pixel-to-UV map.

use crate::geometry::{bilinear_taps, project_triangles, rasterize_depth_rows, BilinearTaps};
use crate::{par, Camera, Error, Image, Mesh, Result, TextureMap};

/// Pixel-to-UV correspondence for a fixed mesh, camera and texture size.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderMap {
    pub width: usize,
    pub height: usize,
    pub side: usize,
    /// Winning triangle per pixel.
    pub triangle: Vec<Option<u32>>,
    /// Interpolated UV per pixel; zero where uncovered.
    pub uv: Vec<[f64; 2]>,
    taps: Vec<Option<BilinearTaps>>,
    /// Transpose of the tap table: for texel `i`, entries
    /// `gather[start[i]..start[i + 1]]` list `(pixel, weight)` in pixel order.
    start: Vec<usize>,
    gather: Vec<(u32, f64)>,
}

/// Rasterizes `mesh` into the camera's image and records, for every covered
/// pixel center, the perspective-correct UV of the winning triangle.
pub fn build_render_map(mesh: &Mesh, camera: &Camera, side: usize) -> Result<RenderMap> {
    camera.validate()?;
    if side == 0 {
        return Err(Error::InvalidArgument("texture side must be positive".into()));
    }
    if mesh.uv_corners.len() != mesh.triangles.len() {
        return Err(Error::MissingUv);
    }
    let (width, height) = (camera.width, camera.height);
    let screen = project_triangles(mesh, camera);
    let buf = rasterize_depth_rows(&screen, width, height)?;
    let uv: Vec<[f64; 2]> = par::map(width * height, |p| {
        let Some(t) = buf.triangle[p] else {
            return [0.0; 2];
        };
        let st = screen[t as usize].as_ref().expect("winning triangle is projected");
        let center = [(p % width) as f64 + 0.5, (p / width) as f64 + 0.5];
        let Some((w, _)) = st.hit(center) else {
            return [0.0; 2];
        };
        let w = st.perspective_weights(w);
        let c = &mesh.uv_corners[t as usize];
        let u = w[0] * c[0][0] + w[1] * c[1][0] + w[2] * c[2][0];
        let v = w[0] * c[0][1] + w[1] * c[1][1] + w[2] * c[2][1];
        [u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)]
    });
    let s = side as f64;
    let taps: Vec<Option<BilinearTaps>> = buf
        .triangle
        .iter()
        .zip(&uv)
        .map(|(t, uv)| t.map(|_| bilinear_taps(side, side, uv[0] * s, uv[1] * s)))
        .collect();

    let mut start = vec![0usize; side * side + 1];
    for t in taps.iter().flatten() {
        for k in 0..4 {
            start[t.index[k] + 1] += 1;
        }
    }
    for i in 0..side * side {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut gather = vec![(0u32, 0.0); start[side * side]];
    for (p, t) in taps.iter().enumerate() {
        if let Some(t) = t {
            for k in 0..4 {
                let slot = &mut fill[t.index[k]];
                gather[*slot] = (p as u32, t.weight[k]);
                *slot += 1;
            }
        }
    }
    Ok(RenderMap {
        width,
        height,
        side,
        triangle: buf.triangle,
        uv,
        taps,
        start,
        gather,
    })
}

impl RenderMap {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// 1 on covered pixels, 0 elsewhere.
    pub fn mask(&self) -> Vec<f64> {
        self.triangle.iter().map(|t| if t.is_some() { 1.0 } else { 0.0 }).collect()
    }

    pub fn covered_count(&self) -> usize {
        self.triangle.iter().filter(|t| t.is_some()).count()
    }

    /// Bilinear taps of pixel `p`, if covered.
    pub fn taps(&self, p: usize) -> Option<&BilinearTaps> {
        self.taps[p].as_ref()
    }

    fn check_texture_len(&self, len: usize) -> Result<()> {
        if len != self.side * self.side * 3 {
            return Err(Error::ShapeMismatch(format!(
                "texture has {len} values, render map expects side {}",
                self.side
            )));
        }
        Ok(())
    }

    /// Renders interleaved RGB texture values into an image.
    pub fn render_values(&self, texture: &[f64]) -> Result<Image> {
        self.check_texture_len(texture.len())?;
        let px: Vec<[f64; 3]> = par::map(self.pixel_count(), |p| match &self.taps[p] {
            Some(t) => {
                let mut out = [0.0; 3];
                for k in 0..4 {
                    let i = 3 * t.index[k];
                    for c in 0..3 {
                        out[c] += t.weight[k] * texture[i + c];
                    }
                }
                out
            }
            None => [0.0; 3],
        });
        Image::from_data(self.width, self.height, px.into_iter().flatten().collect())
    }

    /// Renders `texture`; returns the image and the foreground mask.
    pub fn render(&self, texture: &TextureMap) -> Result<(Image, Vec<f64>)> {
        if texture.side != self.side {
            return Err(Error::ShapeMismatch(format!(
                "texture side {} but render map side {}",
                texture.side, self.side
            )));
        }
        Ok((self.render_values(&texture.data)?, self.mask()))
    }

    /// Adjoint of [`Self::render_values`]: texture-shaped cotangent of an
    /// image-shaped cotangent.
    pub fn render_vjp(&self, cotangent: &[f64]) -> Result<Vec<f64>> {
        if cotangent.len() != self.pixel_count() * 3 {
            return Err(Error::ShapeMismatch(format!(
                "cotangent has {} values, image has {} pixels",
                cotangent.len(),
                self.pixel_count()
            )));
        }
        let texels: Vec<[f64; 3]> = par::map(self.side * self.side, |i| {
            let mut acc = [0.0; 3];
            for &(p, w) in &self.gather[self.start[i]..self.start[i + 1]] {
                let j = 3 * p as usize;
                for c in 0..3 {
                    acc[c] += w * cotangent[j + c];
                }
            }
            acc
        });
        Ok(texels.into_iter().flatten().collect())
    }
}
