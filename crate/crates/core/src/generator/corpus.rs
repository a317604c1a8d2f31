//! Facial region layouts and the procedural multi-style texture corpus.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fixtures::FACE_LAYOUT_JSON;
use crate::{par, Error, Result, TextureMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Ellipse {
        center: [f64; 2],
        radii: [f64; 2],
        #[serde(default)]
        angle_deg: f64,
    },
    Polygon {
        points: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub shape: Shape,
}

/// Named facial regions in UV space, drawn in order (later regions on top).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub regions: Vec<Region>,
}

fn layout_error(region: &str, message: impl Into<String>) -> Error {
    Error::Layout {
        region: region.to_string(),
        message: message.into(),
    }
}

impl Layout {
    /// The layout matching the head fixture's UV parameterization.
    pub fn default_face() -> Self {
        Self::parse(FACE_LAYOUT_JSON).expect("bundled layout is valid")
    }

    pub fn parse(json: &str) -> Result<Self> {
        let layout: Layout = serde_json::from_str(json)?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, r) in self.regions.iter().enumerate() {
            if r.name.is_empty() {
                return Err(layout_error(&format!("#{k}"), "empty region name"));
            }
            if self.regions[..k].iter().any(|o| o.name == r.name) {
                return Err(layout_error(&r.name, "duplicate region name"));
            }
            match &r.shape {
                Shape::Ellipse {
                    center,
                    radii,
                    angle_deg,
                } => {
                    if !center.iter().chain(radii).all(|v| v.is_finite()) || !angle_deg.is_finite() {
                        return Err(layout_error(&r.name, "non-finite ellipse parameter"));
                    }
                    if radii.iter().any(|&v| v <= 0.0) {
                        return Err(layout_error(&r.name, format!("ellipse radii must be positive, got {radii:?}")));
                    }
                }
                Shape::Polygon { points } => {
                    if points.len() < 3 {
                        return Err(layout_error(&r.name, format!("polygon needs 3 points, got {}", points.len())));
                    }
                    if !points.iter().flatten().all(|v| v.is_finite()) {
                        return Err(layout_error(&r.name, "non-finite polygon point"));
                    }
                    if polygon_area(points).abs() < 1e-12 {
                        return Err(layout_error(&r.name, "polygon has zero area"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn polygon_area(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
}

impl Shape {
    /// Signed distance in UV units, negative inside. Exact for polygons; for
    /// ellipses the radial excess scaled by the smaller radius.
    pub fn signed_distance(&self, p: [f64; 2]) -> f64 {
        match self {
            Shape::Ellipse {
                center,
                radii,
                angle_deg,
            } => {
                let (s, c) = angle_deg.to_radians().sin_cos();
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                let (x, y) = (c * dx + s * dy, -s * dx + c * dy);
                let rho = ((x / radii[0]).powi(2) + (y / radii[1]).powi(2)).sqrt();
                (rho - 1.0) * radii[0].min(radii[1])
            }
            Shape::Polygon { points } => {
                let n = points.len();
                let mut inside = false;
                let mut d = f64::INFINITY;
                for i in 0..n {
                    let (a, b) = (points[i], points[(i + 1) % n]);
                    d = d.min(segment_distance(p, a, b));
                    if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]) {
                        inside = !inside;
                    }
                }
                if inside {
                    -d
                } else {
                    d
                }
            }
        }
    }
}

/// Style distribution of the synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleParams {
    /// Skin hue range in degrees.
    pub hue_deg: [f64; 2],
    pub saturation: [f64; 2],
    pub value: [f64; 2],
    /// RGB offsets added to the skin color, by region kind.
    pub eyes: [f64; 3],
    pub brows: [f64; 3],
    pub lips: [f64; 3],
    pub nose_shadow: [f64; 3],
    /// Each texture scales every offset by a factor in `1 ± offset_jitter`.
    pub offset_jitter: f64,
    /// 1 gives hard region edges; lower values blend over a wider band.
    pub hardness: f64,
    /// Darkening of region outlines; 0 disables outlines.
    pub outline: f64,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl Default for StyleParams {
    fn default() -> Self {
        Self {
            hue_deg: [12.0, 38.0],
            saturation: [0.2, 0.6],
            value: [0.35, 0.95],
            eyes: [-0.25, -0.22, -0.15],
            brows: [-0.3, -0.3, -0.28],
            lips: [0.12, -0.12, -0.08],
            nose_shadow: [-0.08, -0.08, -0.06],
            offset_jitter: 0.5,
            hardness: 0.7,
            outline: 0.0,
            noise_amplitude: 0.03,
            seed: 1,
        }
    }
}

/// Width in UV units of the soft edge band at hardness 0.
const EDGE_BAND: f64 = 0.03;
const OUTLINE_WIDTH: f64 = 0.004;
const NOISE_WAVES: usize = 8;

fn unit_range(v: [f64; 2]) -> bool {
    0.0 <= v[0] && v[0] <= v[1] && v[1] <= 1.0
}

impl StyleParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("style: {m}")));
        if !(0.0 <= self.hue_deg[0] && self.hue_deg[0] <= self.hue_deg[1] && self.hue_deg[1] <= 360.0) {
            return bad(format!("hue range {:?} must lie in [0, 360]", self.hue_deg));
        }
        if !unit_range(self.saturation) || !unit_range(self.value) {
            return bad("saturation and value ranges must lie in [0, 1]".into());
        }
        for (name, o) in [("eyes", self.eyes), ("brows", self.brows), ("lips", self.lips), ("nose_shadow", self.nose_shadow)] {
            if !o.iter().all(|v| (-1.0..=1.0).contains(v)) {
                return bad(format!("{name} offset {o:?} outside [-1, 1]"));
            }
        }
        for (name, v) in [
            ("offset_jitter", self.offset_jitter),
            ("hardness", self.hardness),
            ("outline", self.outline),
            ("noise_amplitude", self.noise_amplitude),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        Ok(())
    }

    fn offset_for(&self, region: &str) -> [f64; 3] {
        let name = region.to_ascii_lowercase();
        if name.contains("brow") {
            self.brows
        } else if name.contains("eye") {
            self.eyes
        } else if name.contains("lip") || name.contains("mouth") {
            self.lips
        } else if name.contains("nose") {
            self.nose_shadow
        } else {
            [0.0; 3]
        }
    }

    /// Concrete colors and noise for corpus member `index`.
    pub fn sample(&self, layout: &Layout, index: usize) -> TextureStyle {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let mut draw = |r: [f64; 2]| if r[0] == r[1] { r[0] } else { rng.random_range(r[0]..=r[1]) };
        let skin = hsv_to_rgb(draw(self.hue_deg), draw(self.saturation), draw(self.value));
        let regions = layout
            .regions
            .iter()
            .map(|r| {
                let j = self.offset_jitter;
                let scale = draw([1.0 - j, 1.0 + j]);
                let o = self.offset_for(&r.name);
                [0, 1, 2].map(|c| (skin[c] + scale * o[c]).clamp(0.0, 1.0))
            })
            .collect();
        let waves = (0..NOISE_WAVES)
            .map(|_| {
                let f = [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)];
                let phase = rng.random_range(0.0..2.0 * PI);
                (f, phase)
            })
            .collect();
        TextureStyle {
            skin,
            regions,
            hardness: self.hardness,
            outline: self.outline,
            noise_amplitude: self.noise_amplitude,
            waves,
        }
    }
}

/// One sampled corpus member's appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureStyle {
    pub skin: [f64; 3],
    /// Fill color per layout region.
    pub regions: Vec<[f64; 3]>,
    pub hardness: f64,
    pub outline: f64,
    pub noise_amplitude: f64,
    /// Frequency (cycles per unit) and phase of each noise wave.
    pub waves: Vec<([f64; 2], f64)>,
}

pub fn hsv_to_rgb(hue_deg: f64, s: f64, v: f64) -> [f64; 3] {
    let h = hue_deg.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Rasterizes a style at texel centers.
pub fn draw_texture(layout: &Layout, style: &TextureStyle, side: usize) -> TextureMap {
    let norm = (2.0 / style.waves.len().max(1) as f64).sqrt();
    let texels = par::map(side * side, |i| {
        let p = [((i % side) as f64 + 0.5) / side as f64, ((i / side) as f64 + 0.5) / side as f64];
        let mut color = style.skin;
        for (region, fill) in layout.regions.iter().zip(&style.regions) {
            let d = region.shape.signed_distance(p);
            let w = if style.hardness >= 1.0 {
                if d < 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (0.5 - d / ((1.0 - style.hardness) * EDGE_BAND)).clamp(0.0, 1.0)
            };
            for c in 0..3 {
                color[c] = w * fill[c] + (1.0 - w) * color[c];
            }
            if style.outline > 0.0 {
                let o = style.outline * (1.0 - d.abs() / OUTLINE_WIDTH).max(0.0);
                color = color.map(|v| v * (1.0 - o));
            }
        }
        if style.noise_amplitude > 0.0 {
            let n: f64 = style
                .waves
                .iter()
                .map(|(f, phase)| (2.0 * PI * (f[0] * p[0] + f[1] * p[1]) + phase).cos())
                .sum();
            color = color.map(|v| v + style.noise_amplitude * norm * n);
        }
        color
    });
    let mut t = TextureMap::new(side);
    for (i, c) in texels.into_iter().enumerate() {
        t.set_texel(i, c);
    }
    t.mask.fill(1.0);
    t
}

/// Corpus member `index`; identical for identical `(style.seed, index)`.
pub fn synth_texture(layout: &Layout, style: &StyleParams, side: usize, index: usize) -> TextureMap {
    draw_texture(layout, &style.sample(layout, index), side)
}

pub fn synth_corpus(layout: &Layout, style: &StyleParams, n: usize, side: usize) -> Result<Vec<TextureMap>> {
    layout.validate()?;
    style.validate()?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("corpus needs at least 2 textures, got {n}")));
    }
    if side == 0 {
        return Err(Error::InvalidArgument("texture side must be positive".into()));
    }
    Ok((0..n).map(|i| synth_texture(layout, style, side, i)).collect())
}
