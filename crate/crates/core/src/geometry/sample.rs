use crate::Image;

/// The four source taps of a clamp-to-edge bilinear lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearTaps {
    pub index: [usize; 4],
    pub weight: [f64; 4],
}

/// Bilinear taps for a `width`×`height` grid with centers at integer + 0.5.
/// Coordinates outside the grid clamp to the boundary centers.
#[inline]
pub fn bilinear_taps(width: usize, height: usize, x: f64, y: f64) -> BilinearTaps {
    let fx = (x - 0.5).clamp(0.0, (width - 1) as f64);
    let fy = (y - 0.5).clamp(0.0, (height - 1) as f64);
    // NaN clamps to NaN; route it to the first texel.
    let (fx, fy) = (if fx.is_nan() { 0.0 } else { fx }, if fy.is_nan() { 0.0 } else { fy });
    let x0 = fx.floor() as usize;
    let y0 = fy.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let tx = fx - x0 as f64;
    let ty = fy - y0 as f64;
    BilinearTaps {
        index: [y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1],
        weight: [
            (1.0 - tx) * (1.0 - ty),
            tx * (1.0 - ty),
            (1.0 - tx) * ty,
            tx * ty,
        ],
    }
}

/// Bilinear interpolation of the four nearest pixel centers.
pub fn bilinear_sample(image: &Image, x: f64, y: f64) -> [f64; 3] {
    let taps = bilinear_taps(image.width, image.height, x, y);
    let mut out = [0.0; 3];
    for k in 0..4 {
        let i = taps.index[k] * 3;
        let w = taps.weight[k];
        out[0] += w * image.data[i];
        out[1] += w * image.data[i + 1];
        out[2] += w * image.data[i + 2];
    }
    out
}
