use super::Mask;
use crate::error::{Error, Result};

/// Euclidean distance (pixels) from every pixel to the nearest boundary
/// pixel of a mask. Boundary pixels are foreground pixels with a
/// 4-neighbor in the background; pixels outside the image count as
/// background.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub width: usize,
    pub height: usize,
    pub dist: Vec<f64>,
    pub boundary: Vec<(usize, usize)>,
}

/// Sampled field value and its spatial gradient `(d/du, d/dv)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub value: f64,
    pub du: f64,
    pub dv: f64,
}

pub fn boundary_pixels(mask: &Mask) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width, mask.height);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let edge = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1);
            if edge {
                out.push((x, y));
            }
        }
    }
    out
}

/// Lower envelope of parabolas: squared distance transform of a 1D sampled
/// function, in place.
fn envelope_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    let mut started = false;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        if !started {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            started = true;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    if !started {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance transform of the mask's boundary set, computed
/// with two separable lower-envelope passes.
pub fn distance_transform(mask: &Mask) -> Result<DistanceField> {
    let boundary = boundary_pixels(mask);
    if boundary.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (w, h) = (mask.width, mask.height);
    let mut sq = vec![f64::INFINITY; w * h];
    for &(x, y) in &boundary {
        sq[y * w + x] = 0.0;
    }
    let n = w.max(h);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; n], vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..w {
        for y in 0..h {
            f[y] = sq[y * w + x];
        }
        envelope_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            sq[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&sq[y * w..(y + 1) * w]);
        envelope_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        sq[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    Ok(DistanceField {
        width: w,
        height: h,
        dist: sq.into_iter().map(f64::sqrt).collect(),
        boundary,
    })
}

impl DistanceField {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.dist[y * self.width + x]
    }

    /// Bilinear interpolation at a continuous pixel position. Outside the
    /// image the value at the nearest border point is extended by the
    /// Euclidean distance to it, so the field keeps growing away from the
    /// image.
    pub fn sample(&self, u: f64, v: f64) -> FieldSample {
        let (maxu, maxv) = ((self.width - 1) as f64, (self.height - 1) as f64);
        let (cu, cv) = (u.clamp(0.0, maxu), v.clamp(0.0, maxv));
        let x0 = (cu.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (cv.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (tx, ty) = (cu - x0 as f64, cv - y0 as f64);
        let (f00, f10, f01, f11) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        let value = f00 * (1.0 - tx) * (1.0 - ty) + f10 * tx * (1.0 - ty) + f01 * (1.0 - tx) * ty + f11 * tx * ty;
        let (ou, ov) = (u - cu, v - cv);
        let outside = (ou * ou + ov * ov).sqrt();
        // clamped coordinates do not move with (u, v)
        let mut du = if ou == 0.0 && x1 > x0 { (f10 - f00) * (1.0 - ty) + (f11 - f01) * ty } else { 0.0 };
        let mut dv = if ov == 0.0 && y1 > y0 { (f01 - f00) * (1.0 - tx) + (f11 - f10) * tx } else { 0.0 };
        if outside > 0.0 {
            du += ou / outside;
            dv += ov / outside;
        }
        FieldSample {
            value: value + outside,
            du,
            dv,
        }
    }
}
