//! Dense 2D scalar images used for slices, registration pyramids and fields.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // unused when std is in the crate graph
use num_traits::Float;

/// Row-major image, `data[y * width + x]`. Pixel centres sit at integer
/// coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Image2D {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image2D {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        Self {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample with coordinates clamped to the image domain.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (i0, fx) = cell(x, self.width);
        let (j0, fy) = cell(y, self.height);
        let w = self.width;
        let d = &self.data;
        let a = d[j0 * w + i0];
        let b = d[j0 * w + i0 + 1];
        let c = d[(j0 + 1) * w + i0];
        let e = d[(j0 + 1) * w + i0 + 1];
        (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * e)
    }

    /// Bilinear sample together with its spatial gradient.
    #[inline]
    pub fn sample_with_grad(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (i0, fx) = cell(x, self.width);
        let (j0, fy) = cell(y, self.height);
        let w = self.width;
        let d = &self.data;
        let a = d[j0 * w + i0];
        let b = d[j0 * w + i0 + 1];
        let c = d[(j0 + 1) * w + i0];
        let e = d[(j0 + 1) * w + i0 + 1];
        let v = (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * e);
        let gx = (1.0 - fy) * (b - a) + fy * (e - c);
        let gy = (1.0 - fx) * (c - a) + fx * (e - b);
        (v, gx, gy)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image2D {
        Image2D {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Central-difference gradient (one-sided at the border).
    pub fn gradient(&self) -> (Image2D, Image2D) {
        let (w, h) = self.dims();
        let gx = Image2D::from_fn(w, h, |x, y| {
            let l = x.saturating_sub(1);
            let r = (x + 1).min(w - 1);
            (self.get(r, y) - self.get(l, y)) / (r - l).max(1) as f64
        });
        let gy = Image2D::from_fn(w, h, |x, y| {
            let l = y.saturating_sub(1);
            let r = (y + 1).min(h - 1);
            (self.get(x, r) - self.get(x, l)) / (r - l).max(1) as f64
        });
        (gx, gy)
    }

    /// Separable Gaussian blur with edge renormalization.
    pub fn gaussian(&self, sigma: f64) -> Image2D {
        if sigma <= 0.0 {
            return self.clone();
        }
        let kernel = gaussian_kernel(sigma);
        let tmp = convolve_x(self, &kernel);
        convolve_y(&tmp, &kernel)
    }

    /// Node-aligned 2:1 reduction with a [1 2 1]/4 filter. Output size is
    /// `(n - 1) / 2 + 1` along each axis, so coarse node `c` sits on fine node `2c`.
    pub fn reduce(&self) -> Image2D {
        let k = [0.25, 0.5, 0.25];
        let (w, h) = self.dims();
        let cw = (w - 1) / 2 + 1;
        let ch = (h - 1) / 2 + 1;
        let at = |x: isize, y: isize| -> f64 {
            let x = x.clamp(0, w as isize - 1) as usize;
            let y = y.clamp(0, h as isize - 1) as usize;
            self.get(x, y)
        };
        Image2D::from_fn(cw, ch, |cx, cy| {
            let fx = 2 * cx as isize;
            let fy = 2 * cy as isize;
            let mut s = 0.0;
            for (dy, wy) in k.iter().enumerate() {
                for (dx, wx) in k.iter().enumerate() {
                    s += wx * wy * at(fx + dx as isize - 1, fy + dy as isize - 1);
                }
            }
            s
        })
    }

    /// Bilinear resampling onto a `w x h` node grid spanning the same domain.
    pub fn resize(&self, w: usize, h: usize) -> Image2D {
        let sx = if w > 1 {
            (self.width - 1) as f64 / (w - 1) as f64
        } else {
            0.0
        };
        let sy = if h > 1 {
            (self.height - 1) as f64 / (h - 1) as f64
        } else {
            0.0
        };
        Image2D::from_fn(w, h, |x, y| self.sample(x as f64 * sx, y as f64 * sy))
    }
}

#[inline]
fn cell(x: f64, n: usize) -> (usize, f64) {
    let x = x.clamp(0.0, (n - 1) as f64);
    let i0 = (x as usize).min(n - 2);
    (i0, x - i0 as f64)
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn convolve_x(img: &Image2D, k: &[f64]) -> Image2D {
    let (w, h) = img.dims();
    let r = (k.len() / 2) as isize;
    let mut out = Image2D::new(w, h);
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for x in 0..w {
            let (mut s, mut ws) = (0.0, 0.0);
            for (t, kv) in k.iter().enumerate() {
                let xx = x as isize + t as isize - r;
                if xx >= 0 && xx < w as isize {
                    s += kv * row[xx as usize];
                    ws += kv;
                }
            }
            out.data[y * w + x] = s / ws;
        }
    }
    out
}

fn convolve_y(img: &Image2D, k: &[f64]) -> Image2D {
    let (w, h) = img.dims();
    let r = (k.len() / 2) as isize;
    let mut out = Image2D::new(w, h);
    let mut wsum = vec![0.0; h];
    for (y, ws) in wsum.iter_mut().enumerate() {
        for (t, kv) in k.iter().enumerate() {
            let yy = y as isize + t as isize - r;
            if yy >= 0 && yy < h as isize {
                *ws += kv;
            }
        }
    }
    for y in 0..h {
        let dst = &mut out.data[y * w..(y + 1) * w];
        for (t, kv) in k.iter().enumerate() {
            let yy = y as isize + t as isize - r;
            if yy < 0 || yy >= h as isize {
                continue;
            }
            let src = &img.data[yy as usize * w..(yy as usize + 1) * w];
            let c = kv / wsum[y];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += c * s;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_exact_on_nodes_and_planes() {
        let img = Image2D::from_fn(5, 4, |x, y| 2.0 * x as f64 - 0.5 * y as f64 + 1.0);
        assert_eq!(img.sample(3.0, 2.0), img.get(3, 2));
        let (v, gx, gy) = img.sample_with_grad(1.25, 2.5);
        assert!((v - (2.5 - 1.25 + 1.0)).abs() < 1e-12);
        assert!((gx - 2.0).abs() < 1e-12 && (gy + 0.5).abs() < 1e-12);
        // clamped outside the domain
        assert_eq!(img.sample(-3.0, 0.0), img.get(0, 0));
    }

    #[test]
    fn gaussian_preserves_constants() {
        let img = Image2D::filled(9, 7, 0.3);
        let g = img.gaussian(2.0);
        assert!(g.data.iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn reduce_is_node_aligned() {
        let img = Image2D::from_fn(9, 5, |x, y| x as f64 + 10.0 * y as f64);
        let r = img.reduce();
        assert_eq!(r.dims(), (5, 3));
        // interior nodes of a linear ramp are reproduced exactly
        assert!((r.get(2, 1) - img.get(4, 2)).abs() < 1e-12);
    }
}
