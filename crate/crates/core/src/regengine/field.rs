use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std is in the crate graph
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::image::Image2D;

/// Dense displacement on a `width x height` node grid.
///
/// `phi(x) = x + d(x)` maps fixed-image coordinates to moving-image
/// coordinates, so `moving(phi(x))` approximates `fixed(x)`. Displacements
/// are in pixels. `monitor` (area change) and `rotation` (curl) are the
/// parameters the field was generated from, or for fields built from raw
/// displacements, the normalized Jacobian and the finite-difference curl.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField2D {
    pub width: usize,
    pub height: usize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub monitor: Vec<f64>,
    pub rotation: Vec<f64>,
}

impl DeformationField2D {
    pub fn identity(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            dx: vec![0.0; n],
            dy: vec![0.0; n],
            monitor: vec![1.0; n],
            rotation: vec![0.0; n],
        }
    }

    /// Constant displacement everywhere (not boundary-preserving; for tests
    /// and composition checks).
    pub fn uniform(width: usize, height: usize, d: Point2) -> Self {
        let mut f = Self::identity(width, height);
        f.dx.iter_mut().for_each(|v| *v = d[0]);
        f.dy.iter_mut().for_each(|v| *v = d[1]);
        f
    }

    /// Wraps raw displacements, deriving monitor and rotation from finite
    /// differences.
    pub fn from_displacements(width: usize, height: usize, dx: Vec<f64>, dy: Vec<f64>) -> Self {
        let mut f = Self {
            width,
            height,
            dx,
            dy,
            monitor: Vec::new(),
            rotation: Vec::new(),
        };
        let n = width * height;
        let mut det = vec![0.0; n];
        let mut curl = vec![0.0; n];
        for j in 0..height {
            for i in 0..width {
                let [a, b, c, d] = f.grad_at(i, j);
                det[j * width + i] = (1.0 + a) * (1.0 + d) - b * c;
                curl[j * width + i] = c - b;
            }
        }
        let mean = det.iter().sum::<f64>() / n as f64;
        if mean > 0.0 {
            det.iter_mut().for_each(|v| *v /= mean);
        }
        f.monitor = det;
        f.rotation = curl;
        f
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn displacement(&self, i: usize, j: usize) -> Point2 {
        let k = j * self.width + i;
        [self.dx[k], self.dy[k]]
    }

    /// `[d dx/dx, d dx/dy, d dy/dx, d dy/dy]` by central differences
    /// (one-sided on the border).
    fn grad_at(&self, i: usize, j: usize) -> [f64; 4] {
        let w = self.width;
        let (il, ir) = (i.saturating_sub(1), (i + 1).min(w - 1));
        let (jl, jr) = (j.saturating_sub(1), (j + 1).min(self.height - 1));
        let hx = (ir - il) as f64;
        let hy = (jr - jl) as f64;
        [
            (self.dx[j * w + ir] - self.dx[j * w + il]) / hx,
            (self.dx[jr * w + i] - self.dx[jl * w + i]) / hy,
            (self.dy[j * w + ir] - self.dy[j * w + il]) / hx,
            (self.dy[jr * w + i] - self.dy[jl * w + i]) / hy,
        ]
    }

    /// `det(grad phi)` at each interior node, row-major over the
    /// `(width - 2) x (height - 2)` interior.
    pub fn jacobian_dets(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width.saturating_sub(2) * self.height.saturating_sub(2));
        for j in 1..self.height - 1 {
            for i in 1..self.width - 1 {
                let [a, b, c, d] = self.grad_at(i, j);
                out.push((1.0 + a) * (1.0 + d) - b * c);
            }
        }
        out
    }

    pub fn min_jacobian(&self) -> f64 {
        self.jacobian_dets().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max_displacement(&self) -> f64 {
        self.dx
            .iter()
            .zip(&self.dy)
            .map(|(a, b)| (a * a + b * b).sqrt())
            .fold(0.0, f64::max)
    }

    /// Largest displacement component normal to the domain boundary.
    pub fn max_boundary_normal(&self) -> f64 {
        let (w, h) = (self.width, self.height);
        let mut m: f64 = 0.0;
        for j in 0..h {
            m = m.max(self.dx[j * w].abs()).max(self.dx[j * w + w - 1].abs());
        }
        for i in 0..w {
            m = m.max(self.dy[i].abs()).max(self.dy[(h - 1) * w + i].abs());
        }
        m
    }

    pub fn mean_monitor(&self) -> f64 {
        self.monitor.iter().sum::<f64>() / self.monitor.len() as f64
    }

    /// Checks positivity of the interior Jacobian.
    pub fn check_diffeomorphic(&self) -> Result<()> {
        let m = self.min_jacobian();
        if m > 0.0 {
            Ok(())
        } else {
            Err(Error::degenerate(
                "jacobian>0",
                format!("min interior det = {:.3e}", m),
            ))
        }
    }

    /// Bilinearly interpolated displacement at `p` (clamped to the domain).
    #[inline]
    pub fn sample(&self, p: Point2) -> Point2 {
        let (i0, fx) = cell(p[0], self.width);
        let (j0, fy) = cell(p[1], self.height);
        let w = self.width;
        let k = j0 * w + i0;
        let lerp = |v: &[f64]| {
            (1.0 - fy) * ((1.0 - fx) * v[k] + fx * v[k + 1])
                + fy * ((1.0 - fx) * v[k + w] + fx * v[k + w + 1])
        };
        [lerp(&self.dx), lerp(&self.dy)]
    }

    fn sample_scalar(&self, v: &[f64], p: Point2) -> f64 {
        let (i0, fx) = cell(p[0], self.width);
        let (j0, fy) = cell(p[1], self.height);
        let w = self.width;
        let k = j0 * w + i0;
        (1.0 - fy) * ((1.0 - fx) * v[k] + fx * v[k + 1])
            + fy * ((1.0 - fx) * v[k + w] + fx * v[k + w + 1])
    }

    /// `phi(p)`.
    #[inline]
    pub fn map_point(&self, p: Point2) -> Point2 {
        let d = self.sample(p);
        [p[0] + d[0], p[1] + d[1]]
    }

    /// `moving(phi(x))` on the field grid.
    pub fn warp_image(&self, moving: &Image2D) -> Image2D {
        Image2D::from_fn(self.width, self.height, |i, j| {
            let k = j * self.width + i;
            moving.sample(i as f64 + self.dx[k], j as f64 + self.dy[k])
        })
    }
}

#[inline]
fn cell(x: f64, n: usize) -> (usize, f64) {
    let x = x.clamp(0.0, (n - 1) as f64);
    let i0 = (x as usize).min(n - 2);
    (i0, x - i0 as f64)
}

/// Result of [`warp_points`].
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedPoints {
    pub points: Vec<Point2>,
    /// Number of input or output points that had to be clamped into the domain.
    pub clamped: usize,
}

/// Displaces each point by the interpolated field. Order is preserved.
pub fn warp_points(points: &[Point2], field: &DeformationField2D) -> WarpedPoints {
    let (xm, ym) = ((field.width - 1) as f64, (field.height - 1) as f64);
    let mut clamped = 0;
    let out = points
        .iter()
        .map(|&p| {
            let q = [p[0].clamp(0.0, xm), p[1].clamp(0.0, ym)];
            let mut r = field.map_point(q);
            let rc = [r[0].clamp(0.0, xm), r[1].clamp(0.0, ym)];
            if q != p || rc != r {
                clamped += 1;
                r = rc;
            }
            r
        })
        .collect();
    WarpedPoints {
        points: out,
        clamped,
    }
}

/// `(f o g)(x) = f(g(x))`, resampling `f` at the `g`-displaced nodes.
pub fn compose(f: &DeformationField2D, g: &DeformationField2D) -> Result<DeformationField2D> {
    if (f.width, f.height) != (g.width, g.height) {
        return Err(Error::arg(
            "same-grid",
            format!("{}x{} vs {}x{}", f.width, f.height, g.width, g.height),
        ));
    }
    let (w, h) = (f.width, f.height);
    let n = w * h;
    let mut out = DeformationField2D {
        width: w,
        height: h,
        dx: vec![0.0; n],
        dy: vec![0.0; n],
        monitor: vec![0.0; n],
        rotation: vec![0.0; n],
    };
    for j in 0..h {
        for i in 0..w {
            let k = j * w + i;
            let q = [i as f64 + g.dx[k], j as f64 + g.dy[k]];
            let df = f.sample(q);
            out.dx[k] = g.dx[k] + df[0];
            out.dy[k] = g.dy[k] + df[1];
            out.monitor[k] = f.sample_scalar(&f.monitor, q) * g.monitor[k];
            out.rotation[k] = f.sample_scalar(&f.rotation, q) + g.rotation[k];
        }
    }
    let mean = out.mean_monitor();
    if (mean - 1.0).abs() > 1e-12 && mean > 0.0 {
        out.monitor.iter_mut().for_each(|v| *v /= mean);
    }
    let m = out.min_jacobian();
    if !(m > 0.0) {
        return Err(Error::degenerate(
            "composition-degeneracy",
            format!("composed min interior det = {:.3e}", m),
        ));
    }
    Ok(out)
}
