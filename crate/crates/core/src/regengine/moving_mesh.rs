//! Moving-mesh registration: a deformation generated by a monitor `mu` and a
//! curl `gamma` on a control mesh.
//!
//! The velocity `u` solves the div/curl system for `(mu, gamma)`. Mesh nodes
//! are advected from the identity by `dx/dt = u(x) / ((1 - t) mu(x) + t)` with
//! forward Euler, and image nodes follow the moved mesh bilinearly. Every
//! stage is differentiable, so the objective gradient with respect to
//! `(mu, gamma)` is computed exactly by running the steps backwards.

use alloc::vec;
use alloc::vec::Vec;

use super::divcurl::DivCurlSolver;
use super::{DeformationField2D, Similarity};
use crate::image::Image2D;
#[allow(unused_imports)] // unused when std is in the crate graph
use num_traits::Float;

/// Monitor and curl values on the node grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshParams {
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl MeshParams {
    pub fn identity(n: usize) -> Self {
        Self {
            mu: vec![1.0; n],
            gamma: vec![0.0; n],
        }
    }
}

/// Bilinear stencil at a position: corner index `k` (lower-left) and
/// fractional offsets.
#[derive(Clone, Copy, Debug)]
struct Stencil {
    k: usize,
    fx: f64,
    fy: f64,
}

#[inline]
fn stencil(x: f64, y: f64, w: usize, h: usize) -> Stencil {
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let i0 = (xc as usize).min(w - 2);
    let j0 = (yc as usize).min(h - 2);
    Stencil {
        k: j0 * w + i0,
        fx: xc - i0 as f64,
        fy: yc - j0 as f64,
    }
}

/// Value and spatial gradient of a node field at a stencil.
#[inline]
fn interp(v: &[f64], s: Stencil, w: usize) -> (f64, f64, f64) {
    let a = v[s.k];
    let b = v[s.k + 1];
    let c = v[s.k + w];
    let e = v[s.k + w + 1];
    let val = (1.0 - s.fy) * ((1.0 - s.fx) * a + s.fx * b) + s.fy * ((1.0 - s.fx) * c + s.fx * e);
    let gx = (1.0 - s.fy) * (b - a) + s.fy * (e - c);
    let gy = (1.0 - s.fx) * (c - a) + s.fx * (e - b);
    (val, gx, gy)
}

/// Scatters `g` into the four corners of a stencil with bilinear weights.
#[inline]
fn scatter(out: &mut [f64], s: Stencil, w: usize, g: f64) {
    out[s.k] += (1.0 - s.fx) * (1.0 - s.fy) * g;
    out[s.k + 1] += s.fx * (1.0 - s.fy) * g;
    out[s.k + w] += (1.0 - s.fx) * s.fy * g;
    out[s.k + w + 1] += s.fx * s.fy * g;
}

/// Objective `J(mu, gamma)` for one fixed/moving image pair.
///
/// The parameters live on a control mesh spanning the image domain. Mesh
/// nodes are advected by the flow; image nodes follow the moved mesh
/// bilinearly, so the field is defined per image node and is folding-free
/// whenever every mesh cell keeps its orientation.
#[derive(Clone, Debug)]
pub struct MovingMeshObjective<'a> {
    fixed: &'a Image2D,
    moving: &'a Image2D,
    solver: DivCurlSolver,
    cw: usize,
    ch: usize,
    /// Image pixels per control cell along x and y.
    sx: f64,
    sy: f64,
    /// Where each image node sits in the control mesh.
    pixel_stencils: Vec<Stencil>,
    steps: usize,
    similarity: Similarity,
}

/// Forward state needed by the adjoint pass, in control units, stored as
/// offsets of each mesh node from its start position.
struct Flow {
    ux: Vec<f64>,
    uy: Vec<f64>,
    /// Offsets before each Euler step, then the end offsets.
    xs: Vec<Vec<f64>>,
    ys: Vec<Vec<f64>>,
}

impl<'a> MovingMeshObjective<'a> {
    /// `control` is the `(width, height)` of the parameter mesh; it is clamped
    /// to the image size.
    pub fn new(
        fixed: &'a Image2D,
        moving: &'a Image2D,
        control: (usize, usize),
        steps: usize,
        similarity: Similarity,
    ) -> Self {
        assert_eq!(fixed.dims(), moving.dims(), "fixed/moving dims differ");
        let (w, h) = fixed.dims();
        let (cw, ch) = (control.0.clamp(2, w), control.1.clamp(2, h));
        let sx = (w - 1) as f64 / (cw - 1) as f64;
        let sy = (h - 1) as f64 / (ch - 1) as f64;
        let pixel_stencils = (0..w * h)
            .map(|q| stencil((q % w) as f64 / sx, (q / w) as f64 / sy, cw, ch))
            .collect();
        Self {
            fixed,
            moving,
            solver: DivCurlSolver::new(cw, ch),
            cw,
            ch,
            sx,
            sy,
            pixel_stencils,
            steps: steps.max(1),
            similarity,
        }
    }

    pub fn control_dims(&self) -> (usize, usize) {
        (self.cw, self.ch)
    }

    pub fn param_count(&self) -> usize {
        self.cw * self.ch
    }

    fn flow(&self, p: &MeshParams) -> Flow {
        let (cw, ch) = (self.cw, self.ch);
        let m = cw * ch;
        let (ux, uy) = self.solver.solve(&p.mu, &p.gamma);
        let mut x = vec![0.0; m];
        let mut y = vec![0.0; m];
        let mut xs = Vec::with_capacity(self.steps + 1);
        let mut ys = Vec::with_capacity(self.steps + 1);
        let dt = 1.0 / self.steps as f64;
        let still = ux.iter().chain(&uy).all(|&v| v == 0.0);
        for s in 0..self.steps {
            let t = s as f64 * dt;
            xs.push(x.clone());
            ys.push(y.clone());
            if still {
                continue;
            }
            for q in 0..m {
                let st = stencil((q % cw) as f64 + x[q], (q / cw) as f64 + y[q], cw, ch);
                let (vx, _, _) = interp(&ux, st, cw);
                let (vy, _, _) = interp(&uy, st, cw);
                let (mu, _, _) = interp(&p.mu, st, cw);
                let k = dt / ((1.0 - t) * mu + t);
                x[q] += k * vx;
                y[q] += k * vy;
            }
        }
        xs.push(x);
        ys.push(y);
        Flow { ux, uy, xs, ys }
    }

    /// Image-node end positions in pixels.
    fn end_pixels(&self, f: &Flow) -> (Vec<f64>, Vec<f64>) {
        let w = self.fixed.width;
        let cw = self.cw;
        let x = f.xs.last().unwrap();
        let y = f.ys.last().unwrap();
        let mut px = Vec::with_capacity(self.pixel_stencils.len());
        let mut py = Vec::with_capacity(self.pixel_stencils.len());
        for (q, &st) in self.pixel_stencils.iter().enumerate() {
            px.push((q % w) as f64 + interp(x, st, cw).0 * self.sx);
            py.push((q / w) as f64 + interp(y, st, cw).0 * self.sy);
        }
        (px, py)
    }

    fn field_from_flow(&self, p: &MeshParams, f: &Flow) -> DeformationField2D {
        let (w, h) = self.fixed.dims();
        let (px, py) = self.end_pixels(f);
        let (xm, ym) = ((w - 1) as f64, (h - 1) as f64);
        let dx = (0..w * h).map(|k| px[k].clamp(0.0, xm) - (k % w) as f64).collect();
        let dy = (0..w * h).map(|k| py[k].clamp(0.0, ym) - (k / w) as f64).collect();
        let on_pixels = |v: &[f64]| -> Vec<f64> {
            if (self.cw, self.ch) == (w, h) {
                return v.to_vec();
            }
            self.pixel_stencils.iter().map(|&st| interp(v, st, self.cw).0).collect()
        };
        let mut monitor = on_pixels(&p.mu);
        let mean = monitor.iter().sum::<f64>() / monitor.len() as f64;
        if (mean - 1.0).abs() > 1e-12 {
            monitor.iter_mut().for_each(|v| *v /= mean);
        }
        DeformationField2D {
            width: w,
            height: h,
            dx,
            dy,
            monitor,
            rotation: on_pixels(&p.gamma),
        }
    }

    /// Deformation field produced by the parameters.
    pub fn field(&self, p: &MeshParams) -> DeformationField2D {
        self.field_from_flow(p, &self.flow(p))
    }

    /// Objective value and its derivative with respect to the warped moving
    /// samples.
    fn similarity_and_residual(&self, warped: &[f64]) -> (f64, Vec<f64>) {
        let n = warped.len() as f64;
        let fixed = &self.fixed.data;
        match self.similarity {
            Similarity::Ssd => {
                let mut j = 0.0;
                let mut g = Vec::with_capacity(warped.len());
                for (a, b) in warped.iter().zip(fixed) {
                    let r = a - b;
                    j += r * r;
                    g.push(r / n);
                }
                (0.5 * j / n, g)
            }
            Similarity::Ncc => {
                let ma = warped.iter().sum::<f64>() / n;
                let mb = fixed.iter().sum::<f64>() / n;
                let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
                for (a, b) in warped.iter().zip(fixed) {
                    let (da, db) = (a - ma, b - mb);
                    ab += da * db;
                    aa += da * da;
                    bb += db * db;
                }
                if aa <= 1e-300 || bb <= 1e-300 {
                    return (1.0, vec![0.0; warped.len()]);
                }
                let (sa, sb) = (aa.sqrt(), bb.sqrt());
                let ncc = ab / (sa * sb);
                let g = warped
                    .iter()
                    .zip(fixed)
                    .map(|(a, b)| -((b - mb) / (sa * sb) - ncc * (a - ma) / aa))
                    .collect();
                (1.0 - ncc, g)
            }
        }
    }

    fn value_of_flow(&self, f: &Flow) -> f64 {
        let (px, py) = self.end_pixels(f);
        let warped: Vec<f64> = px.iter().zip(&py).map(|(&a, &b)| self.moving.sample(a, b)).collect();
        self.similarity_and_residual(&warped).0
    }

    pub fn value(&self, p: &MeshParams) -> f64 {
        self.value_of_flow(&self.flow(p))
    }

    /// Objective value together with the field, from a single forward pass.
    pub fn value_and_field(&self, p: &MeshParams) -> (f64, DeformationField2D) {
        let f = self.flow(p);
        (self.value_of_flow(&f), self.field_from_flow(p, &f))
    }

    /// Objective value and its exact gradient with respect to `(mu, gamma)`.
    pub fn value_and_gradient(&self, p: &MeshParams) -> (f64, MeshParams) {
        let n = self.fixed.len();
        let (cw, ch) = (self.cw, self.ch);
        let f = self.flow(p);
        let (pxe, pye) = self.end_pixels(&f);
        let mut warped = Vec::with_capacity(n);
        let mut grads = Vec::with_capacity(n);
        for q in 0..n {
            let (v, gx, gy) = self.moving.sample_with_grad(pxe[q], pye[q]);
            warped.push(v);
            grads.push((gx, gy));
        }
        let (j, dj_da) = self.similarity_and_residual(&warped);

        // adjoint of the end offsets of the mesh nodes (control units)
        let m = cw * ch;
        let mut lx = vec![0.0; m];
        let mut ly = vec![0.0; m];
        for (q, &st) in self.pixel_stencils.iter().enumerate() {
            scatter(&mut lx, st, cw, dj_da[q] * grads[q].0 * self.sx);
            scatter(&mut ly, st, cw, dj_da[q] * grads[q].1 * self.sy);
        }

        let mut gux = vec![0.0; m];
        let mut guy = vec![0.0; m];
        let mut gmu = vec![0.0; m];
        let dt = 1.0 / self.steps as f64;
        for s in (0..self.steps).rev() {
            let t = s as f64 * dt;
            let (x, y) = (&f.xs[s], &f.ys[s]);
            for q in 0..m {
                let st = stencil((q % cw) as f64 + x[q], (q / cw) as f64 + y[q], cw, ch);
                let (vx, vxx, vxy) = interp(&f.ux, st, cw);
                let (vy, vyx, vyy) = interp(&f.uy, st, cw);
                let (mu, mx, my) = interp(&p.mu, st, cw);
                let d = (1.0 - t) * mu + t;
                let (ax, ay) = (lx[q], ly[q]);
                scatter(&mut gux, st, cw, dt * ax / d);
                scatter(&mut guy, st, cw, dt * ay / d);
                let lu = ax * vx + ay * vy;
                scatter(&mut gmu, st, cw, -dt * lu * (1.0 - t) / (d * d));
                if s > 0 {
                    // transpose of the step's Jacobian with respect to position
                    let c = (1.0 - t) / (d * d);
                    lx[q] += dt * ((ax * vxx + ay * vyx) / d - lu * c * mx);
                    ly[q] += dt * ((ax * vxy + ay * vyy) / d - lu * c * my);
                }
            }
        }
        let (smu, sgamma) = self.solver.adjoint(&gux, &guy);
        for (a, b) in gmu.iter_mut().zip(&smu) {
            *a += b;
        }
        (
            j,
            MeshParams {
                mu: gmu,
                gamma: sgamma,
            },
        )
    }
}

/// Projects `mu` onto `{mean(mu) = 1, lo <= mu <= hi}` by shifting and
/// clamping (bisection on the shift).
pub fn project_monitor(mu: &mut [f64], lo: f64, hi: f64) {
    let n = mu.len() as f64;
    let mean_at = |s: f64, mu: &[f64]| mu.iter().map(|v| (v + s).clamp(lo, hi)).sum::<f64>() / n;
    let mean = mu.iter().sum::<f64>() / n;
    if mu.iter().all(|&v| v >= lo && v <= hi) && (mean - 1.0).abs() <= 1e-15 {
        return;
    }
    let (mut a, mut b) = (lo - hi, hi - lo);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if mean_at(m, mu) < 1.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-15 {
            break;
        }
    }
    let s = 0.5 * (a + b);
    mu.iter_mut().for_each(|v| *v = (*v + s).clamp(lo, hi));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(w: usize, h: usize) -> (Image2D, Image2D) {
        let f = Image2D::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.3 * (0.45 * x + 0.2).sin() * (0.35 * y - 0.4).cos()
        });
        let m = Image2D::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.3 * (0.45 * x - 0.3).sin() * (0.35 * y + 0.1).cos()
        });
        (f, m)
    }

    #[test]
    fn projection_hits_mean_and_bounds() {
        let mut mu = vec![0.1, 0.5, 3.0, 9.0, 1.0];
        project_monitor(&mut mu, 0.2, 5.0);
        let mean = mu.iter().sum::<f64>() / 5.0;
        assert!((mean - 1.0).abs() < 1e-9);
        assert!(mu.iter().all(|&v| (0.2..=5.0).contains(&v)));
    }

    #[test]
    fn identity_parameters_give_zero_field() {
        let (f, m) = pair(12, 10);
        let obj = MovingMeshObjective::new(&f, &m, (4, 4), 6, Similarity::Ssd);
        let fld = obj.field(&MeshParams::identity(16));
        assert_eq!(fld.max_displacement(), 0.0);
        assert!(fld.monitor.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn gradient_matches_finite_differences_ncc() {
        let (f, m) = pair(12, 11);
        let obj = MovingMeshObjective::new(&f, &m, (5, 4), 4, Similarity::Ncc);
        let n = obj.param_count();
        let mut p = MeshParams::identity(n);
        for k in 0..n {
            p.mu[k] = 1.0 + 0.1 * ((k as f64) * 0.7).sin();
            p.gamma[k] = 0.05 * ((k as f64) * 0.3).cos();
        }
        let (_, g) = obj.value_and_gradient(&p);
        let eps = 1e-6;
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..n {
            for which in 0..2 {
                let mut a = p.clone();
                let mut b = p.clone();
                let analytic = if which == 0 {
                    a.mu[k] += eps;
                    b.mu[k] -= eps;
                    g.mu[k]
                } else {
                    a.gamma[k] += eps;
                    b.gamma[k] -= eps;
                    g.gamma[k]
                };
                let fd = (obj.value(&a) - obj.value(&b)) / (2.0 * eps);
                num += (fd - analytic).powi(2);
                den += fd * fd;
            }
        }
        assert!((num / den).sqrt() < 1e-4, "rel err {}", (num / den).sqrt());
    }
}
