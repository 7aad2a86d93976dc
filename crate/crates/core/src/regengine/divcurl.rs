//! Spectral solver for the div/curl system on a node grid with zero normal
//! flow on the boundary.
//!
//! Given a monitor `mu` and a curl source `gamma`, the velocity is
//! `u = grad p + rot psi` with `lap p = mu - 1` (Neumann, cosine series) and
//! `lap psi = -gamma` (Dirichlet, sine series). Both parts share the same
//! basis per component (`sin x cos y` for `u_x`, `cos x sin y` for `u_y`), so
//! `u . n = 0` holds exactly at boundary nodes. The solver is linear; its exact
//! transpose is provided for gradient back-propagation.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // unused when std is in the crate graph
use num_traits::Float;

/// Transform matrices along one axis of `n` nodes.
#[derive(Clone, Debug)]
struct Axis {
    n: usize,
    /// Angular wavenumbers `pi k / (n - 1)`.
    k: Vec<f64>,
    /// Synthesis: `cos(pi k i / L)`, rows indexed by node `i`.
    cos_syn: Vec<f64>,
    sin_syn: Vec<f64>,
    /// Analysis: DCT-I / DST-I coefficients, rows indexed by mode `k`.
    dct: Vec<f64>,
    dst: Vec<f64>,
    cos_syn_t: Vec<f64>,
    sin_syn_t: Vec<f64>,
    dct_t: Vec<f64>,
    dst_t: Vec<f64>,
}

impl Axis {
    fn new(n: usize) -> Self {
        assert!(n >= 2, "axis needs at least two nodes");
        let l = (n - 1) as f64;
        let pi = core::f64::consts::PI;
        let mut cos_syn = vec![0.0; n * n];
        let mut sin_syn = vec![0.0; n * n];
        let mut dct = vec![0.0; n * n];
        let mut dst = vec![0.0; n * n];
        let w = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        for i in 0..n {
            for k in 0..n {
                let a = pi * (k * i) as f64 / l;
                let (s, c) = if (k * i) % (n - 1) == 0 {
                    // exact zeros/ones on the lattice of multiples of pi
                    let m = (k * i) / (n - 1);
                    (0.0, if m % 2 == 0 { 1.0 } else { -1.0 })
                } else {
                    (a.sin(), a.cos())
                };
                cos_syn[i * n + k] = c;
                sin_syn[i * n + k] = s;
                dct[k * n + i] = 2.0 / l * w(k) * w(i) * c;
                if k > 0 && k < n - 1 && i > 0 && i < n - 1 {
                    dst[k * n + i] = 2.0 / l * s;
                }
            }
        }
        let k = (0..n).map(|k| pi * k as f64 / l).collect();
        Self {
            n,
            k,
            cos_syn_t: transpose(&cos_syn, n, n),
            sin_syn_t: transpose(&sin_syn, n, n),
            dct_t: transpose(&dct, n, n),
            dst_t: transpose(&dst, n, n),
            cos_syn,
            sin_syn,
            dct,
            dst,
        }
    }
}

fn transpose(m: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = m[r * cols + c];
        }
    }
    t
}

/// `Y[j][o] = sum_i M[o][i] X[j][i]` for an `h x w` array `X` and square `M`.
fn apply_x(m: &[f64], x: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for j in 0..h {
        let row = &x[j * w..(j + 1) * w];
        for o in 0..w {
            let mr = &m[o * w..(o + 1) * w];
            out[j * w + o] = dot(mr, row);
        }
    }
}

/// `Y[o][:] = sum_j M[o][j] X[j][:]`.
fn apply_y(m: &[f64], x: &[f64], w: usize, h: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for o in 0..h {
        let dst = &mut out[o * w..(o + 1) * w];
        for j in 0..h {
            let c = m[o * h + j];
            if c == 0.0 {
                continue;
            }
            let src = &x[j * w..(j + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += c * s;
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Precomputed div/curl solver for a `width x height` node grid.
#[derive(Clone, Debug)]
pub struct DivCurlSolver {
    x: Axis,
    y: Axis,
    /// `1 / (kx^2 + ky^2)`, zero for the constant mode.
    inv_lap: Vec<f64>,
}

impl DivCurlSolver {
    pub fn new(width: usize, height: usize) -> Self {
        let x = Axis::new(width);
        let y = Axis::new(height);
        let mut inv_lap = vec![0.0; width * height];
        for l in 0..height {
            for k in 0..width {
                let kk = x.k[k] * x.k[k] + y.k[l] * y.k[l];
                if kk > 0.0 {
                    inv_lap[l * width + k] = 1.0 / kk;
                }
            }
        }
        Self { x, y, inv_lap }
    }

    pub fn width(&self) -> usize {
        self.x.n
    }

    pub fn height(&self) -> usize {
        self.y.n
    }

    /// Velocity `(u_x, u_y)` at every node for monitor `mu` and curl `gamma`.
    pub fn solve(&self, mu: &[f64], gamma: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (w, h) = (self.x.n, self.y.n);
        let n = w * h;
        let mut t = vec![0.0; n];
        let src: Vec<f64> = mu.iter().map(|m| m - 1.0).collect();
        let mut c_hat = vec![0.0; n];
        apply_x(&self.x.dct, &src, w, h, &mut t);
        apply_y(&self.y.dct, &t, w, h, &mut c_hat);
        let mut g_hat = vec![0.0; n];
        apply_x(&self.x.dst, gamma, w, h, &mut t);
        apply_y(&self.y.dst, &t, w, h, &mut g_hat);

        let mut ax = vec![0.0; n];
        let mut ay = vec![0.0; n];
        for l in 0..h {
            let ky = self.y.k[l];
            for k in 0..w {
                let kx = self.x.k[k];
                let idx = l * w + k;
                let p = -c_hat[idx] * self.inv_lap[idx];
                let s = g_hat[idx] * self.inv_lap[idx];
                ax[idx] = -kx * p + ky * s;
                ay[idx] = -ky * p - kx * s;
            }
        }
        let mut ux = vec![0.0; n];
        let mut uy = vec![0.0; n];
        apply_x(&self.x.sin_syn, &ax, w, h, &mut t);
        apply_y(&self.y.cos_syn, &t, w, h, &mut ux);
        apply_x(&self.x.cos_syn, &ay, w, h, &mut t);
        apply_y(&self.y.sin_syn, &t, w, h, &mut uy);
        (ux, uy)
    }

    /// Transpose of [`solve`](Self::solve): maps sensitivities with respect to
    /// `(u_x, u_y)` onto sensitivities with respect to `(mu, gamma)`.
    pub fn adjoint(&self, gux: &[f64], guy: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (w, h) = (self.x.n, self.y.n);
        let n = w * h;
        let mut t = vec![0.0; n];
        let mut ax = vec![0.0; n];
        let mut ay = vec![0.0; n];
        apply_y(&self.y.cos_syn_t, gux, w, h, &mut t);
        apply_x(&self.x.sin_syn_t, &t, w, h, &mut ax);
        apply_y(&self.y.sin_syn_t, guy, w, h, &mut t);
        apply_x(&self.x.cos_syn_t, &t, w, h, &mut ay);

        let mut c_bar = vec![0.0; n];
        let mut g_bar = vec![0.0; n];
        for l in 0..h {
            let ky = self.y.k[l];
            for k in 0..w {
                let kx = self.x.k[k];
                let idx = l * w + k;
                let p_bar = -kx * ax[idx] - ky * ay[idx];
                let s_bar = ky * ax[idx] - kx * ay[idx];
                c_bar[idx] = -p_bar * self.inv_lap[idx];
                g_bar[idx] = s_bar * self.inv_lap[idx];
            }
        }
        let mut gmu = vec![0.0; n];
        let mut ggamma = vec![0.0; n];
        apply_y(&self.y.dct_t, &c_bar, w, h, &mut t);
        apply_x(&self.x.dct_t, &t, w, h, &mut gmu);
        apply_y(&self.y.dst_t, &g_bar, w, h, &mut t);
        apply_x(&self.x.dst_t, &t, w, h, &mut ggamma);
        (gmu, ggamma)
    }
}
