//! 2D slice registration.
//!
//! [`register`] is the diffeomorphic moving-mesh method; [`register_demons`]
//! is the demons baseline used for comparison. Both return a
//! [`DeformationField2D`] mapping fixed-image coordinates into the moving
//! image, so contour points drawn on the fixed slice are carried onto the
//! moving slice by [`warp_points`].

mod demons;
mod divcurl;
mod field;
mod moving_mesh;

use alloc::format;
use alloc::vec::Vec;

pub use demons::register_demons;
pub use divcurl::DivCurlSolver;
pub use field::{compose, warp_points, DeformationField2D, WarpedPoints};
pub use moving_mesh::{project_monitor, MeshParams, MovingMeshObjective};

use crate::error::{Error, Result};
use crate::image::Image2D;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE"))]
pub enum Similarity {
    Ssd,
    Ncc,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RegistrationConfig {
    pub pyramid_levels: usize,
    pub max_iters_per_level: usize,
    pub similarity: Similarity,
    /// Stop a level once the relative objective decrease of an accepted step
    /// falls below this.
    pub step_tol: f64,
    /// Gaussian sigma (pixels) applied to parameter gradients.
    pub smoothing_sigma: f64,
    /// Spacing of the parameter grid in pixels of the finest level.
    pub control_spacing: usize,
    pub mu_bounds: (f64, f64),
    /// Bound on `|gamma|`.
    pub gamma_bound: f64,
    /// Euler steps used to integrate the deformation.
    pub ode_steps: usize,
    /// Largest parameter change of the first trial step.
    pub initial_step: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            max_iters_per_level: 200,
            similarity: Similarity::Ssd,
            step_tol: 1e-4,
            smoothing_sigma: 2.0,
            control_spacing: 4,
            mu_bounds: (0.2, 5.0),
            gamma_bound: 2.0,
            ode_steps: 4,
            initial_step: 0.1,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels < 1 {
            return Err(Error::arg("pyramid_levels>=1", format!("{}", self.pyramid_levels)));
        }
        let (lo, hi) = self.mu_bounds;
        if !(lo > 0.0 && lo < 1.0 && hi > 1.0) {
            return Err(Error::arg("0<mu_min<1<mu_max", format!("({}, {})", lo, hi)));
        }
        if !(self.step_tol >= 0.0)
            || !(self.initial_step > 0.0)
            || self.ode_steps == 0
            || self.control_spacing == 0
        {
            return Err(Error::arg(
                "optimizer-settings",
                format!(
                    "step_tol {} initial_step {} ode_steps {}",
                    self.step_tol, self.initial_step, self.ode_steps
                ),
            ));
        }
        Ok(())
    }
}

/// Outcome of one registration.
#[derive(Clone, Debug, PartialEq)]
pub struct Registration {
    pub field: DeformationField2D,
    /// False when some level hit `max_iters_per_level` before the stopping rule.
    pub converged: bool,
    /// Objective value after each accepted step, per level (coarsest first),
    /// starting with the initial value.
    pub history: Vec<Vec<f64>>,
}

impl Registration {
    pub fn final_cost(&self) -> f64 {
        self.history
            .last()
            .and_then(|h| h.last())
            .copied()
            .unwrap_or(0.0)
    }
}

/// Registration method used by the pipeline.
#[derive(Clone, Debug, PartialEq)]
pub enum Registrar {
    MovingMesh(RegistrationConfig),
    Demons { iters: usize, sigma: f64 },
}

impl Default for Registrar {
    fn default() -> Self {
        Registrar::MovingMesh(RegistrationConfig::default())
    }
}

impl Registrar {
    /// Demons with 50 iterations and a Gaussian of 5 pixels.
    pub fn demons() -> Self {
        Registrar::Demons {
            iters: 50,
            sigma: 5.0,
        }
    }

    pub fn register(&self, fixed: &Image2D, moving: &Image2D) -> Result<Registration> {
        match self {
            Registrar::MovingMesh(cfg) => register(fixed, moving, cfg),
            Registrar::Demons { iters, sigma } => {
                check_dims(fixed, moving)?;
                let field = register_demons(fixed, moving, *iters, *sigma);
                Ok(Registration {
                    field,
                    converged: true,
                    history: Vec::new(),
                })
            }
        }
    }
}

fn check_dims(fixed: &Image2D, moving: &Image2D) -> Result<()> {
    if fixed.dims() != moving.dims() {
        return Err(Error::arg(
            "same-dims",
            format!("fixed {:?} vs moving {:?}", fixed.dims(), moving.dims()),
        ));
    }
    if fixed.width < 2 || fixed.height < 2 {
        return Err(Error::arg("dims>=2", format!("{:?}", fixed.dims())));
    }
    Ok(())
}

const MIN_LEVEL_SIZE: usize = 8;

/// Image pyramid, finest first.
fn pyramid(img: &Image2D, levels: usize) -> Vec<Image2D> {
    let mut out = alloc::vec![img.clone()];
    while out.len() < levels {
        let last = out.last().unwrap();
        if (last.width - 1) / 2 + 1 < MIN_LEVEL_SIZE || (last.height - 1) / 2 + 1 < MIN_LEVEL_SIZE {
            break;
        }
        let r = last.reduce();
        out.push(r);
    }
    out
}

/// Largest parameter change tried in a single step.
const MAX_STEP: f64 = 0.5;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn smooth(v: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    Image2D {
        width: w,
        height: h,
        data: v.to_vec(),
    }
    .gaussian(sigma)
    .data
}

fn resize(v: &[f64], w: usize, h: usize, nw: usize, nh: usize) -> Vec<f64> {
    Image2D {
        width: w,
        height: h,
        data: v.to_vec(),
    }
    .resize(nw, nh)
    .data
}

/// Diffeomorphic moving-mesh registration of `moving` onto `fixed`.
///
/// Gradient descent on `(mu, gamma)` over a coarse-to-fine pyramid, with a
/// backtracking line search that only accepts steps which lower the objective
/// and keep every interior Jacobian positive.
pub fn register(fixed: &Image2D, moving: &Image2D, cfg: &RegistrationConfig) -> Result<Registration> {
    check_dims(fixed, moving)?;
    cfg.validate()?;
    let fp = pyramid(fixed, cfg.pyramid_levels);
    let mp = pyramid(moving, cfg.pyramid_levels);
    let (lo, hi) = cfg.mu_bounds;

    let cs = cfg.control_spacing;
    let control = (
        (fixed.width - 1).div_ceil(cs) + 1,
        (fixed.height - 1).div_ceil(cs) + 1,
    );
    let mut carried: Option<(MeshParams, (usize, usize))> = None;
    let mut history = Vec::with_capacity(fp.len());
    let mut converged = true;

    for level in (0..fp.len()).rev() {
        let obj = MovingMeshObjective::new(&fp[level], &mp[level], control, cfg.ode_steps, cfg.similarity);
        let (w, h) = obj.control_dims();
        let mut params = match carried.take() {
            None => MeshParams::identity(w * h),
            Some((p, dims)) if dims == (w, h) => p,
            Some((p, (pw, ph))) => {
                let mut mu = resize(&p.mu, pw, ph, w, h);
                project_monitor(&mut mu, lo, hi);
                MeshParams {
                    mu,
                    gamma: resize(&p.gamma, pw, ph, w, h),
                }
            }
        };
        // a mesh that was untangled on the coarser image can still fold on
        // this pixel grid; pull it back towards the identity until it does not
        let mut halvings = 0;
        while !(obj.field(&params).min_jacobian() > 0.0) {
            if halvings == 10 {
                params = MeshParams::identity(w * h);
                break;
            }
            params.mu.iter_mut().for_each(|v| *v = 1.0 + 0.5 * (*v - 1.0));
            params.gamma.iter_mut().for_each(|v| *v *= 0.5);
            halvings += 1;
        }
        // gradient smoothing in control cells
        let sigma = cfg.smoothing_sigma * (w - 1) as f64 / (fixed.width - 1) as f64;
        let m = w * h;
        let precondition = |g: &MeshParams| -> Vec<f64> {
            let mut out = smooth(&g.mu, w, h, sigma);
            // steps must keep mean(mu) = 1
            let mean = out.iter().sum::<f64>() / m as f64;
            out.iter_mut().for_each(|v| *v -= mean);
            out.extend(smooth(&g.gamma, w, h, sigma));
            out
        };
        let (mut j, grad) = obj.value_and_gradient(&params);
        let mut g = precondition(&grad);
        let mut level_hist = alloc::vec![j];
        let mut alpha = cfg.initial_step;
        let mut level_converged = false;

        for _ in 0..cfg.max_iters_per_level {
            let gmax = max_abs(&g);
            if j <= 0.0 || !(gmax > 0.0) || !gmax.is_finite() {
                level_converged = true;
                break;
            }
            let d: Vec<f64> = g.iter().map(|v| -v * alpha / gmax).collect();
            let mut t = 1.0;
            let mut accepted = None;
            while t * max_abs(&d) >= 1e-7 {
                let mut trial = MeshParams {
                    mu: (0..m).map(|k| params.mu[k] + t * d[k]).collect(),
                    gamma: (0..m)
                        .map(|k| (params.gamma[k] + t * d[m + k]).clamp(-cfg.gamma_bound, cfg.gamma_bound))
                        .collect(),
                };
                project_monitor(&mut trial.mu, lo, hi);
                let (jt, fld) = obj.value_and_field(&trial);
                if jt < j && fld.min_jacobian() > 0.0 {
                    accepted = Some((trial, jt));
                    break;
                }
                t *= 0.5;
            }
            let Some((trial, jt)) = accepted else {
                level_converged = true;
                break;
            };
            alpha = (alpha * t * 1.5).min(MAX_STEP);
            let rel = (j - jt) / j;
            params = trial;
            j = jt;
            level_hist.push(j);
            if rel < cfg.step_tol {
                level_converged = true;
                break;
            }
            g = precondition(&obj.value_and_gradient(&params).1);
        }
        converged &= level_converged;
        history.push(level_hist);

        if level == 0 {
            let field = obj.field(&params);
            field.check_diffeomorphic()?;
            return Ok(Registration {
                field,
                converged,
                history,
            });
        }
        carried = Some((params, (w, h)));
    }
    unreachable!("pyramid has at least one level")
}
