//! Synthetic 4D echo phantoms with closed-form ground truth.
//!
//! The cavity is the part of the ellipsoid `(x/a)^2 + (y/b)^2 + ((z-h)/c)^2
//! <= 1` with `z >= 0` in a local frame whose `z` axis runs from the basal
//! plane to the apex (`h = cut_fraction * c`). The apex stays fixed while the
//! semi-axes shrink towards end-systole, so the basal plane moves towards it.
//! The bent variant maps the straight shape through a circular bend of the
//! midline in the local `xz` plane. A wall shell of fixed thickness surrounds
//! the cavity; everything else is background.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std is in the crate graph
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::annotation::{SeedContour, StudyAnnotation};
use crate::contour::{Phase, CONTOUR_POINTS};
use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};
use crate::mesh::{MeridianLayout, SurfaceMesh};
use crate::slicer::{AxisFrame, SlicePlane};
use crate::volume::{Volume3D, Volume4D, VoxelGrid};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhantomSpec {
    pub name: String,
    pub frames: usize,
    /// ED is frame 0.
    pub es_frame: usize,
    /// Cavity semi-axes `(a, b, c)` in mm at ED and ES.
    pub ed_axes: [f64; 3],
    pub es_axes: [f64; 3],
    /// Distance from the ellipsoid centre to the basal plane, over `c`.
    pub cut_fraction: f64,
    pub wall_thickness_mm: f64,
    /// Midline curvature (1/mm); 0 is straight.
    pub bend: f64,
    pub wall_intensity: f64,
    pub cavity_intensity: f64,
    pub background_intensity: f64,
    pub speckle_sigma: f64,
    /// Reuse frame 0's speckle in every frame.
    pub frozen_speckle: bool,
    pub spacing_mm: [f64; 3],
    pub margin_mm: f64,
    /// Orientation of the local frame: rotations about x, y, z in degrees.
    pub tilt_deg: [f64; 3],
    pub rng_seed: u64,
}

impl PhantomSpec {
    /// Template shared by the suite: a beating symmetric spheroid.
    pub fn beating() -> Self {
        Self {
            name: "beating".into(),
            frames: 20,
            es_frame: 7,
            ed_axes: [20.0, 20.0, 36.0],
            es_axes: [14.5, 14.5, 31.0],
            cut_fraction: 0.5,
            wall_thickness_mm: 6.0,
            bend: 0.0,
            wall_intensity: 0.8,
            cavity_intensity: 0.08,
            background_intensity: 0.35,
            speckle_sigma: 0.3,
            frozen_speckle: false,
            spacing_mm: [0.9, 0.85, 0.8],
            margin_mm: 6.0,
            tilt_deg: [18.0, -24.0, 31.0],
            rng_seed: 20_240_611,
        }
    }

    pub fn is_static(&self) -> bool {
        self.ed_axes == self.es_axes
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |rule: &'static str, detail: String| Err(Error::arg(rule, detail));
        if self.frames < 2 {
            return bad("frames>=2", format!("{} frames", self.frames));
        }
        if self.es_frame == 0 || self.es_frame >= self.frames {
            return bad("0<es_frame<frames", format!("es_frame {} of {}", self.es_frame, self.frames));
        }
        if self.ed_axes.iter().chain(&self.es_axes).any(|&v| !(v > 0.0)) {
            return bad("axes>0", format!("{:?} / {:?}", self.ed_axes, self.es_axes));
        }
        if !(self.cut_fraction > -1.0 && self.cut_fraction < 1.0) {
            return bad("cut-inside-ellipsoid", format!("cut_fraction {}", self.cut_fraction));
        }
        if !(self.wall_intensity > self.background_intensity && self.background_intensity > self.cavity_intensity) {
            return bad("wall>background>cavity", String::from("intensities out of order"));
        }
        if [self.wall_intensity, self.cavity_intensity, self.background_intensity]
            .iter()
            .any(|v| !(0.0..=1.0).contains(v))
        {
            return bad("intensity-in-[0,1]", String::from("intensity outside [0,1]"));
        }
        if !(0.0..=1.0).contains(&self.speckle_sigma) {
            return bad("speckle-in-[0,1]", format!("speckle_sigma {}", self.speckle_sigma));
        }
        if self.spacing_mm.iter().any(|&s| !(s > 0.0)) {
            return bad("spacing>0", format!("{:?}", self.spacing_mm));
        }
        let max_sp = self.spacing_mm.iter().copied().fold(0.0, f64::max);
        if self.wall_thickness_mm < 2.0 * max_sp {
            return bad(
                "wall>=2-voxels",
                format!("wall {} mm at spacing {} mm", self.wall_thickness_mm, max_sp),
            );
        }
        let max_x = self.ed_axes[0].max(self.es_axes[0]) + self.wall_thickness_mm;
        if self.bend.abs() * max_x >= 0.5 {
            return bad("bend-radius", format!("bend {} too strong for width {}", self.bend, max_x));
        }
        let g = PhantomGeometry::new(self);
        if !self.is_static() && !(g.volume_ml(0) > g.volume_ml(self.es_frame)) {
            return bad("EDV>ESV", String::from("end-systolic volume not below end-diastolic"));
        }
        Ok(())
    }
}

/// The four suite members: static, beating, bent and low-SNR.
pub fn default_suite() -> Vec<PhantomSpec> {
    let beating = PhantomSpec::beating();
    let stat = PhantomSpec {
        name: "static".into(),
        frames: 10,
        es_frame: 5,
        es_axes: beating.ed_axes,
        frozen_speckle: true,
        rng_seed: 7,
        ..beating.clone()
    };
    let bent = PhantomSpec {
        name: "bent".into(),
        frames: 24,
        es_frame: 8,
        ed_axes: [21.0, 17.5, 36.0],
        es_axes: [15.5, 12.5, 31.0],
        bend: 1.0 / 55.0,
        rng_seed: 99,
        ..beating.clone()
    };
    let low = PhantomSpec {
        name: "low-snr".into(),
        frames: 17,
        es_frame: 6,
        speckle_sigma: 0.6,
        rng_seed: 4242,
        ..beating.clone()
    };
    alloc::vec![stat, beating, bent, low]
}

/// `n` replicates of `base` with varied size, shape, pose and speckle,
/// standing in for a patient cohort.
pub fn cohort(base: &PhantomSpec, n: usize) -> Vec<PhantomSpec> {
    (0..n)
        .map(|i| {
            let f = i as f64;
            let u = if n > 1 { f / (n - 1) as f64 } else { 0.5 };
            let scale = 0.85 + 0.3 * u;
            let aspect = 1.0 + 0.08 * (2.4 * f).sin();
            let length = 1.0 + 0.06 * (1.7 * f).cos();
            let shape = |ax: [f64; 3]| [ax[0] * scale, ax[1] * scale * aspect, ax[2] * scale * length];
            let mut tilt = base.tilt_deg;
            tilt[0] += 12.0 * (1.3 * f + 0.5).sin();
            tilt[1] += 10.0 * (0.9 * f + 1.1).cos();
            tilt[2] += 15.0 * (0.7 * f).sin();
            PhantomSpec {
                name: format!("{}-{}", base.name, i),
                ed_axes: shape(base.ed_axes),
                es_axes: shape(base.es_axes),
                // keep the bend angle over the shell width unchanged
                bend: base.bend * (base.ed_axes[0].max(base.es_axes[0]) + base.wall_thickness_mm)
                    / (scale * base.ed_axes[0].max(base.es_axes[0]) + base.wall_thickness_mm),
                tilt_deg: tilt,
                rng_seed: base.rng_seed.wrapping_add(1000 * (i as u64 + 1)),
                ..base.clone()
            }
        })
        .collect()
}

pub fn suite_spec(name: &str) -> Option<PhantomSpec> {
    default_suite().into_iter().find(|s| s.name == name)
}

/// Analytic geometry of a spec: local frame, motion and bend.
#[derive(Clone, Debug)]
pub struct PhantomGeometry {
    spec: PhantomSpec,
    rot: Mat3,
    origin: Vec3,
    z_apex: f64,
}

/// Contraction profile: 0 at ED, 1 at ES, raised-cosine in between.
fn contraction(t: usize, frames: usize, es: usize) -> f64 {
    let (t, n, e) = (t as f64, frames as f64, es as f64);
    let pi = core::f64::consts::PI;
    if t <= e {
        0.5 * (1.0 - (pi * t / e).cos())
    } else {
        0.5 * (1.0 + (pi * (t - e) / (n - e)).cos())
    }
}

impl PhantomGeometry {
    pub fn new(spec: &PhantomSpec) -> Self {
        let [ax, ay, az] = spec.tilt_deg.map(|d| d.to_radians());
        let rot = Mat3::rot_z(az) * Mat3::rot_y(ay) * Mat3::rot_x(ax);
        let z_apex = (1.0 + spec.cut_fraction) * spec.ed_axes[2];
        let mut g = Self {
            spec: spec.clone(),
            rot,
            origin: Vec3::ZERO,
            z_apex,
        };
        // place the shell inside the grid with the requested margin
        let (lo, _) = g.outer_bounds();
        g.origin = Vec3::new(spec.margin_mm, spec.margin_mm, spec.margin_mm) - lo;
        g
    }

    pub fn spec(&self) -> &PhantomSpec {
        &self.spec
    }

    pub fn axes(&self, t: usize) -> [f64; 3] {
        let s = contraction(t, self.spec.frames, self.spec.es_frame);
        let (e, d) = (self.spec.ed_axes, self.spec.es_axes);
        [0, 1, 2].map(|i| e[i] + (d[i] - e[i]) * s)
    }

    /// Local `z` of the basal plane at frame `t`.
    pub fn z_base(&self, t: usize) -> f64 {
        self.z_apex - (1.0 + self.spec.cut_fraction) * self.axes(t)[2]
    }

    fn bend_forward(&self, p: Vec3) -> Vec3 {
        let k = self.spec.bend;
        if k == 0.0 {
            return p;
        }
        let r = 1.0 / k;
        let ang = p.z * k;
        Vec3::new(r - (r - p.x) * ang.cos(), p.y, (r - p.x) * ang.sin())
    }

    fn bend_inverse(&self, q: Vec3) -> Vec3 {
        let k = self.spec.bend;
        if k == 0.0 {
            return q;
        }
        let r = 1.0 / k;
        let (u, v) = (r - q.x, q.z);
        let rho = (u * u + v * v).sqrt();
        let ang = v.atan2(u);
        Vec3::new(r - rho, q.y, ang * r)
    }

    /// Straight local coordinates -> world millimetres.
    pub fn to_world(&self, local: Vec3) -> Vec3 {
        self.origin + self.rot * self.bend_forward(local)
    }

    /// World millimetres -> straight local coordinates.
    pub fn to_local(&self, world: Vec3) -> Vec3 {
        self.bend_inverse(self.rot.transpose() * (world - self.origin))
    }

    /// `(q - 1, zeta)` for the cavity at frame `t`, with `q` the ellipsoid
    /// quadratic form grown by `grow` mm on every semi-axis, and `zeta` the
    /// height above the basal plane.
    fn level(&self, local: Vec3, t: usize, grow: f64) -> (f64, f64, Vec3) {
        let [a, b, c] = self.axes(t);
        let (a, b, c2) = (a + grow, b + grow, c + grow);
        let zb = self.z_base(t);
        let zeta = local.z - zb;
        let h = self.spec.cut_fraction * c;
        let (x, y, z) = (local.x / a, local.y / b, (zeta - h) / c2);
        let grad = Vec3::new(2.0 * x / a, 2.0 * y / b, 2.0 * z / c2);
        (x * x + y * y + z * z - 1.0, zeta, grad)
    }

    /// Approximate signed distance (mm) to the cavity at frame `t`; negative
    /// inside.
    pub fn cavity_distance(&self, world: Vec3, t: usize) -> f64 {
        let l = self.to_local(world);
        let (q, zeta, g) = self.level(l, t, 0.0);
        (q / g.norm().max(1e-12)).max(-zeta)
    }

    /// True inside the cavity at frame `t` (exact implicit test).
    pub fn in_cavity(&self, world: Vec3, t: usize) -> bool {
        let (q, zeta, _) = self.level(self.to_local(world), t, 0.0);
        q < 0.0 && zeta >= 0.0
    }

    fn tissue_distance(&self, local: Vec3, t: usize) -> f64 {
        let (q, zeta, g) = self.level(local, t, self.spec.wall_thickness_mm);
        (q / g.norm().max(1e-12)).max(-zeta)
    }

    /// Closed-form cavity volume (mL) at frame `t`. Bending preserves it:
    /// each cross-section is symmetric about the midline.
    pub fn volume_ml(&self, t: usize) -> f64 {
        let [a, b, c] = self.axes(t);
        let h = self.spec.cut_fraction * c;
        core::f64::consts::PI * a * b * ((c + h) - (h * h * h + c * c * c) / (3.0 * c * c)) / 1000.0
    }

    /// Cavity surface point at longitude `phi` and latitude `eta`
    /// (`eta = asin(-cut_fraction)` on the basal ring, `pi/2` at the apex).
    fn surface_local(&self, t: usize, phi: f64, eta: f64) -> Vec3 {
        let [a, b, c] = self.axes(t);
        let h = self.spec.cut_fraction * c;
        Vec3::new(a * eta.cos() * phi.cos(), b * eta.cos() * phi.sin(), self.z_base(t) + h + c * eta.sin())
    }

    fn outer_bounds(&self) -> (Vec3, Vec3) {
        let inf = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let (mut lo, mut hi) = (inf, -inf);
        let w = self.spec.wall_thickness_mm;
        for t in 0..self.spec.frames {
            let [a, b, c] = self.axes(t);
            let h = self.spec.cut_fraction * c;
            let eta0 = (-h / (c + w)).asin();
            for i in 0..72 {
                let phi = i as f64 / 72.0 * core::f64::consts::TAU;
                for r in 0..=36 {
                    let eta = eta0 + (core::f64::consts::FRAC_PI_2 - eta0) * r as f64 / 36.0;
                    let l = Vec3::new(
                        (a + w) * eta.cos() * phi.cos(),
                        (b + w) * eta.cos() * phi.sin(),
                        self.z_base(t) + h + (c + w) * eta.sin(),
                    );
                    let p = self.rot * self.bend_forward(l);
                    lo = lo.min(p);
                    hi = hi.max(p);
                }
            }
        }
        (lo, hi)
    }

    pub fn grid(&self) -> VoxelGrid {
        let (lo, hi) = self.outer_bounds();
        let ext = hi - lo + Vec3::new(2.0, 2.0, 2.0) * self.spec.margin_mm;
        let s = self.spec.spacing_mm;
        let dims = [
            (ext.x / s[0]).ceil() as usize + 1,
            (ext.y / s[1]).ceil() as usize + 1,
            (ext.z / s[2]).ceil() as usize + 1,
        ];
        VoxelGrid::new(dims, s).expect("positive spacing")
    }

    /// World position of the apex (fixed over the cycle).
    pub fn apex(&self) -> Vec3 {
        self.to_world(Vec3::new(0.0, 0.0, self.z_apex))
    }

    /// World position of the ED basal-plane centre.
    pub fn base(&self) -> Vec3 {
        self.to_world(Vec3::new(0.0, 0.0, 0.0))
    }

    /// Truth surface at frame `t`: `longitudes x rows` grid from the basal
    /// ring up to one apex vertex; open at the base.
    pub fn truth_mesh(&self, t: usize, longitudes: usize, rows: usize) -> SurfaceMesh {
        let eta0 = (-self.spec.cut_fraction).asin();
        let half_pi = core::f64::consts::FRAC_PI_2;
        let mut vertices = Vec::with_capacity(longitudes * rows + 1);
        for i in 0..longitudes {
            let phi = i as f64 / longitudes as f64 * core::f64::consts::TAU;
            for r in 0..rows {
                let eta = eta0 + (half_pi - eta0) * r as f64 / rows as f64;
                vertices.push(self.to_world(self.surface_local(t, phi, eta)));
            }
        }
        let apex = vertices.len();
        vertices.push(self.to_world(self.surface_local(t, 0.0, half_pi)));
        let v = |m: usize, r: usize| m * rows + r;
        let mut triangles = Vec::with_capacity(longitudes * (2 * rows - 1));
        for m in 0..longitudes {
            let n = (m + 1) % longitudes;
            for r in 0..rows - 1 {
                triangles.push([v(m, r), v(n, r), v(n, r + 1)]);
                triangles.push([v(m, r), v(n, r + 1), v(m, r + 1)]);
            }
            triangles.push([v(m, rows - 1), v(n, rows - 1), apex]);
        }
        let mut mesh = SurfaceMesh {
            vertices,
            triangles,
            layout: Some(MeridianLayout {
                num_angles: longitudes,
                points_per_meridian: rows,
            }),
        };
        if mesh.capped().map(|c| c.signed_volume_mm3()).unwrap_or(0.0) < 0.0 {
            mesh.flip_orientation();
        }
        mesh
    }

    /// Exact cross-section of the cavity wall at frame `t` on the plane at
    /// `angle_deg` about `axis`: `k` points, uniform in arc length, from the
    /// `+across` basal endpoint over the apex to the other one.
    pub fn section_contour(&self, axis: &AxisFrame, angle_deg: f64, t: usize, k: usize) -> Result<Vec<Vec3>> {
        let plane = SlicePlane::at_angle(axis, angle_deg, 1.0, (1, 1), [0.0, 0.0]);
        let (o, ex, ey) = (axis.origin, plane.axis_dir(), plane.across_dir());
        if !self.in_cavity(o, t) {
            return Err(Error::arg("origin-in-cavity", format!("slicing origin outside the cavity at frame {}", t)));
        }
        let dir = |psi: f64| ex * psi.cos() + ey * psi.sin();
        // first crossing of the ellipsoid surface along a ray from the origin
        let hit = |psi: f64| -> (Vec3, f64) {
            let d = dir(psi);
            let q = |r: f64| self.level(self.to_local(o + d * r), t, 0.0).0;
            let (mut lo, mut hi) = (0.0, 0.5);
            while q(hi) < 0.0 {
                lo = hi;
                hi += 0.5;
            }
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if q(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let p = o + d * lo;
            (p, self.level(self.to_local(p), t, 0.0).1)
        };
        // basal corners: where the wall hit reaches the basal plane
        let corner = |sign: f64| {
            let (mut wall, mut cap) = (0.0, core::f64::consts::PI);
            for _ in 0..100 {
                let mid = 0.5 * (wall + cap);
                if hit(sign * mid).1 >= 0.0 {
                    wall = mid;
                } else {
                    cap = mid;
                }
            }
            sign * wall
        };
        let (psi_plus, psi_minus) = (corner(1.0), corner(-1.0));
        const DENSE: usize = 4000;
        let mut psis = Vec::with_capacity(DENSE + 1);
        let mut arc = Vec::with_capacity(DENSE + 1);
        let mut prev = hit(psi_plus).0;
        for i in 0..=DENSE {
            let psi = psi_plus + (psi_minus - psi_plus) * i as f64 / DENSE as f64;
            let p = hit(psi).0;
            let s = arc.last().map_or(0.0, |&l: &f64| l + p.distance(prev));
            psis.push(psi);
            arc.push(s);
            prev = p;
        }
        let total = *arc.last().unwrap();
        let mut out = Vec::with_capacity(k);
        let mut j = 0;
        for i in 0..k {
            let target = total * i as f64 / (k - 1) as f64;
            while j + 2 < arc.len() && arc[j + 1] < target {
                j += 1;
            }
            let span = arc[j + 1] - arc[j];
            let f = if span > 0.0 { ((target - arc[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
            let psi = psis[j] + (psis[j + 1] - psis[j]) * f;
            out.push(hit(psi).0);
        }
        Ok(out)
    }

    /// Exact seed annotation: the ED axis and the four analytic contours.
    pub fn annotation(&self) -> Result<StudyAnnotation> {
        self.annotation_on(&AxisFrame::new(self.apex(), self.base())?)
    }

    /// Analytic seed contours traced on the planes of an arbitrary axis.
    pub fn annotation_on(&self, axis: &AxisFrame) -> Result<StudyAnnotation> {
        let axis = *axis;
        let mut contours = Vec::with_capacity(4);
        for (phase, t) in [(Phase::Ed, 0), (Phase::Es, self.spec.es_frame)] {
            for angle in [0.0, 90.0] {
                let pts = self.section_contour(&axis, angle, t, CONTOUR_POINTS)?;
                // snap onto the plane to remove rounding drift
                let plane = SlicePlane::at_angle(&axis, angle, 1.0, (1, 1), [0.0, 0.0]);
                let n = plane.normal();
                let pts = pts
                    .into_iter()
                    .map(|p| p - n * (p - axis.origin).dot(n))
                    .collect();
                contours.push(SeedContour {
                    phase,
                    angle_deg: angle,
                    points_mm: pts,
                });
            }
        }
        StudyAnnotation::new(axis.apex, axis.base, contours)
    }

    /// Noise-free intensity at a world point, frame `t`, with a linear
    /// partial-volume ramp one voxel wide.
    pub fn clean_intensity(&self, world: Vec3, t: usize, ramp: f64) -> f64 {
        let l = self.to_local(world);
        let (q, zeta, g) = self.level(l, t, 0.0);
        let d_cav = (q / g.norm().max(1e-12)).max(-zeta);
        let d_tis = self.tissue_distance(l, t);
        let frac = |d: f64| (0.5 - d / ramp).clamp(0.0, 1.0);
        let (fc, ft) = (frac(d_cav), frac(d_tis).max(frac(d_cav)));
        let s = &self.spec;
        fc * s.cavity_intensity + (ft - fc) * s.wall_intensity + (1.0 - ft) * s.background_intensity
    }
}

/// Ground truth of a generated phantom.
#[derive(Clone, Debug)]
pub struct PhantomTruth {
    pub meshes: Vec<SurfaceMesh>,
    pub volumes_ml: Vec<f64>,
    pub ef_percent: f64,
    pub annotation: StudyAnnotation,
}

pub const TRUTH_LONGITUDES: usize = 128;
pub const TRUTH_ROWS: usize = 48;

/// Rayleigh sample with unit mean.
fn rayleigh(rng: &mut ChaCha8Rng) -> f64 {
    let u = ((rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64;
    (-(4.0 / core::f64::consts::PI) * u.ln()).sqrt()
}

/// Renders one frame.
pub fn render_frame(geom: &PhantomGeometry, grid: &VoxelGrid, t: usize) -> Volume3D {
    let spec = geom.spec();
    let [nx, ny, nz] = grid.dims;
    let ramp = (spec.spacing_mm[0] + spec.spacing_mm[1] + spec.spacing_mm[2]) / 3.0;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream(if spec.frozen_speckle { 0 } else { t as u64 });
    let mut vox = Vec::with_capacity(grid.len());
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let v = geom.clean_intensity(grid.position(i, j, k), t, ramp);
                let v = if spec.speckle_sigma > 0.0 {
                    v * (1.0 + spec.speckle_sigma * (rayleigh(&mut rng) - 1.0))
                } else {
                    v
                };
                vox.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    Volume3D::new(grid.dims, grid.spacing, vox).expect("grid-sized payload")
}

/// Renders every frame and the matching analytic truth.
pub fn generate(spec: &PhantomSpec) -> Result<(Volume4D, PhantomTruth)> {
    spec.validate()?;
    let geom = PhantomGeometry::new(spec);
    let grid = geom.grid();
    let frames: Vec<Volume3D> = (0..spec.frames).map(|t| render_frame(&geom, &grid, t)).collect();
    let volume = Volume4D::new(frames, 0, spec.es_frame)?;
    let truth = truth(&geom)?;
    Ok((volume, truth))
}

/// Analytic truth only (no rendering).
pub fn truth(geom: &PhantomGeometry) -> Result<PhantomTruth> {
    let spec = geom.spec();
    let meshes = (0..spec.frames)
        .map(|t| geom.truth_mesh(t, TRUTH_LONGITUDES, TRUTH_ROWS))
        .collect();
    let volumes_ml: Vec<f64> = (0..spec.frames).map(|t| geom.volume_ml(t)).collect();
    let ef_percent = crate::evalstats::ejection_fraction(volumes_ml[0], volumes_ml[spec.es_frame])?;
    Ok(PhantomTruth {
        meshes,
        volumes_ml,
        ef_percent,
        annotation: geom.annotation()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mesh_volume;

    #[test]
    fn suite_shape() {
        let s = default_suite();
        assert_eq!(s.len(), 4);
        for spec in &s {
            spec.validate().unwrap();
            assert!((17..=39).contains(&spec.frames) || spec.name == "static");
        }
    }

    #[test]
    fn cohort_members_are_valid_and_distinct() {
        for base in default_suite().iter().skip(1).take(2) {
            let c = cohort(base, 6);
            for s in &c {
                s.validate().unwrap();
            }
            assert!(c.windows(2).all(|w| w[0] != w[1]));
        }
    }

    #[test]
    fn contraction_profile_hits_anchors() {
        assert_eq!(contraction(0, 20, 7), 0.0);
        assert!((contraction(7, 20, 7) - 1.0).abs() < 1e-15);
        for t in 0..20 {
            let s = contraction(t, 20, 7);
            assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn truth_mesh_volume_matches_closed_form() {
        for spec in default_suite() {
            let g = PhantomGeometry::new(&spec);
            for t in [0, spec.es_frame] {
                let v = mesh_volume(&g.truth_mesh(t, TRUTH_LONGITUDES, TRUTH_ROWS)).unwrap();
                let exact = g.volume_ml(t);
                assert!((v - exact).abs() / exact < 0.005, "{} t={} {} vs {}", spec.name, t, v, exact);
            }
        }
    }

    #[test]
    fn cap_formula_example() {
        // a = b = 20, c = 40, basal plane c/2 from the centre
        let spec = PhantomSpec {
            ed_axes: [20.0, 20.0, 40.0],
            es_axes: [20.0, 20.0, 40.0],
            cut_fraction: 0.5,
            ..PhantomSpec::beating()
        };
        let g = PhantomGeometry::new(&spec);
        let (c, h) = (40.0f64, 20.0f64);
        let exact = core::f64::consts::PI * 400.0 * ((c + h) - (h.powi(3) + c.powi(3)) / (3.0 * c * c)) / 1000.0;
        assert!((g.volume_ml(0) - exact).abs() / exact < 1e-12);
        let v = mesh_volume(&g.truth_mesh(0, TRUTH_LONGITUDES, TRUTH_ROWS)).unwrap();
        assert!((v - exact).abs() / exact < 0.005);
    }

    #[test]
    fn bend_round_trips() {
        let spec = &default_suite()[2];
        let g = PhantomGeometry::new(spec);
        for p in [Vec3::new(3.0, -4.0, 10.0), Vec3::new(-15.0, 2.0, 50.0)] {
            let back = g.to_local(g.to_world(p));
            assert!((back - p).norm() < 1e-9);
        }
    }

    #[test]
    fn seeds_lie_on_the_surface_and_planes() {
        for spec in default_suite() {
            let g = PhantomGeometry::new(&spec);
            let ann = g.annotation().unwrap();
            for c in ann.contours() {
                let t = if c.phase == Phase::Ed { 0 } else { spec.es_frame };
                assert_eq!(c.points_mm.len(), CONTOUR_POINTS);
                for &p in &c.points_mm {
                    let (q, zeta, _) = g.level(g.to_local(p), t, 0.0);
                    assert!(q.abs() < 1e-6 && zeta > -1e-6, "{} {} {}", spec.name, q, zeta);
                }
                // +across endpoint first
                let plane = SlicePlane::at_angle(&ann.axis(), c.angle_deg, 1.0, (1, 1), [0.0, 0.0]);
                let first = plane.project(c.points_mm[0]).0;
                let last = plane.project(*c.points_mm.last().unwrap()).0;
                assert!(first[1] > last[1]);
            }
        }
    }

    #[test]
    fn noiseless_cavity_is_exact() {
        let spec = PhantomSpec {
            speckle_sigma: 0.0,
            frames: 2,
            es_frame: 1,
            spacing_mm: [2.0, 2.0, 2.0],
            wall_thickness_mm: 6.0,
            ..PhantomSpec::beating()
        };
        let g = PhantomGeometry::new(&spec);
        let grid = g.grid();
        let f = render_frame(&g, &grid, 0);
        let centre = (g.apex() + g.base()) * 0.5;
        let [i, j, k] = [0, 1, 2].map(|d| (centre.to_array()[d] / grid.spacing[d]).round() as usize);
        assert_eq!(f.get(i, j, k), spec.cavity_intensity as f32);
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = PhantomSpec {
            frames: 3,
            es_frame: 1,
            spacing_mm: [2.0, 2.0, 2.0],
            ..PhantomSpec::beating()
        };
        let (a, _) = generate(&spec).unwrap();
        let (b, _) = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.frame(0).voxels(), a.frame(1).voxels());
    }
}
