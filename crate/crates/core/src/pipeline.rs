//! Spatial (ED/ES) and temporal (full-cycle) contour propagation.
//!
//! All registrations run on angular slices restricted to one window that is
//! shared by every angle, so pixel coordinates mean the same thing on every
//! plane: `x` along the long axis, `y` across it.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std is in the crate graph
use num_traits::Float;

use crate::annotation::StudyAnnotation;
use crate::contour::{orient_plus_side_first, resample_open, ContourSet3D, Phase, CONTOUR_POINTS};
use crate::error::{Error, Result};
use crate::geom::{Mat3, Point2, Vec3};
use crate::image::Image2D;
use crate::mesh::{mesh_volume, SurfaceMesh};
use crate::meshkit::{build_mesh, extract_subset};
use crate::regengine::{warp_points, Registrar};
use crate::slicer::{angle_count, extract_slice, AxisFrame, SlicePlane};
use crate::volume::{Volume3D, Volume4D};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub theta_d: f64,
    /// Angular spacing of the subset carried through the cycle; defaults to
    /// `theta_d`.
    pub temporal_theta_d: Option<f64>,
    pub registrar: Registrar,
    /// Slice pixel size; defaults to the smallest voxel spacing.
    pub pixel_mm: Option<f64>,
    /// Slack around the seed contours when sizing the slice window.
    pub margin_mm: f64,
    pub contour_points: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            theta_d: 5.0,
            temporal_theta_d: None,
            registrar: Registrar::default(),
            pixel_mm: None,
            margin_mm: 10.0,
            contour_points: CONTOUR_POINTS,
        }
    }
}

impl PipelineConfig {
    pub fn with_theta_d(theta_d: f64) -> Self {
        Self {
            theta_d,
            ..Self::default()
        }
    }
}

/// Counters gathered over every registration of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub registrations: usize,
    /// Smallest interior Jacobian determinant over all fields.
    pub min_jacobian: f64,
    pub unconverged: usize,
    /// Warped points that left the slice window and were clamped.
    pub clamped_points: usize,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            registrations: 0,
            min_jacobian: f64::INFINITY,
            unconverged: 0,
            clamped_points: 0,
        }
    }
}

impl Diagnostics {
    pub fn merge(&mut self, o: &Diagnostics) {
        self.registrations += o.registrations;
        self.min_jacobian = self.min_jacobian.min(o.min_jacobian);
        self.unconverged += o.unconverged;
        self.clamped_points += o.clamped_points;
    }
}

/// Pixel window shared by every angular slice of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceWindow {
    pub pixel_mm: f64,
    pub width: usize,
    pub height: usize,
    /// Pixel coordinates of the slicing origin.
    pub origin_px: Point2,
}

/// Smallest `4m + 1` not below `n`, so three pyramid levels nest exactly.
fn pyramid_size(n: usize) -> usize {
    (n.max(9) - 1).div_ceil(4) * 4 + 1
}

impl SliceWindow {
    /// Window covering every point of `contours` (in-plane coordinates on any
    /// angle about `axis`) plus `margin` mm.
    pub fn around<'a>(
        axis: &AxisFrame,
        contours: impl IntoIterator<Item = &'a [Vec3]>,
        pixel_mm: f64,
        margin: f64,
    ) -> Self {
        let (mut lo, mut hi, mut r) = (f64::INFINITY, -f64::INFINITY, 0.0f64);
        for c in contours {
            for &p in c {
                let d = p - axis.origin;
                let s = d.dot(axis.v_hat);
                lo = lo.min(s);
                hi = hi.max(s);
                r = r.max((d - axis.v_hat * s).norm());
            }
        }
        // v_hat runs base -> apex, and so does the slice x axis
        let (lo, hi, r) = (lo - margin, hi + margin, r + margin);
        let width = pyramid_size(((hi - lo) / pixel_mm).ceil() as usize + 1);
        let half = pyramid_size(2 * (r / pixel_mm).ceil() as usize + 1);
        let extra = (width as f64 - 1.0) * pixel_mm - (hi - lo);
        Self {
            pixel_mm,
            width,
            height: half,
            origin_px: [(-lo + 0.5 * extra) / pixel_mm, (half - 1) as f64 / 2.0],
        }
    }

    pub fn plane(&self, axis: &AxisFrame, angle_deg: f64) -> SlicePlane {
        SlicePlane::at_angle(axis, angle_deg, self.pixel_mm, (self.width, self.height), self.origin_px)
    }
}

fn slice(vol: &Volume3D, plane: &SlicePlane) -> Image2D {
    extract_slice(vol, plane, 0).pixels
}

/// Registers `fixed` onto `moving` and carries `pts` across.
fn carry(
    fixed: &Image2D,
    moving: &Image2D,
    pts: &[Point2],
    cfg: &PipelineConfig,
    diag: &mut Diagnostics,
    what: impl Fn() -> alloc::string::String,
) -> Result<Vec<Point2>> {
    let reg = cfg.registrar.register(fixed, moving).map_err(|e| match e {
        Error::Degenerate { rule, context } => Error::Degenerate {
            rule,
            context: format!("{}: {}", what(), context),
        },
        other => other,
    })?;
    diag.registrations += 1;
    diag.min_jacobian = diag.min_jacobian.min(reg.field.min_jacobian());
    diag.unconverged += usize::from(!reg.converged);
    let w = warp_points(pts, &reg.field);
    diag.clamped_points += w.clamped;
    Ok(resample_open(&w.points, cfg.contour_points))
}

/// Seed contour in pixel coordinates of `plane`, checked for planarity,
/// oriented `+across` first and resampled to the working point count.
fn seed_pixels(seed: &[Vec3], plane: &SlicePlane, k: usize, label: f64) -> Result<Vec<Point2>> {
    let tol = crate::annotation::PLANARITY_TOL_MM;
    let mut px = Vec::with_capacity(seed.len());
    for &p in seed {
        let (q, off) = plane.project(p);
        if !(off.abs() <= tol) {
            return Err(Error::annotation(
                "seeds-on-plane",
                format!("seed {} deg is {:.3e} mm off its plane", label, off),
            ));
        }
        px.push(q);
    }
    if px.len() < 2 {
        return Err(Error::annotation("points>=8", format!("seed {} deg has {} points", label, px.len())));
    }
    orient_plus_side_first(&mut px);
    Ok(if px.len() == k { px } else { resample_open(&px, k) })
}

/// Lifts pixel points of `plane` to millimetres, as the contour of the
/// canonical angle in `[0, 180)`: a plane at `a < 0` is the plane at
/// `a + 180` seen from behind, so its contour runs the other way.
fn canonical(pts: &[Point2], plane: &SlicePlane, angle: f64) -> (f64, Vec<Vec3>) {
    let mut out: Vec<Vec3> = pts.iter().map(|&p| plane.lift(p)).collect();
    if angle < 0.0 {
        out.reverse();
        (angle + 180.0, out)
    } else if angle >= 180.0 {
        out.reverse();
        (angle - 180.0, out)
    } else {
        (angle, out)
    }
}

/// 3D segmentation of one frame from the two seed contours.
///
/// Every grid angle is reached by chaining registrations between adjacent
/// slices from the nearer seed: `(-45, 45]` from `0`, the rest from `90`.
pub fn segment_frame_3d(
    vol: &Volume3D,
    axis: &AxisFrame,
    seed0: &[Vec3],
    seed90: &[Vec3],
    cfg: &PipelineConfig,
    diag: &mut Diagnostics,
) -> Result<ContourSet3D> {
    let theta_d = cfg.theta_d;
    angle_count(theta_d, 180.0)?;
    let steps = angle_count(theta_d, 90.0)?;
    let k = cfg.contour_points;
    if k < 4 || k % 2 == 1 {
        return Err(Error::arg("even-K", format!("contour_points = {}", k)));
    }
    let pixel = cfg.pixel_mm.unwrap_or_else(|| vol.grid().min_spacing());
    let win = SliceWindow::around(axis, [seed0, seed90], pixel, cfg.margin_mm);

    let mut set = ContourSet3D::new(0);
    for (seed, base) in [(seed0, 0.0), (seed90, 90.0)] {
        let plane0 = win.plane(axis, base);
        let start = seed_pixels(seed, &plane0, k, base)?;
        if seed.len() == k {
            let mut c = seed.to_vec();
            if plane0.project(c[0]).0 != start[0] {
                c.reverse();
            }
            set.insert(base, c);
        } else {
            let (a, c) = canonical(&start, &plane0, base);
            set.insert(a, c);
        }
        if steps < 2 {
            continue;
        }
        let first = slice(vol, &plane0);
        // upward arc includes +45, downward arc stops short of -45
        let up = steps / 2;
        let down = (steps - 1) / 2;
        for (dir, n) in [(1.0, up), (-1.0, down)] {
            let mut pts = start.clone();
            let mut fixed = first.clone();
            for i in 1..=n {
                let angle = base + dir * theta_d * i as f64;
                let plane = win.plane(axis, angle);
                let moving = slice(vol, &plane);
                pts = carry(&fixed, &moving, &pts, cfg, diag, || {
                    format!("spatial step to {} deg", angle)
                })?;
                let (a, c) = canonical(&pts, &plane, angle);
                set.insert(a, c);
                fixed = moving;
            }
        }
    }
    Ok(set)
}

/// Weight of the ED-anchored candidate at frame `t` of `frames`: 1 at ED,
/// 0 at ES, linear in frame distance along each cycle segment.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalWeights {
    pub weights: Vec<f64>,
}

impl TemporalWeights {
    pub fn linear(frames: usize, ed: usize, es: usize) -> Self {
        let weights = (0..frames)
            .map(|t| {
                let from_ed = (t + frames - ed) % frames;
                let ed_to_es = (es + frames - ed) % frames;
                if from_ed <= ed_to_es {
                    // systole: ED -> ES
                    1.0 - from_ed as f64 / ed_to_es as f64
                } else {
                    // diastole: ES -> ED
                    let seg = frames - ed_to_es;
                    (from_ed - ed_to_es) as f64 / seg as f64
                }
            })
            .collect();
        Self { weights }
    }
}

/// Propagates the ED and ES contour sets around the cycle and blends them.
///
/// For every angle the slices of consecutive frames are registered in both
/// directions. Each anchor reaches a frame along the cycle segment that
/// contains it; the two candidates are blended point-wise by
/// [`TemporalWeights`]. ED and ES frames return their input sets unchanged.
pub fn segment_cycle_4d(
    vol: &Volume4D,
    axis: &AxisFrame,
    ed_set: &ContourSet3D,
    es_set: &ContourSet3D,
    cfg: &PipelineConfig,
    diag: &mut Diagnostics,
) -> Result<Vec<ContourSet3D>> {
    let f = vol.frame_count();
    let (ed, es) = (vol.ed_index(), vol.es_index());
    if ed_set.angles_deg != es_set.angles_deg {
        return Err(Error::arg("same-angles", String::from("ED and ES sets differ in angles")));
    }
    let k = ed_set.points_per_contour().unwrap_or(0);
    if k < 2 || es_set.points_per_contour() != Some(k) {
        return Err(Error::arg("same-K", String::from("ED and ES sets differ in point count")));
    }
    let anchored = |t: usize| -> Option<ContourSet3D> {
        let src = if t == ed {
            ed_set
        } else if t == es {
            es_set
        } else {
            return None;
        };
        let mut s = src.clone();
        s.frame_index = t;
        Some(s)
    };
    if f < 3 {
        if f == 2 && ed != es {
            return Ok((0..f).map(|t| anchored(t).unwrap()).collect());
        }
        return Err(Error::arg("frames>=3", format!("{} frames", f)));
    }
    let weights = TemporalWeights::linear(f, ed, es);
    let pixel = cfg.pixel_mm.unwrap_or_else(|| vol.grid().min_spacing());
    let win = SliceWindow::around(
        axis,
        ed_set.contours.iter().chain(&es_set.contours).map(|c| c.as_slice()),
        pixel,
        cfg.margin_mm,
    );
    let tcfg = PipelineConfig {
        contour_points: k,
        ..cfg.clone()
    };

    let mut out: Vec<ContourSet3D> = (0..f).map(ContourSet3D::new).collect();
    let ed_to_es = (es + f - ed) % f;
    for (ai, &angle) in ed_set.angles_deg.iter().enumerate() {
        let plane = win.plane(axis, angle);
        let slices: Vec<Image2D> = vol.frames().iter().map(|v| slice(v, &plane)).collect();
        let to_px = |c: &[Vec3]| -> Vec<Point2> { c.iter().map(|&p| plane.project(p).0).collect() };
        let ed_px = to_px(&ed_set.contours[ai]);
        let es_px = to_px(&es_set.contours[ai]);

        // candidates[t] = (from ED, from ES) in pixel coordinates
        let mut from_ed: Vec<Option<Vec<Point2>>> = alloc::vec![None; f];
        let mut from_es: Vec<Option<Vec<Point2>>> = alloc::vec![None; f];
        from_ed[ed] = Some(ed_px.clone());
        from_es[es] = Some(es_px.clone());
        // walk from `start` for `n` frames in direction `dir`
        let walk = |start: usize,
                        pts: &[Point2],
                        n: usize,
                        forward: bool,
                        sink: &mut Vec<Option<Vec<Point2>>>,
                        diag: &mut Diagnostics|
         -> Result<()> {
            let mut cur = pts.to_vec();
            let mut t = start;
            for _ in 0..n {
                let next = if forward { (t + 1) % f } else { (t + f - 1) % f };
                cur = carry(&slices[t], &slices[next], &cur, &tcfg, diag, || {
                    format!("temporal step {} -> {} at {} deg", t, next, angle)
                })?;
                sink[next] = Some(cur.clone());
                t = next;
            }
            Ok(())
        };
        // systole: ED forward, ES backward; diastole: ES forward, ED backward
        let dia = f - ed_to_es;
        walk(ed, &ed_px, ed_to_es - 1, true, &mut from_ed, diag)?;
        walk(es, &es_px, ed_to_es - 1, false, &mut from_es, diag)?;
        walk(es, &es_px, dia - 1, true, &mut from_es, diag)?;
        walk(ed, &ed_px, dia - 1, false, &mut from_ed, diag)?;

        for t in 0..f {
            if t == ed || t == es {
                continue;
            }
            let w = weights.weights[t];
            let (a, b) = (from_ed[t].as_ref().unwrap(), from_es[t].as_ref().unwrap());
            let blended: Vec<Vec3> = a
                .iter()
                .zip(b)
                .map(|(p, q)| plane.lift([w * p[0] + (1.0 - w) * q[0], w * p[1] + (1.0 - w) * q[1]]))
                .collect();
            out[t].insert(angle, blended);
        }
    }
    for (t, set) in out.iter_mut().enumerate() {
        if let Some(s) = anchored(t) {
            *set = s;
        }
    }
    Ok(out)
}

/// Elemental rotation used to perturb the user axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisRotation {
    PlusX,
    PlusY,
    PlusZ,
    MinusX,
    MinusY,
    MinusZ,
}

impl AxisRotation {
    pub const ALL: [AxisRotation; 6] = [
        AxisRotation::PlusX,
        AxisRotation::PlusY,
        AxisRotation::PlusZ,
        AxisRotation::MinusX,
        AxisRotation::MinusY,
        AxisRotation::MinusZ,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AxisRotation::PlusX => "+x",
            AxisRotation::PlusY => "+y",
            AxisRotation::PlusZ => "+z",
            AxisRotation::MinusX => "-x",
            AxisRotation::MinusY => "-y",
            AxisRotation::MinusZ => "-z",
        }
    }

    fn matrix(self, angle: f64) -> Mat3 {
        match self {
            AxisRotation::PlusX => Mat3::rot_x(angle),
            AxisRotation::PlusY => Mat3::rot_y(angle),
            AxisRotation::PlusZ => Mat3::rot_z(angle),
            AxisRotation::MinusX => Mat3::rot_x(-angle),
            AxisRotation::MinusY => Mat3::rot_y(-angle),
            AxisRotation::MinusZ => Mat3::rot_z(-angle),
        }
    }
}

/// Rotates the apex about the base point.
pub fn perturb_axis(axis: &AxisFrame, rotation: AxisRotation, angle: f64) -> Result<AxisFrame> {
    if angle == 0.0 {
        return Ok(*axis);
    }
    let apex = axis.base + rotation.matrix(angle) * (axis.apex - axis.base);
    AxisFrame::new(apex, axis.base)
}

/// Shifts every seed point by `delta` mm away from its contour centroid.
pub fn perturb_contours(annotation: &StudyAnnotation, delta: f64) -> Result<StudyAnnotation> {
    annotation.perturbed(delta)
}

/// Full output of a 4D segmentation run.
#[derive(Clone, Debug)]
pub struct Segmentation {
    pub axis: AxisFrame,
    /// Spatial results at the ED and ES frames.
    pub ed_set: ContourSet3D,
    pub es_set: ContourSet3D,
    pub ed_mesh: SurfaceMesh,
    pub es_mesh: SurfaceMesh,
    pub frames: Vec<ContourSet3D>,
    pub meshes: Vec<SurfaceMesh>,
    pub volumes_ml: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// Spatial segmentation of the ED and ES frames only.
pub fn segment_ed_es(
    vol: &Volume4D,
    annotation: &StudyAnnotation,
    cfg: &PipelineConfig,
    diag: &mut Diagnostics,
) -> Result<(ContourSet3D, ContourSet3D)> {
    let axis = annotation.axis();
    let mut sets = Vec::with_capacity(2);
    for (phase, t) in [(Phase::Ed, vol.ed_index()), (Phase::Es, vol.es_index())] {
        let mut s = segment_frame_3d(
            vol.frame(t),
            &axis,
            annotation.contour(phase, 0.0),
            annotation.contour(phase, 90.0),
            cfg,
            diag,
        )?;
        s.frame_index = t;
        sets.push(s);
    }
    let es = sets.pop().unwrap();
    Ok((sets.pop().unwrap(), es))
}

/// Spatial segmentation at ED/ES, subset extraction, then temporal
/// propagation over the whole cycle.
pub fn segment_study(vol: &Volume4D, annotation: &StudyAnnotation, cfg: &PipelineConfig) -> Result<Segmentation> {
    let mut diag = Diagnostics::default();
    let axis = annotation.axis();
    let (ed_set, es_set) = segment_ed_es(vol, annotation, cfg, &mut diag)?;
    let ed_mesh = build_mesh(&ed_set)?;
    let es_mesh = build_mesh(&es_set)?;
    let sub = cfg.temporal_theta_d.unwrap_or(cfg.theta_d);
    let mut ed_sub = extract_subset(&ed_mesh, sub)?;
    let mut es_sub = extract_subset(&es_mesh, sub)?;
    ed_sub.frame_index = vol.ed_index();
    es_sub.frame_index = vol.es_index();
    let frames = segment_cycle_4d(vol, &axis, &ed_sub, &es_sub, cfg, &mut diag)?;
    let mut meshes = Vec::with_capacity(frames.len());
    for (t, set) in frames.iter().enumerate() {
        // the anchors keep the full spatial meshes
        let m = if t == vol.ed_index() {
            ed_mesh.clone()
        } else if t == vol.es_index() {
            es_mesh.clone()
        } else {
            build_mesh(set)?
        };
        meshes.push(m);
    }
    let volumes_ml = meshes.iter().map(mesh_volume).collect::<Result<Vec<_>>>()?;
    Ok(Segmentation {
        axis,
        ed_set,
        es_set,
        ed_mesh,
        es_mesh,
        frames,
        meshes,
        volumes_ml,
        diagnostics: diag,
    })
}

use alloc::string::String;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{PhantomGeometry, PhantomSpec};

    #[test]
    fn weights_hit_anchors_and_are_monotone() {
        let w = TemporalWeights::linear(20, 0, 7).weights;
        assert_eq!(w[0], 1.0);
        assert_eq!(w[7], 0.0);
        assert!(w[..8].windows(2).all(|p| p[1] <= p[0]));
        assert!(w[7..].windows(2).all(|p| p[1] >= p[0]));
        let w = TemporalWeights::linear(10, 8, 3).weights;
        assert_eq!((w[8], w[3]), (1.0, 0.0));
        assert!((w[0] - 0.6).abs() < 1e-12);
        // equal distance from both anchors
        let w = TemporalWeights::linear(4, 0, 2).weights;
        assert_eq!((w[1], w[3]), (0.5, 0.5));
    }

    #[test]
    fn window_is_pyramid_friendly() {
        let axis = AxisFrame::new(Vec3::new(0.0, 0.0, 50.0), Vec3::ZERO).unwrap();
        let pts = [Vec3::new(20.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 50.0)];
        let w = SliceWindow::around(&axis, [&pts[..]], 1.0, 5.0);
        assert_eq!((w.width - 1) % 4, 0);
        assert_eq!((w.height - 1) % 4, 0);
        let plane = w.plane(&axis, 0.0);
        for p in pts {
            let q = plane.project(p).0;
            assert!(q[0] >= 5.0 - 1e-9 && q[0] <= w.width as f64 - 6.0 + 1e-9, "{:?}", q);
            assert!(q[1] >= 5.0 - 1e-9 && q[1] <= w.height as f64 - 6.0 + 1e-9, "{:?}", q);
        }
    }

    #[test]
    fn perturbation_chord_length() {
        let axis = AxisFrame::new(Vec3::new(40.0, 0.0, 0.0), Vec3::ZERO).unwrap();
        assert_eq!(perturb_axis(&axis, AxisRotation::PlusZ, 0.0).unwrap(), axis);
        let a = core::f64::consts::PI / 32.0;
        let p = perturb_axis(&axis, AxisRotation::PlusZ, a).unwrap();
        let moved = p.apex - axis.apex;
        assert!((moved.norm() - 40.0 * 2.0 * (a / 2.0).sin()).abs() < 1e-12);
        assert!(moved.z.abs() < 1e-12);
        assert_eq!(p.base, axis.base);
    }

    fn tiny_phantom() -> (Volume4D, StudyAnnotation) {
        let spec = PhantomSpec {
            frames: 4,
            es_frame: 2,
            spacing_mm: [2.0, 2.0, 2.0],
            wall_thickness_mm: 6.0,
            speckle_sigma: 0.0,
            ..PhantomSpec::beating()
        };
        let (vol, truth) = crate::phantom::generate(&spec).unwrap();
        (vol, truth.annotation)
    }

    #[test]
    fn ninety_degrees_returns_the_seeds() {
        let (vol, ann) = tiny_phantom();
        let cfg = PipelineConfig::with_theta_d(90.0);
        let mut d = Diagnostics::default();
        let s = segment_frame_3d(
            vol.frame(0),
            &ann.axis(),
            ann.contour(Phase::Ed, 0.0),
            ann.contour(Phase::Ed, 90.0),
            &cfg,
            &mut d,
        )
        .unwrap();
        assert_eq!(s.angles_deg, alloc::vec![0.0, 90.0]);
        assert_eq!(s.get(0.0).unwrap(), ann.contour(Phase::Ed, 0.0));
        assert_eq!(s.get(90.0).unwrap(), ann.contour(Phase::Ed, 90.0));
        assert_eq!(d.registrations, 0);
    }

    #[test]
    fn off_plane_seed_is_rejected() {
        let (vol, ann) = tiny_phantom();
        let mut bad = ann.contour(Phase::Ed, 0.0).to_vec();
        bad[5] += Vec3::new(0.3, 0.2, 0.1);
        let r = segment_frame_3d(
            vol.frame(0),
            &ann.axis(),
            &bad,
            ann.contour(Phase::Ed, 90.0),
            &PipelineConfig::default(),
            &mut Diagnostics::default(),
        );
        assert_eq!(r.unwrap_err().rule(), "seeds-on-plane");
    }

    #[test]
    fn anchors_are_bit_exact() {
        let (vol, ann) = tiny_phantom();
        let cfg = PipelineConfig::with_theta_d(45.0);
        let seg = segment_study(&vol, &ann, &cfg).unwrap();
        assert_eq!(seg.frames[0].contours, seg.ed_set.contours);
        assert_eq!(seg.frames[2].contours, seg.es_set.contours);
        assert_eq!(seg.meshes[0], seg.ed_mesh);
        assert_eq!(seg.frames.len(), 4);
        assert_eq!(seg.frames[1].len(), 4);
        assert!(seg.diagnostics.min_jacobian > 0.0);
        let g = PhantomGeometry::new(&PhantomSpec {
            frames: 4,
            es_frame: 2,
            ..PhantomSpec::beating()
        });
        assert!(seg.volumes_ml[0] > seg.volumes_ml[2], "{:?} {}", seg.volumes_ml, g.volume_ml(0));
    }

    #[test]
    fn two_frame_cycle_passes_through() {
        let (vol, ann) = tiny_phantom();
        let two = Volume4D::new(alloc::vec![vol.frame(0).clone(), vol.frame(2).clone()], 0, 1).unwrap();
        let cfg = PipelineConfig::with_theta_d(90.0);
        let (ed, es) = segment_ed_es(&two, &ann, &cfg, &mut Diagnostics::default()).unwrap();
        let out = segment_cycle_4d(&two, &ann.axis(), &ed, &es, &cfg, &mut Diagnostics::default()).unwrap();
        assert_eq!(out[0], ed);
        assert_eq!(out[1], es);
    }
}
