//! User annotation: long axis plus the four seed contours.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std is in the crate graph
use num_traits::Float;

use crate::contour::Phase;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::slicer::{AxisFrame, SlicePlane};

/// Max distance of a seed point from its slice plane.
pub const PLANARITY_TOL_MM: f64 = 1e-6;
pub const MIN_CONTOUR_POINTS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeedContour {
    pub phase: Phase,
    pub angle_deg: f64,
    pub points_mm: Vec<Vec3>,
}

/// Validated annotation. Construct with [`StudyAnnotation::new`].
#[derive(Clone, Debug, PartialEq)]
pub struct StudyAnnotation {
    pub apex: Vec3,
    pub base: Vec3,
    contours: Vec<SeedContour>,
}

const LABELS: [(Phase, f64); 4] = [
    (Phase::Ed, 0.0),
    (Phase::Ed, 90.0),
    (Phase::Es, 0.0),
    (Phase::Es, 90.0),
];

fn label_name(phase: Phase, angle: f64) -> alloc::string::String {
    format!("({:?},{})", phase, angle)
}

impl StudyAnnotation {
    pub fn new(apex: Vec3, base: Vec3, contours: Vec<SeedContour>) -> Result<Self> {
        let axis = AxisFrame::new(apex, base).map_err(|_| {
            Error::annotation("apex!=base", format!("apex {:?} coincides with base", apex))
        })?;
        for c in &contours {
            if c.angle_deg != 0.0 && c.angle_deg != 90.0 {
                return Err(Error::annotation(
                    "angle-label",
                    format!("angle_deg must be 0 or 90, got {}", c.angle_deg),
                ));
            }
        }
        let mut ordered = Vec::with_capacity(4);
        for (phase, angle) in LABELS {
            let mut hits = contours
                .iter()
                .filter(|c| c.phase == phase && c.angle_deg == angle);
            let c = hits.next().ok_or_else(|| {
                Error::annotation("missing-label", format!("no contour {}", label_name(phase, angle)))
            })?;
            if hits.next().is_some() {
                return Err(Error::annotation(
                    "duplicate-label",
                    format!("contour {} given twice", label_name(phase, angle)),
                ));
            }
            if c.points_mm.len() < MIN_CONTOUR_POINTS {
                return Err(Error::annotation(
                    "points>=8",
                    format!("contour {} has {} points", label_name(phase, angle), c.points_mm.len()),
                ));
            }
            if c.points_mm.iter().any(|p| !p.x.is_finite() || !p.y.is_finite() || !p.z.is_finite()) {
                return Err(Error::annotation(
                    "finite-points",
                    format!("contour {} has a non-finite point", label_name(phase, angle)),
                ));
            }
            let plane = SlicePlane::at_angle(&axis, angle, 1.0, (1, 1), [0.0, 0.0]);
            let worst = c
                .points_mm
                .iter()
                .map(|&p| plane.project(p).1.abs())
                .fold(0.0, f64::max);
            if worst > PLANARITY_TOL_MM {
                return Err(Error::annotation(
                    "planarity",
                    format!(
                        "contour {} is {:.3e} mm off its slice plane",
                        label_name(phase, angle),
                        worst
                    ),
                ));
            }
            ordered.push(c.clone());
        }
        Ok(Self {
            apex,
            base,
            contours: ordered,
        })
    }

    pub fn axis(&self) -> AxisFrame {
        AxisFrame::new(self.apex, self.base).expect("validated at construction")
    }

    /// Seed points for one label.
    pub fn contour(&self, phase: Phase, angle_deg: f64) -> &[Vec3] {
        &self
            .contours
            .iter()
            .find(|c| c.phase == phase && c.angle_deg == angle_deg)
            .expect("labels validated at construction")
            .points_mm
    }

    /// Contours in fixed label order: (ED,0), (ED,90), (ES,0), (ES,90).
    pub fn contours(&self) -> &[SeedContour] {
        &self.contours
    }

    /// Moves every contour point by `delta` mm along the direction from its
    /// contour centroid. Positive dilates, negative erodes.
    pub fn perturbed(&self, delta: f64) -> Result<Self> {
        const MIN_RADIUS: f64 = 2.0;
        if !(delta.abs() <= 5.0) {
            return Err(Error::arg("|delta|<=5mm", format!("delta = {}", delta)));
        }
        let mut out = self.clone();
        if delta == 0.0 {
            return Ok(out);
        }
        for c in &mut out.contours {
            let centre = crate::contour::centroid(&c.points_mm);
            for p in &mut c.points_mm {
                let r = *p - centre;
                let n = r.norm();
                if n + delta < MIN_RADIUS {
                    return Err(Error::arg(
                        "erosion-min-radius",
                        format!("a point would end {:.3} mm from its centroid", n + delta),
                    ));
                }
                *p = centre + r * ((n + delta) / n);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(plane: &SlicePlane, n: usize, r: f64) -> Vec<Vec3> {
        (0..n)
            .map(|i| {
                let t = i as f64 / n as f64 * core::f64::consts::TAU;
                plane.origin + plane.axis_dir() * (r * t.cos()) + plane.across_dir() * (r * t.sin())
            })
            .collect()
    }

    fn sample() -> (Vec3, Vec3, Vec<SeedContour>) {
        let apex = Vec3::new(3.0, 40.0, 5.0);
        let base = Vec3::new(-2.0, 1.0, 0.0);
        let axis = AxisFrame::new(apex, base).unwrap();
        let mut cs = Vec::new();
        for (phase, angle) in LABELS {
            let plane = SlicePlane::at_angle(&axis, angle, 1.0, (1, 1), [0.0, 0.0]);
            cs.push(SeedContour {
                phase,
                angle_deg: angle,
                points_mm: ring(&plane, 32, 10.0),
            });
        }
        (apex, base, cs)
    }

    #[test]
    fn valid_annotation_passes() {
        let (a, b, cs) = sample();
        let ann = StudyAnnotation::new(a, b, cs).unwrap();
        assert_eq!(ann.contour(Phase::Es, 90.0).len(), 32);
    }

    #[test]
    fn rules_are_named() {
        let (a, b, mut cs) = sample();
        assert_eq!(StudyAnnotation::new(a, a, cs.clone()).unwrap_err().rule(), "apex!=base");
        let last = cs.pop().unwrap();
        assert_eq!(StudyAnnotation::new(a, b, cs.clone()).unwrap_err().rule(), "missing-label");
        let mut off = last.clone();
        let axis = AxisFrame::new(a, b).unwrap();
        let n = SlicePlane::at_angle(&axis, 90.0, 1.0, (1, 1), [0.0, 0.0]).normal();
        off.points_mm[3] += n * 1e-5;
        cs.push(off);
        assert_eq!(StudyAnnotation::new(a, b, cs.clone()).unwrap_err().rule(), "planarity");
        cs.pop();
        let mut short = last.clone();
        short.points_mm.truncate(7);
        cs.push(short);
        assert_eq!(StudyAnnotation::new(a, b, cs.clone()).unwrap_err().rule(), "points>=8");
        cs.pop();
        cs.push(last.clone());
        cs.push(last);
        assert_eq!(StudyAnnotation::new(a, b, cs).unwrap_err().rule(), "duplicate-label");
    }

    #[test]
    fn dilation_of_a_circle() {
        let (a, b, cs) = sample();
        let ann = StudyAnnotation::new(a, b, cs).unwrap();
        assert_eq!(ann.perturbed(0.0).unwrap(), ann);
        let d = ann.perturbed(1.0).unwrap();
        let pts = d.contour(Phase::Ed, 0.0);
        let c = crate::contour::centroid(pts);
        for p in pts {
            assert!((p.distance(c) - 11.0).abs() < 1e-9);
        }
        assert_eq!(ann.perturbed(-8.5).unwrap_err().rule(), "|delta|<=5mm");
        let tiny = ann.perturbed(-4.0).unwrap();
        assert_eq!(tiny.perturbed(-4.5).unwrap_err().rule(), "erosion-min-radius");
    }
}
