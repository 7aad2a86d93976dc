//! Open endocardial contours and per-frame contour sets.
//!
//! A contour on the slice at angle `θ` is a U-shaped open curve: it starts at
//! the basal endpoint on the `+across` side of the plane, passes over the apex
//! and ends at the other basal endpoint. Point `k` on one angle corresponds to
//! point `k` on every other angle.

use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std is in the crate graph
use num_traits::Float;

use crate::geom::{Point2, Vec3};

/// Points per contour.
pub const CONTOUR_POINTS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Phase {
    #[cfg_attr(feature = "serde", serde(rename = "ED"))]
    Ed,
    #[cfg_attr(feature = "serde", serde(rename = "ES"))]
    Es,
}

/// Corresponded contours of one frame, sorted by angle in `[0, 180)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContourSet3D {
    pub frame_index: usize,
    pub angles_deg: Vec<f64>,
    pub contours: Vec<Vec<Vec3>>,
}

impl ContourSet3D {
    pub fn new(frame_index: usize) -> Self {
        Self {
            frame_index,
            angles_deg: Vec::new(),
            contours: Vec::new(),
        }
    }

    /// Inserts or replaces the contour at `angle`, keeping angles sorted.
    pub fn insert(&mut self, angle_deg: f64, contour: Vec<Vec3>) {
        match self
            .angles_deg
            .iter()
            .position(|&a| (a - angle_deg).abs() < 1e-9)
        {
            Some(i) => self.contours[i] = contour,
            None => {
                let i = self.angles_deg.partition_point(|&a| a < angle_deg);
                self.angles_deg.insert(i, angle_deg);
                self.contours.insert(i, contour);
            }
        }
    }

    pub fn get(&self, angle_deg: f64) -> Option<&[Vec3]> {
        self.angles_deg
            .iter()
            .position(|&a| (a - angle_deg).abs() < 1e-9)
            .map(|i| self.contours[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }

    /// Common point count, if all contours agree.
    pub fn points_per_contour(&self) -> Option<usize> {
        let k = self.contours.first()?.len();
        self.contours.iter().all(|c| c.len() == k).then_some(k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &[Vec3])> {
        self.angles_deg
            .iter()
            .copied()
            .zip(self.contours.iter().map(|c| c.as_slice()))
    }
}

fn cumulative_lengths<P: Copy>(pts: &[P], dist: impl Fn(P, P) -> f64) -> Vec<f64> {
    let mut s = Vec::with_capacity(pts.len());
    s.push(0.0);
    for w in pts.windows(2) {
        let last = *s.last().unwrap();
        s.push(last + dist(w[0], w[1]));
    }
    s
}

fn resample_with<P: Copy>(
    pts: &[P],
    k: usize,
    dist: impl Fn(P, P) -> f64,
    lerp: impl Fn(P, P, f64) -> P,
) -> Vec<P> {
    assert!(pts.len() >= 2 && k >= 2, "resampling needs two points");
    let s = cumulative_lengths(pts, &dist);
    let total = *s.last().unwrap();
    if !(total > 0.0) {
        return alloc::vec![pts[0]; k];
    }
    let mut out = Vec::with_capacity(k);
    out.push(pts[0]);
    let mut seg = 0;
    for i in 1..k - 1 {
        let target = total * i as f64 / (k - 1) as f64;
        while seg + 2 < s.len() && s[seg + 1] < target {
            seg += 1;
        }
        let len = s[seg + 1] - s[seg];
        let t = if len > 0.0 {
            ((target - s[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(lerp(pts[seg], pts[seg + 1], t));
    }
    out.push(*pts.last().unwrap());
    out
}

/// Uniform arc-length resampling of an open polyline to `k` points. Both
/// endpoints are kept.
pub fn resample_open(pts: &[Point2], k: usize) -> Vec<Point2> {
    resample_with(
        pts,
        k,
        |a, b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt(),
        |a, b, t| [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t],
    )
}

/// 3D counterpart of [`resample_open`].
pub fn resample_open_3d(pts: &[Vec3], k: usize) -> Vec<Vec3> {
    resample_with(pts, k, |a, b| a.distance(b), |a, b, t| a.lerp(b, t))
}

/// Polyline length.
pub fn polyline_length(pts: &[Vec3]) -> f64 {
    pts.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Reverses `pts` if needed so the first point has the larger `y` (slice
/// coordinates), i.e. starts on the `+across` side.
pub fn orient_plus_side_first(pts: &mut [Point2]) {
    if let (Some(a), Some(b)) = (pts.first(), pts.last()) {
        if b[1] > a[1] {
            pts.reverse();
        }
    }
}

/// Centroid of a point list.
pub fn centroid(pts: &[Vec3]) -> Vec3 {
    let mut c = Vec3::ZERO;
    for &p in pts {
        c += p;
    }
    c / pts.len() as f64
}
