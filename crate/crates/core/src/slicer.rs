//! Angular reslicing about a user-selected long axis.
//!
//! The axis runs from the base point to the apex. `T_u` rotates that
//! direction onto `+x`; a rotation about `x` by the slice angle then brings
//! slice plane `θ` onto the `xy` plane through the slicing origin. In slice
//! pixel coordinates the image x axis runs along the long axis (towards the
//! apex) and the image y axis across it.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::{Mat3, Mat4, Point2, Vec3};
use crate::image::Image2D;
use crate::volume::{Volume3D, VoxelGrid};
#[allow(unused_imports)] // unused when std is in the crate graph
use num_traits::Float;

/// Alignment of the user axis with `u = [1, 0, 0]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisFrame {
    pub apex: Vec3,
    pub base: Vec3,
    /// Unit vector base -> apex.
    pub v_hat: Vec3,
    pub u_hat: Vec3,
    /// Angle between `u_hat` and `v_hat`.
    pub phi: f64,
    /// `u_hat x v_hat` (zero when the two are (anti)parallel).
    pub r_vec: Vec3,
    /// Rotation taking `v_hat` onto `u_hat`.
    pub t_u: Mat3,
    /// Slicing origin: midpoint of apex and base.
    pub origin: Vec3,
}

impl AxisFrame {
    pub fn new(apex: Vec3, base: Vec3) -> Result<Self> {
        let d = apex - base;
        let len = d.norm();
        if !(len > 1e-9) {
            return Err(Error::arg(
                "apex!=base",
                format!("apex {:?} coincides with base", apex),
            ));
        }
        let v_hat = d / len;
        let u_hat = Vec3::X;
        let cos_phi = u_hat.dot(v_hat).clamp(-1.0, 1.0);
        let phi = cos_phi.acos();
        let r_vec = u_hat.cross(v_hat);
        let t_u = if r_vec.norm() < 1e-12 {
            if cos_phi > 0.0 {
                Mat3::IDENTITY
            } else {
                // anti-parallel: any perpendicular axis works
                Mat3::axis_angle(Vec3::Y, core::f64::consts::PI)
            }
        } else {
            // axis_angle(r, phi) carries u onto v; its transpose carries v onto u
            Mat3::axis_angle(r_vec, phi).transpose()
        };
        Ok(Self {
            apex,
            base,
            v_hat,
            u_hat,
            phi,
            r_vec,
            t_u,
            origin: (apex + base) * 0.5,
        })
    }

    pub fn length(&self) -> f64 {
        self.apex.distance(self.base)
    }
}

/// Shorthand for [`AxisFrame::new`].
pub fn build_axis_frame(apex: Vec3, base: Vec3) -> Result<AxisFrame> {
    AxisFrame::new(apex, base)
}

/// One angular slice plane together with its pixel grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlicePlane {
    pub angle_deg: f64,
    /// `T_F`: maps physical points so that the plane lands on `z = origin.z`.
    pub t_f: Mat4,
    /// Rotation block of `T_F` (`T_θ T_u`).
    rotation: Mat3,
    pub origin: Vec3,
    pub spacing: f64,
    /// `(width, height)` in pixels.
    pub extent: (usize, usize),
    /// Pixel coordinates of the slicing origin.
    pub origin_px: Point2,
}

impl SlicePlane {
    /// Plane at an arbitrary angle (degrees, any sign) about the axis.
    pub fn at_angle(axis: &AxisFrame, angle_deg: f64, spacing: f64, extent: (usize, usize), origin_px: Point2) -> Self {
        let rotation = Mat3::rot_x(angle_deg.to_radians()) * axis.t_u;
        let p = axis.origin;
        let t_f = Mat4::translation(p) * Mat4::from_rotation(rotation) * Mat4::translation(-p);
        Self {
            angle_deg,
            t_f,
            rotation,
            origin: p,
            spacing,
            extent,
            origin_px,
        }
    }

    /// Plane sized to cover the bounding sphere of `grid` around the origin.
    pub fn covering(axis: &AxisFrame, angle_deg: f64, grid: &VoxelGrid) -> Self {
        let spacing = grid.min_spacing();
        let radius = grid
            .corners()
            .iter()
            .map(|c| c.distance(axis.origin))
            .fold(0.0, f64::max);
        let half = (radius / spacing).ceil() as usize;
        let n = 2 * half + 1;
        Self::at_angle(axis, angle_deg, spacing, (n, n), [half as f64, half as f64])
    }

    /// Same geometry, restricted to a pixel window starting at `(x0, y0)`.
    pub fn window(&self, x0: isize, y0: isize, width: usize, height: usize) -> Self {
        let mut out = *self;
        out.extent = (width, height);
        out.origin_px = [self.origin_px[0] - x0 as f64, self.origin_px[1] - y0 as f64];
        out
    }

    /// Same pixel grid, different angle.
    pub fn rotated_to(&self, axis: &AxisFrame, angle_deg: f64) -> Self {
        Self::at_angle(axis, angle_deg, self.spacing, self.extent, self.origin_px)
    }

    /// Unit direction of the slice x axis (along the long axis).
    pub fn axis_dir(&self) -> Vec3 {
        self.rotation.row(0)
    }

    /// Unit direction of the slice y axis (across the long axis).
    pub fn across_dir(&self) -> Vec3 {
        self.rotation.row(1)
    }

    pub fn normal(&self) -> Vec3 {
        self.rotation.row(2)
    }

    /// Pixel coordinates -> physical millimetres.
    pub fn lift(&self, p: Point2) -> Vec3 {
        let a = (p[0] - self.origin_px[0]) * self.spacing;
        let b = (p[1] - self.origin_px[1]) * self.spacing;
        self.origin + self.axis_dir() * a + self.across_dir() * b
    }

    /// Physical point -> (pixel coordinates, signed out-of-plane distance mm).
    pub fn project(&self, x: Vec3) -> (Point2, f64) {
        let q = self.rotation * (x - self.origin);
        (
            [
                q.x / self.spacing + self.origin_px[0],
                q.y / self.spacing + self.origin_px[1],
            ],
            q.z,
        )
    }

    /// Physical position of the slice-grid node `(x, y)`.
    pub fn pixel_position(&self, x: usize, y: usize) -> Vec3 {
        self.lift([x as f64, y as f64])
    }
}

/// A resampled 2D slice.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice2D {
    pub pixels: Image2D,
    pub plane: SlicePlane,
    pub frame_index: usize,
}

/// Planes at `0, θd, 2θd, ..., 180 - θd` degrees.
pub fn make_slice_planes(axis: &AxisFrame, theta_d: f64, grid: &VoxelGrid) -> Result<Vec<SlicePlane>> {
    let count = angle_count(theta_d, 180.0)?;
    Ok((0..count)
        .map(|i| SlicePlane::covering(axis, i as f64 * theta_d, grid))
        .collect())
}

/// Number of `theta_d` steps in `span` degrees; errors unless it divides evenly.
pub fn angle_count(theta_d: f64, span: f64) -> Result<usize> {
    if !(theta_d > 0.0) || !theta_d.is_finite() {
        return Err(Error::arg("theta_d>0", format!("theta_d = {}", theta_d)));
    }
    let n = span / theta_d;
    let r = n.round();
    if (n - r).abs() > 1e-9 || r < 1.0 {
        return Err(Error::arg(
            if span == 180.0 {
                "theta_d-divides-180"
            } else {
                "theta_d-divides-90"
            },
            format!("{} does not divide {}", theta_d, span),
        ));
    }
    Ok(r as usize)
}

/// Trilinear resampling of `vol` on the plane's pixel grid (zero outside).
pub fn extract_slice(vol: &Volume3D, plane: &SlicePlane, frame_index: usize) -> Slice2D {
    let (w, h) = plane.extent;
    let ex = plane.axis_dir() * plane.spacing;
    let ey = plane.across_dir() * plane.spacing;
    let p0 = plane.lift([0.0, 0.0]);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = p0 + ey * y as f64;
        for x in 0..w {
            data.push(vol.sample(row + ex * x as f64));
        }
    }
    Slice2D {
        pixels: Image2D {
            width: w,
            height: h,
            data,
        },
        plane: *plane,
        frame_index,
    }
}

/// Maps slice pixel coordinates back to physical space.
pub fn lift_contour(points: &[Point2], plane: &SlicePlane) -> Vec<Vec3> {
    points.iter().map(|&p| plane.lift(p)).collect()
}

/// Projects physical points onto the plane's pixel grid, dropping the
/// out-of-plane component.
pub fn project_contour(points: &[Vec3], plane: &SlicePlane) -> Vec<Point2> {
    points.iter().map(|&p| plane.project(p).0).collect()
}
