//! Meshes from corresponded contours, and the truncated-ellipsoid baseline.
//!
//! Contour `θ` contributes two meridians: its first half (from the `+across`
//! basal endpoint towards the apex) is the meridian at `θ`, its second half
//! read backwards is the meridian at `θ + 180`. Meridians are stitched in
//! angular order and closed at the apex by a fan around one extra vertex.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std is in the crate graph
use num_traits::Float;

use crate::contour::ContourSet3D;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::{MeridianLayout, SurfaceMesh};
use crate::slicer::{AxisFrame, SlicePlane};

/// Stitches a contour set into an open (at the base) surface mesh with
/// outward normals.
pub fn build_mesh(contours: &ContourSet3D) -> Result<SurfaceMesh> {
    let n = contours.len();
    if n < 2 {
        return Err(Error::mesh("angles>=2", format!("{} contour(s)", n)));
    }
    let k = contours
        .points_per_contour()
        .ok_or_else(|| Error::mesh("same-K", "contours differ in point count"))?;
    if k < 4 || k % 2 != 0 {
        return Err(Error::mesh("even-K", format!("K = {}", k)));
    }
    let p = k / 2;
    let m = 2 * n;
    let mut vertices = Vec::with_capacity(m * p + 1);
    for c in &contours.contours {
        vertices.extend_from_slice(&c[..p]);
    }
    for c in &contours.contours {
        vertices.extend(c[p..].iter().rev());
    }
    let apex = contours
        .contours
        .iter()
        .fold(Vec3::ZERO, |s, c| s + (c[p - 1] + c[p]) * 0.5)
        / n as f64;
    let apex_index = vertices.len();
    vertices.push(apex);

    let v = |mer: usize, row: usize| mer * p + row;
    let mut triangles = Vec::with_capacity(m * (2 * (p - 1) + 1));
    for a in 0..m {
        let b = (a + 1) % m;
        for r in 0..p - 1 {
            triangles.push([v(a, r), v(b, r), v(b, r + 1)]);
            triangles.push([v(a, r), v(b, r + 1), v(a, r + 1)]);
        }
        triangles.push([v(a, p - 1), v(b, p - 1), apex_index]);
    }
    let mut mesh = SurfaceMesh {
        vertices,
        triangles,
        layout: Some(MeridianLayout {
            num_angles: m,
            points_per_meridian: p,
        }),
    };
    if mesh.capped()?.signed_volume_mm3() < 0.0 {
        mesh.flip_orientation();
    }
    Ok(mesh)
}

/// Contours at `0, θd, ..., 180 - θd` read back from a mesh built by
/// [`build_mesh`] over evenly spaced angles starting at 0.
pub fn extract_subset(mesh: &SurfaceMesh, theta_d: f64) -> Result<ContourSet3D> {
    let layout = mesh
        .layout
        .ok_or_else(|| Error::mesh("meridian-layout", "mesh has no meridian layout"))?;
    let m = layout.num_angles;
    let p = layout.points_per_meridian;
    let native = 360.0 / m as f64;
    let step = theta_d / native;
    let count = crate::slicer::angle_count(theta_d, 180.0)?;
    if (step - step.round()).abs() > 1e-9 || step.round() < 1.0 {
        return Err(Error::arg(
            "subset-divides-native",
            format!("{} deg is not a multiple of the native {} deg", theta_d, native),
        ));
    }
    let step = step.round() as usize;
    let mut out = ContourSet3D::new(0);
    for j in 0..count {
        let a = j * step;
        let b = a + m / 2;
        let mut c = Vec::with_capacity(2 * p);
        c.extend_from_slice(&mesh.vertices[a * p..(a + 1) * p]);
        c.extend(mesh.vertices[b * p..(b + 1) * p].iter().rev());
        out.insert(j as f64 * theta_d, c);
    }
    Ok(out)
}

/// Truncated ellipsoid in the axis frame.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EllipsoidModel {
    pub center: Vec3,
    pub semi_axes: [f64; 3],
    /// Rows: x (across the θ0 slice), y (across the θ90 slice), z (base to
    /// apex).
    pub orientation: [Vec3; 3],
    /// Kept region is `cut_z <= z <= c`.
    pub cut_z: f64,
}

const LONGITUDES: usize = 64;
const LATITUDES: usize = 32;

impl EllipsoidModel {
    pub fn point(&self, x: f64, y: f64, z: f64) -> Vec3 {
        let [ex, ey, ez] = self.orientation;
        self.center + ex * x + ey * y + ez * z
    }

    /// 64 x 32 tessellation of the kept region, open at the cut.
    pub fn tessellate(&self) -> SurfaceMesh {
        let [a, b, c] = self.semi_axes;
        let eta0 = (self.cut_z / c).clamp(-1.0, 1.0).asin();
        let half_pi = core::f64::consts::FRAC_PI_2;
        let mut vertices = Vec::with_capacity(LONGITUDES * LATITUDES + 1);
        for i in 0..LONGITUDES {
            let phi = i as f64 / LONGITUDES as f64 * core::f64::consts::TAU;
            for r in 0..LATITUDES {
                let eta = eta0 + (half_pi - eta0) * r as f64 / LATITUDES as f64;
                let rho = eta.cos();
                vertices.push(self.point(a * rho * phi.cos(), b * rho * phi.sin(), c * eta.sin()));
            }
        }
        let apex = vertices.len();
        vertices.push(self.point(0.0, 0.0, c));
        let p = LATITUDES;
        let v = |mer: usize, row: usize| mer * p + row;
        let mut triangles = Vec::new();
        for m in 0..LONGITUDES {
            let n = (m + 1) % LONGITUDES;
            for r in 0..p - 1 {
                triangles.push([v(m, r), v(n, r), v(n, r + 1)]);
                triangles.push([v(m, r), v(n, r + 1), v(m, r + 1)]);
            }
            triangles.push([v(m, p - 1), v(n, p - 1), apex]);
        }
        let mut mesh = SurfaceMesh {
            vertices,
            triangles,
            layout: Some(MeridianLayout {
                num_angles: LONGITUDES,
                points_per_meridian: LATITUDES,
            }),
        };
        if mesh.capped().map(|c| c.signed_volume_mm3()).unwrap_or(0.0) < 0.0 {
            mesh.flip_orientation();
        }
        mesh
    }

    /// Closed-form volume of the kept region in mL.
    pub fn volume_ml(&self) -> f64 {
        let [a, b, c] = self.semi_axes;
        let h = self.cut_z;
        core::f64::consts::PI * a * b * ((c - h) - (c * c * c - h * h * h) / (3.0 * c * c)) / 1000.0
    }
}

/// Geometric baseline from one phase's two seed contours: centred at the
/// base point, `z` along the axis, `x`/`y` semi-axes half the across-axis
/// extent of the θ0/θ90 contours, `c` the axis length, cut at the most basal
/// contour point.
pub fn fit_ellipsoid_baseline(
    axis: &AxisFrame,
    contour0: &[Vec3],
    contour90: &[Vec3],
) -> Result<(EllipsoidModel, SurfaceMesh)> {
    let p0 = SlicePlane::at_angle(axis, 0.0, 1.0, (1, 1), [0.0, 0.0]);
    let p90 = SlicePlane::at_angle(axis, 90.0, 1.0, (1, 1), [0.0, 0.0]);
    let ez = axis.v_hat;
    let ex = p0.across_dir();
    let ey = p90.across_dir();
    let extent = |pts: &[Vec3], dir: Vec3| {
        let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &q| {
            let t = (q - axis.base).dot(dir);
            (lo.min(t), hi.max(t))
        });
        hi - lo
    };
    let a = extent(contour0, ex) / 2.0;
    let b = extent(contour90, ey) / 2.0;
    let c = axis.length();
    if !(a > 1e-9 && b > 1e-9) || contour0.is_empty() || contour90.is_empty() {
        return Err(Error::annotation("contour-extent", format!("zero-width seed contour (a = {}, b = {})", a, b)));
    }
    let cut_z = contour0
        .iter()
        .chain(contour90)
        .map(|&q| (q - axis.base).dot(ez))
        .fold(f64::INFINITY, f64::min)
        .max(-c * (1.0 - 1e-9));
    let model = EllipsoidModel {
        center: axis.base,
        semi_axes: [a, b, c],
        orientation: [ex, ey, ez],
        cut_z,
    };
    Ok((model, model.tessellate()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mesh_volume;
    use core::f64::consts::PI;

    /// Contours of the half-ellipsoid (z >= 0) centred at the base.
    fn half_ellipsoid_set(axis: &AxisFrame, a: f64, c: f64, theta_d: f64, k: usize) -> ContourSet3D {
        let mut set = ContourSet3D::new(0);
        let n = (180.0 / theta_d) as usize;
        for j in 0..n {
            let th = j as f64 * theta_d;
            let plane = SlicePlane::at_angle(axis, th, 1.0, (1, 1), [0.0, 0.0]);
            let pts = (0..k)
                .map(|i| {
                    let u = PI * i as f64 / (k - 1) as f64;
                    axis.base + plane.axis_dir() * (c * u.sin()) + plane.across_dir() * (a * u.cos())
                })
                .collect();
            set.insert(th, pts);
        }
        set
    }

    fn axis() -> AxisFrame {
        AxisFrame::new(Vec3::new(10.0, 42.0, -3.0), Vec3::new(4.0, 2.0, 1.0)).unwrap()
    }

    #[test]
    fn two_contours_make_a_four_meridian_mesh() {
        let ax = axis();
        let set = half_ellipsoid_set(&ax, 10.0, ax.length(), 90.0, 16);
        let m = build_mesh(&set).unwrap();
        assert_eq!(m.layout.unwrap(), MeridianLayout { num_angles: 4, points_per_meridian: 8 });
        assert_eq!(m.vertices.len(), 33);
        assert!(m.capped().unwrap().is_watertight());
        assert!(m.capped().unwrap().signed_volume_mm3() > 0.0);
    }

    #[test]
    fn mesh_volume_approaches_half_ellipsoid() {
        let ax = axis();
        let c = ax.length();
        let set = half_ellipsoid_set(&ax, 15.0, c, 5.0, 64);
        let m = build_mesh(&set).unwrap();
        let exact = 2.0 / 3.0 * PI * 15.0 * 15.0 * c / 1000.0;
        let v = mesh_volume(&m).unwrap();
        assert!((v - exact).abs() / exact < 0.01, "{} vs {}", v, exact);
    }

    #[test]
    fn subset_round_trip_is_exact() {
        let ax = axis();
        let set = half_ellipsoid_set(&ax, 12.0, ax.length(), 5.0, 64);
        let m = build_mesh(&set).unwrap();
        let back = extract_subset(&m, 5.0).unwrap();
        assert_eq!(back.angles_deg, set.angles_deg);
        assert_eq!(back.contours, set.contours);
        assert_eq!(build_mesh(&back).unwrap().vertices, m.vertices);
        let sub = extract_subset(&m, 15.0).unwrap();
        assert_eq!(sub.len(), 12);
        assert_eq!(sub.get(45.0).unwrap(), set.get(45.0).unwrap());
        assert_eq!(extract_subset(&m, 7.0).unwrap_err().rule(), "theta_d-divides-180");
        assert_eq!(extract_subset(&m, 2.5).unwrap_err().rule(), "subset-divides-native");
    }

    #[test]
    fn mismatched_k_is_rejected() {
        let ax = axis();
        let mut set = half_ellipsoid_set(&ax, 12.0, ax.length(), 90.0, 16);
        set.contours[1].pop();
        assert_eq!(build_mesh(&set).unwrap_err().rule(), "same-K");
        set.contours.truncate(1);
        set.angles_deg.truncate(1);
        assert_eq!(build_mesh(&set).unwrap_err().rule(), "angles>=2");
    }

    #[test]
    fn ellipsoid_fit_recovers_semi_axes() {
        let ax = axis();
        let c = ax.length();
        let mut set = ContourSet3D::new(0);
        for (th, a) in [(0.0, 14.0), (90.0, 11.0)] {
            let plane = SlicePlane::at_angle(&ax, th, 1.0, (1, 1), [0.0, 0.0]);
            let pts: Vec<Vec3> = (0..64)
                .map(|i| {
                    let u = PI * i as f64 / 63.0;
                    ax.base + plane.axis_dir() * (c * u.sin()) + plane.across_dir() * (a * u.cos())
                })
                .collect();
            set.insert(th, pts);
        }
        let (model, mesh) = fit_ellipsoid_baseline(&ax, set.get(0.0).unwrap(), set.get(90.0).unwrap()).unwrap();
        assert!((model.semi_axes[0] - 14.0).abs() < 1e-6);
        assert!((model.semi_axes[1] - 11.0).abs() < 1e-6);
        assert!((model.semi_axes[2] - c).abs() < 1e-9);
        assert!(model.cut_z.abs() < 1e-9);
        let v = mesh_volume(&mesh).unwrap();
        let exact = 2.0 / 3.0 * PI * 14.0 * 11.0 * c / 1000.0;
        assert!((v - exact).abs() / exact < 0.01);
        assert!((model.volume_ml() - exact).abs() < 1e-9);
    }

    #[test]
    fn truncated_sphere_volume() {
        let ax = axis();
        let r = ax.length();
        let [e0, e1, e2] = [
            SlicePlane::at_angle(&ax, 0.0, 1.0, (1, 1), [0.0, 0.0]).across_dir(),
            SlicePlane::at_angle(&ax, 90.0, 1.0, (1, 1), [0.0, 0.0]).across_dir(),
            ax.v_hat,
        ];
        let model = EllipsoidModel {
            center: ax.base,
            semi_axes: [r, r, r],
            orientation: [e0, e1, e2],
            cut_z: 0.3 * r,
        };
        let h = r - 0.3 * r;
        let cap = PI * h * h * (3.0 * r - h) / 3.0 / 1000.0;
        let v = mesh_volume(&model.tessellate()).unwrap();
        assert!((v - cap).abs() / cap < 0.01, "{} vs {}", v, cap);
        assert!((model.volume_ml() - cap).abs() / cap < 1e-12);
    }
}
