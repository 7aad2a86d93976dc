//! Small fixed-size linear algebra used by the slicer, meshes and phantoms.

use core::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};
#[allow(unused_imports)] // unused when std is in the crate graph
use num_traits::Float;


/// A point or vector in physical space (millimetres).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Unit vector in the same direction; the zero vector is returned unchanged.
    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            self
        }
    }

    #[inline]
    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn lerp(self, o: Vec3, t: f64) -> Vec3 {
        self + (o - self) * t
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Mat3 {
        Mat3 {
            m: [r0.to_array(), r1.to_array(), r2.to_array()],
        }
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::from_array(self.m[i])
    }

    pub fn col(&self, j: usize) -> Vec3 {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.m;
        Mat3 {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn det(&self) -> f64 {
        self.row(0).dot(self.row(1).cross(self.row(2)))
    }

    /// Rotation by `angle` radians about the unit vector `axis` (Rodrigues).
    pub fn axis_angle(axis: Vec3, angle: f64) -> Mat3 {
        let k = axis.normalized();
        let (s, c) = (angle.sin(), angle.cos());
        let t = 1.0 - c;
        Mat3 {
            m: [
                [
                    c + k.x * k.x * t,
                    k.x * k.y * t - k.z * s,
                    k.x * k.z * t + k.y * s,
                ],
                [
                    k.y * k.x * t + k.z * s,
                    c + k.y * k.y * t,
                    k.y * k.z * t - k.x * s,
                ],
                [
                    k.z * k.x * t - k.y * s,
                    k.z * k.y * t + k.x * s,
                    c + k.z * k.z * t,
                ],
            ],
        }
    }

    /// Right-handed rotation about the x axis.
    pub fn rot_x(angle: f64) -> Mat3 {
        let (s, c) = (angle.sin(), angle.cos());
        Mat3 {
            m: [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        }
    }

    pub fn rot_y(angle: f64) -> Mat3 {
        let (s, c) = (angle.sin(), angle.cos());
        Mat3 {
            m: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        }
    }

    pub fn rot_z(angle: f64) -> Mat3 {
        let (s, c) = (angle.sin(), angle.cos());
        Mat3 {
            m: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Largest absolute entry of `self^T self - I`.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose() * *self;
        let mut e: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { 1.0 } else { 0.0 };
                e = e.max((p.m[i][j] - id).abs());
            }
        }
        e
    }
}

impl Mul<Vec3> for Mat3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        Mat3 { m }
    }
}

impl Index<(usize, usize)> for Mat3 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.m[i][j]
    }
}

/// Homogeneous 4x4 transform, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat4 {
    pub m: [[f64; 4]; 4],
}

impl Mat4 {
    pub const IDENTITY: Mat4 = Mat4 {
        m: [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
    };

    pub fn translation(t: Vec3) -> Mat4 {
        let mut out = Mat4::IDENTITY;
        out.m[0][3] = t.x;
        out.m[1][3] = t.y;
        out.m[2][3] = t.z;
        out
    }

    pub fn from_rotation(r: Mat3) -> Mat4 {
        let mut out = Mat4::IDENTITY;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = r.m[i][j];
            }
        }
        out
    }

    pub fn rotation_part(&self) -> Mat3 {
        let mut r = Mat3::IDENTITY;
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = self.m[i][j];
            }
        }
        r
    }

    pub fn translation_part(&self) -> Vec3 {
        Vec3::new(self.m[0][3], self.m[1][3], self.m[2][3])
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation_part() * p + self.translation_part()
    }

    /// Inverse of a rigid transform (orthonormal rotation block).
    pub fn rigid_inverse(&self) -> Mat4 {
        let rt = self.rotation_part().transpose();
        let t = -(rt * self.translation_part());
        let mut out = Mat4::from_rotation(rt);
        out.m[0][3] = t.x;
        out.m[1][3] = t.y;
        out.m[2][3] = t.z;
        out
    }

    pub fn max_abs_diff(&self, o: &Mat4) -> f64 {
        let mut e: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                e = e.max((self.m[i][j] - o.m[i][j]).abs());
            }
        }
        e
    }
}

impl Mul for Mat4 {
    type Output = Mat4;
    fn mul(self, o: Mat4) -> Mat4 {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..4).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        Mat4 { m }
    }
}

/// A 2D point in slice pixel coordinates.
pub type Point2 = [f64; 2];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rodrigues_matches_elemental_rotations() {
        for &a in &[0.3, -1.1, 2.5] {
            let r1 = Mat3::axis_angle(Vec3::X, a);
            let r2 = Mat3::rot_x(a);
            assert!(Mat4::from_rotation(r1).max_abs_diff(&Mat4::from_rotation(r2)) < 1e-15);
            let r1 = Mat3::axis_angle(Vec3::Z, a);
            assert!(
                Mat4::from_rotation(r1).max_abs_diff(&Mat4::from_rotation(Mat3::rot_z(a))) < 1e-15
            );
        }
    }

    #[test]
    fn rigid_inverse_roundtrip() {
        let t = Mat4::translation(Vec3::new(1.0, -2.0, 3.0))
            * Mat4::from_rotation(Mat3::axis_angle(Vec3::new(1.0, 2.0, 0.5), 0.7));
        let p = Vec3::new(0.3, 4.0, -1.0);
        let q = t.rigid_inverse().transform_point(t.transform_point(p));
        assert!(q.distance(p) < 1e-12);
    }
}
