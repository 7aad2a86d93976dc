//! Triangle surface meshes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::{Mat4, Vec3};

/// Corresponded contour grid behind a mesh built from contours: meridian `m`
/// row `r` is vertex `m * points_per_meridian + r`. Any extra vertices (the
/// apex) follow the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeridianLayout {
    pub num_angles: usize,
    pub points_per_meridian: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub layout: Option<MeridianLayout>,
}

impl SurfaceMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let m = Self {
            vertices,
            triangles,
            layout: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::mesh(
                    "triangle-index",
                    format!("triangle {} {:?} references a vertex >= {}", i, t, n),
                ));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::mesh("triangle-index", format!("triangle {} {:?} repeats a vertex", i, t)));
            }
        }
        if let Some(l) = self.layout {
            if l.num_angles * l.points_per_meridian > n {
                return Err(Error::mesh(
                    "meridian-layout",
                    format!("{}x{} grid exceeds {} vertices", l.num_angles, l.points_per_meridian, n),
                ));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let t = self.triangles[i];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                (b - a).cross(c - a).norm() * 0.5
            })
            .sum()
    }

    /// Directed edge -> use count, keyed by the undirected edge.
    fn edge_uses(&self) -> BTreeMap<(usize, usize), (usize, Option<(usize, usize)>)> {
        let mut m: BTreeMap<(usize, usize), (usize, Option<(usize, usize)>)> = BTreeMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let e = m.entry((a.min(b), a.max(b))).or_insert((0, None));
                e.0 += 1;
                e.1 = Some((a, b));
            }
        }
        m
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        !self.triangles.is_empty() && self.edge_uses().values().all(|&(c, _)| c == 2)
    }

    /// Boundary loops as vertex cycles, each following the triangle
    /// orientation.
    pub fn boundary_loops(&self) -> Result<Vec<Vec<usize>>> {
        let uses = self.edge_uses();
        let mut next: BTreeMap<usize, usize> = BTreeMap::new();
        for &(c, dir) in uses.values() {
            match c {
                1 => {
                    let (a, b) = dir.unwrap();
                    if next.insert(a, b).is_some() {
                        return Err(Error::mesh("cyclic-basal-ring", format!("vertex {} starts two boundary edges", a)));
                    }
                }
                2 => {}
                _ => {
                    return Err(Error::mesh("manifold", format!("an edge is shared by {} triangles", c)));
                }
            }
        }
        let mut loops = Vec::new();
        while let Some((&start, _)) = next.iter().next() {
            let mut lp = Vec::new();
            let mut v = start;
            loop {
                lp.push(v);
                let Some(n) = next.remove(&v) else {
                    return Err(Error::mesh("cyclic-basal-ring", format!("boundary chain breaks at vertex {}", v)));
                };
                if n == start {
                    break;
                }
                v = n;
            }
            loops.push(lp);
        }
        Ok(loops)
    }

    /// Closes every boundary loop with a fan to its centroid.
    pub fn capped(&self) -> Result<SurfaceMesh> {
        let loops = self.boundary_loops()?;
        let mut out = self.clone();
        for lp in loops {
            if lp.len() < 3 {
                return Err(Error::mesh("cyclic-basal-ring", format!("boundary loop of {} vertices", lp.len())));
            }
            let c = lp.iter().fold(Vec3::ZERO, |s, &v| s + self.vertices[v]) / lp.len() as f64;
            let ci = out.vertices.len();
            out.vertices.push(c);
            for k in 0..lp.len() {
                let (a, b) = (lp[k], lp[(k + 1) % lp.len()]);
                out.triangles.push([b, a, ci]);
            }
        }
        Ok(out)
    }

    /// Divergence-theorem volume of the triangles as given (mm^3).
    pub fn signed_volume_mm3(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                a.dot(b.cross(c))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn flip_orientation(&mut self) {
        for t in &mut self.triangles {
            t.swap(1, 2);
        }
    }

    pub fn transformed(&self, m: &Mat4) -> SurfaceMesh {
        SurfaceMesh {
            vertices: self.vertices.iter().map(|&v| m.transform_point(v)).collect(),
            triangles: self.triangles.clone(),
            layout: self.layout,
        }
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let inf = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        self.vertices
            .iter()
            .fold((inf, -inf), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Enclosed volume in mL after basal capping; always positive.
pub fn mesh_volume(mesh: &SurfaceMesh) -> Result<f64> {
    mesh.validate()?;
    if mesh.is_empty() {
        return Err(Error::mesh("non-empty", "mesh has no triangles"));
    }
    let closed = mesh.capped()?;
    Ok(closed.signed_volume_mm3().abs() / 1000.0)
}

/// Axis-aligned box as 12 outward-facing triangles.
pub fn cube(lo: Vec3, hi: Vec3) -> SurfaceMesh {
    let v = |i: usize| {
        Vec3::new(
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        )
    };
    let vertices = (0..8).map(v).collect();
    let triangles = alloc::vec![
        [0, 2, 1], [1, 2, 3], // z = lo
        [4, 5, 6], [5, 7, 6], // z = hi
        [0, 1, 4], [1, 5, 4], // y = lo
        [2, 6, 3], [3, 6, 7], // y = hi
        [0, 4, 2], [2, 4, 6], // x = lo
        [1, 3, 5], [3, 7, 5], // x = hi
    ];
    SurfaceMesh {
        vertices,
        triangles,
        layout: None,
    }
}

/// Icosphere: an icosahedron subdivided `level` times and pushed onto the
/// sphere.
pub fn icosphere(center: Vec3, radius: f64, level: usize) -> SurfaceMesh {
    let t = (1.0 + libm::sqrt(5.0)) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
    .collect();
    let mut tris: Vec<[usize; 3]> = alloc::vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalized());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for &[a, b, c] in &tris {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    SurfaceMesh {
        vertices: verts.into_iter().map(|v| center + v * radius).collect(),
        triangles: tris,
        layout: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Mat3;

    #[test]
    fn unit_cube_volume() {
        let c = cube(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0));
        assert!(c.is_watertight());
        assert!((c.signed_volume_mm3() - 1.0).abs() < 1e-12);
        assert!((mesh_volume(&c).unwrap() - 0.001).abs() < 1e-15);
    }

    #[test]
    fn icosphere_volume_and_orientation() {
        let s = icosphere(Vec3::new(1.0, 2.0, 3.0), 10.0, 4);
        assert!(s.is_watertight());
        let exact = 4.0 / 3.0 * core::f64::consts::PI * 1000.0;
        let v = s.signed_volume_mm3();
        assert!(v > 0.0);
        assert!((v - exact).abs() / exact < 0.005);
    }

    #[test]
    fn open_box_is_capped() {
        let mut c = cube(Vec3::ZERO, Vec3::new(2.0, 3.0, 4.0));
        c.triangles.drain(2..4);
        assert!(!c.is_watertight());
        assert_eq!(c.boundary_loops().unwrap().len(), 1);
        assert!(c.capped().unwrap().is_watertight());
        assert!((mesh_volume(&c).unwrap() - 0.024).abs() < 1e-15);
        let bowtie = SurfaceMesh::new(alloc::vec![Vec3::X; 5], alloc::vec![[0, 1, 2], [0, 3, 4]]).unwrap();
        assert_eq!(mesh_volume(&bowtie).unwrap_err().rule(), "cyclic-basal-ring");
    }

    #[test]
    fn volume_is_rigid_invariant() {
        let s = icosphere(Vec3::ZERO, 7.0, 2);
        let m = Mat4::translation(Vec3::new(3.0, -4.0, 9.0)) * Mat4::from_rotation(Mat3::axis_angle(Vec3::new(1.0, 2.0, 0.5), 0.7));
        let a = mesh_volume(&s).unwrap();
        let b = mesh_volume(&s.transformed(&m)).unwrap();
        assert!((a - b).abs() / a < 1e-9);
    }

    #[test]
    fn bad_index_is_rejected() {
        let e = SurfaceMesh::new(alloc::vec![Vec3::ZERO; 3], alloc::vec![[0, 1, 3]]).unwrap_err();
        assert_eq!(e.rule(), "triangle-index");
    }
}
