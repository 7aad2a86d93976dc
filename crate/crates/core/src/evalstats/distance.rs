//! Point-to-surface distances, mean absolute distance and Hausdorff distance.

use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std is in the crate graph
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::SurfaceMesh;

/// Closest point to `p` on triangle `abc`.
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        let inf = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        Self { lo: inf, hi: -inf }
    }

    fn grow(&mut self, p: Vec3) {
        self.lo = self.lo.min(p);
        self.hi = self.hi.max(p);
    }

    fn dist_sq(&self, p: Vec3) -> f64 {
        let d = |v: f64, lo: f64, hi: f64| {
            if v < lo {
                lo - v
            } else if v > hi {
                v - hi
            } else {
                0.0
            }
        };
        let (x, y, z) = (d(p.x, self.lo.x, self.hi.x), d(p.y, self.lo.y, self.hi.y), d(p.z, self.lo.z, self.hi.z));
        x * x + y * y + z * z
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bb: Aabb, start: usize, end: usize },
    Inner { bb: Aabb, left: usize, right: usize },
}

impl Node {
    fn bb(&self) -> &Aabb {
        match self {
            Node::Leaf { bb, .. } | Node::Inner { bb, .. } => bb,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Bounding-volume hierarchy over the triangles of a mesh for closest-point
/// queries.
#[derive(Clone, Debug)]
pub struct TriangleBvh {
    tris: Vec<[Vec3; 3]>,
    nodes: Vec<Node>,
}

impl TriangleBvh {
    pub fn new(mesh: &SurfaceMesh) -> Result<Self> {
        if mesh.triangles.is_empty() {
            return Err(Error::mesh("non-empty", "mesh has no triangles"));
        }
        mesh.validate()?;
        let tris: Vec<[Vec3; 3]> = (0..mesh.triangles.len()).map(|i| mesh.triangle(i)).collect();
        Ok(Self::from_triangles(tris))
    }

    pub fn from_triangles(mut tris: Vec<[Vec3; 3]>) -> Self {
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        let n = tris.len();
        build(&mut tris, 0, n, &mut nodes);
        Self { tris, nodes }
    }

    /// Distance from `p` to the surface.
    pub fn distance(&self, p: Vec3) -> f64 {
        self.query(p).1
    }

    /// Closest surface point and its distance.
    pub fn closest(&self, p: Vec3) -> (Vec3, f64) {
        let (q, d, _) = self.query(p);
        (q, d)
    }

    /// Index (for [`TriangleBvh::triangle`]) of the closest triangle, and
    /// the distance to it.
    pub fn closest_triangle(&self, p: Vec3) -> (usize, f64) {
        let (_, d, t) = self.query(p);
        (t, d)
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        self.tris[i]
    }

    fn query(&self, p: Vec3) -> (Vec3, f64, usize) {
        let mut best = f64::INFINITY;
        let mut best_q = p;
        let mut best_t = 0;
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if node.bb().dist_sq(p) >= best {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for (k, t) in self.tris[start..end].iter().enumerate() {
                        let q = closest_point_on_triangle(p, t[0], t[1], t[2]);
                        let d = (q - p).norm_sq();
                        if d < best {
                            best = d;
                            best_q = q;
                            best_t = start + k;
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let (dl, dr) = (self.nodes[left].bb().dist_sq(p), self.nodes[right].bb().dist_sq(p));
                    // visit the nearer child first
                    if dl < dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        (best_q, best.sqrt(), best_t)
    }
}

fn build(tris: &mut [[Vec3; 3]], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let mut bb = Aabb::empty();
    let mut cb = Aabb::empty();
    for t in &tris[start..end] {
        for &v in t {
            bb.grow(v);
        }
        cb.grow((t[0] + t[1] + t[2]) / 3.0);
    }
    let idx = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bb, start, end });
        return idx;
    }
    nodes.push(Node::Leaf { bb, start, end });
    let ext = cb.hi - cb.lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let key = |t: &[Vec3; 3]| (t[0].to_array()[axis] + t[1].to_array()[axis] + t[2].to_array()[axis]) / 3.0;
    let mid = (start + end) / 2;
    tris[start..end].select_nth_unstable_by(mid - start, |a, b| key(a).total_cmp(&key(b)));
    let left = build(tris, start, mid, nodes);
    let right = build(tris, mid, end, nodes);
    nodes[idx] = Node::Inner { bb, left, right };
    idx
}

/// Subdivisions per triangle edge for surface sampling (16 samples per
/// triangle).
const SAMPLE_DIVS: usize = 4;

/// Area-weighted samples: centroids of the `SAMPLE_DIVS^2` sub-triangles of
/// each triangle.
pub fn surface_samples(mesh: &SurfaceMesh) -> Vec<(Vec3, f64)> {
    let n = SAMPLE_DIVS;
    let inv = 1.0 / n as f64;
    let mut out = Vec::with_capacity(mesh.triangles.len() * n * n);
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(t);
        let w = (b - a).cross(c - a).norm() * 0.5 * inv * inv;
        let at = |i: f64, j: f64| a + (b - a) * (i * inv) + (c - a) * (j * inv);
        for i in 0..n {
            for j in 0..n - i {
                let (fi, fj) = (i as f64, j as f64);
                // upright sub-triangle
                out.push((at(fi + 1.0 / 3.0, fj + 1.0 / 3.0), w));
                if i + j + 1 < n {
                    // inverted sub-triangle
                    out.push((at(fi + 2.0 / 3.0, fj + 2.0 / 3.0), w));
                }
            }
        }
    }
    out
}

/// Directed mean absolute distance from surface `s` to surface `r`
/// (area-weighted over `s`, point-to-triangle on `r`).
pub fn mean_absolute_distance(s: &SurfaceMesh, r: &SurfaceMesh) -> Result<f64> {
    let bvh = TriangleBvh::new(r)?;
    if s.triangles.is_empty() {
        return Err(Error::mesh("non-empty", "mesh has no triangles"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (p, w) in surface_samples(s) {
        num += w * bvh.distance(p);
        den += w;
    }
    if !(den > 0.0) {
        // zero-area surface: fall back to vertices
        let d = s.vertices.iter().map(|&v| bvh.distance(v)).sum::<f64>();
        return Ok(d / s.vertices.len() as f64);
    }
    Ok(num / den)
}

/// Average of both directed mean distances.
pub fn symmetric_mean_distance(s: &SurfaceMesh, r: &SurfaceMesh) -> Result<f64> {
    Ok(0.5 * (mean_absolute_distance(s, r)? + mean_absolute_distance(r, s)?))
}

/// Absolute tolerance (mm) of the branch-and-bound supremum search.
const SUP_TOL: f64 = 5e-3;
const MAX_DEPTH: usize = 10;

/// `sup_{x in s} d(x, r)`, to within `SUP_TOL`.
///
/// Triangles of `s` are refined while an upper bound on `d(., r)` over them
/// could still beat the best value found. Two bounds are used: `d` is
/// 1-Lipschitz, and the distance to any single triangle of `r` is convex, so
/// its maximum over a sub-triangle sits at a vertex.
pub fn directed_hausdorff(s: &SurfaceMesh, r: &SurfaceMesh) -> Result<f64> {
    let bvh = TriangleBvh::new(r)?;
    if s.triangles.is_empty() {
        return Err(Error::mesh("non-empty", "mesh has no triangles"));
    }
    let mut best = s.vertices.iter().map(|&v| bvh.distance(v)).fold(0.0, f64::max);
    let dist_to = |j: usize, p: Vec3| {
        let [a, b, c] = bvh.triangle(j);
        closest_point_on_triangle(p, a, b, c).distance(p)
    };
    let mut stack: Vec<([Vec3; 3], usize)> = Vec::new();
    for t in 0..s.triangles.len() {
        stack.push((s.triangle(t), 0));
        while let Some((tri, depth)) = stack.pop() {
            let [a, b, c] = tri;
            let g = (a + b + c) / 3.0;
            let (jg, dg) = bvh.closest_triangle(g);
            best = best.max(dg);
            let rad = g.distance(a).max(g.distance(b)).max(g.distance(c));
            let mut upper = dg + rad;
            if upper > best + SUP_TOL {
                let near = [jg, bvh.closest_triangle(a).0, bvh.closest_triangle(b).0, bvh.closest_triangle(c).0];
                for j in near {
                    let m = dist_to(j, a).max(dist_to(j, b)).max(dist_to(j, c));
                    upper = upper.min(m);
                }
            }
            if upper <= best + SUP_TOL || depth >= MAX_DEPTH {
                continue;
            }
            let (ab, bc, ca) = ((a + b) * 0.5, (b + c) * 0.5, (c + a) * 0.5);
            best = best.max(bvh.distance(ab)).max(bvh.distance(bc)).max(bvh.distance(ca));
            stack.push(([a, ab, ca], depth + 1));
            stack.push(([ab, b, bc], depth + 1));
            stack.push(([ca, bc, c], depth + 1));
            stack.push(([ab, bc, ca], depth + 1));
        }
    }
    Ok(best)
}

/// Symmetric Hausdorff distance between two surfaces.
pub fn hausdorff(s: &SurfaceMesh, r: &SurfaceMesh) -> Result<f64> {
    Ok(directed_hausdorff(s, r)?.max(directed_hausdorff(r, s)?))
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff_points(s: &[Vec3], r: &[Vec3]) -> Result<f64> {
    if s.is_empty() || r.is_empty() {
        return Err(Error::arg("non-empty", "empty point set"));
    }
    let directed = |a: &[Vec3], b: &[Vec3]| {
        a.iter()
            .map(|&p| b.iter().map(|&q| p.distance(q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    Ok(directed(s, r).max(directed(r, s)))
}
