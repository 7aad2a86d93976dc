//! Voxel volumes: one 3D frame and the time-ordered 4D sequence.
//!
//! Physical coordinates follow the voxel grid: voxel `(i, j, k)` sits at
//! `(i * sx, j * sy, k * sz)` millimetres. Storage is x-fastest, then y, then z.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Grid geometry shared by volumes and voxel masks.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VoxelGrid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::volume("dims>=2", format!("dims {:?}", dims)));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::volume("spacing>0", format!("spacing {:?}", spacing)));
        }
        Ok(Self { dims, spacing })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            i as f64 * self.spacing[0],
            j as f64 * self.spacing[1],
            k as f64 * self.spacing[2],
        )
    }

    /// Physical extent of the grid (position of the last voxel).
    pub fn extent(&self) -> Vec3 {
        self.position(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let e = self.extent();
        let mut out = [Vec3::ZERO; 8];
        for (n, c) in out.iter_mut().enumerate() {
            *c = Vec3::new(
                if n & 1 != 0 { e.x } else { 0.0 },
                if n & 2 != 0 { e.y } else { 0.0 },
                if n & 4 != 0 { e.z } else { 0.0 },
            );
        }
        out
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing[0].min(self.spacing[1]).min(self.spacing[2])
    }
}

/// One 3D frame. Intensities are normalized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3D {
    grid: VoxelGrid,
    voxels: Vec<f32>,
}

impl Volume3D {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], voxels: Vec<f32>) -> Result<Self> {
        let grid = VoxelGrid::new(dims, spacing)?;
        if voxels.len() != grid.len() {
            return Err(Error::volume(
                "payload-size",
                format!("expected {} voxels, got {}", grid.len(), voxels.len()),
            ));
        }
        if let Some(v) = voxels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::volume(
                "intensity-range",
                format!("voxel value {} outside [0,1]", v),
            ));
        }
        Ok(Self { grid, voxels })
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: f32) -> Result<Self> {
        let grid = VoxelGrid::new(dims, spacing)?;
        Self::new(dims, spacing, alloc::vec![value; grid.len()])
    }

    #[inline]
    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        self.grid.spacing
    }

    #[inline]
    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.voxels[self.grid.index(i, j, k)]
    }

    /// Trilinear interpolation at a physical point. Points outside the grid
    /// return 0.
    pub fn sample(&self, p: Vec3) -> f64 {
        let [nx, ny, nz] = self.grid.dims;
        let [sx, sy, sz] = self.grid.spacing;
        let fx = p.x / sx;
        let fy = p.y / sy;
        let fz = p.z / sz;
        const EPS: f64 = 1e-9;
        let inside = |f: f64, n: usize| f >= -EPS && f <= (n - 1) as f64 + EPS;
        if !(inside(fx, nx) && inside(fy, ny) && inside(fz, nz)) {
            return 0.0;
        }
        let split = |f: f64, n: usize| -> (usize, f64) {
            let f = f.clamp(0.0, (n - 1) as f64);
            let i0 = (libm::floor(f) as usize).min(n - 2);
            (i0, f - i0 as f64)
        };
        let (i0, tx) = split(fx, nx);
        let (j0, ty) = split(fy, ny);
        let (k0, tz) = split(fz, nz);
        let v = |i, j, k| self.get(i, j, k) as f64;
        let c00 = v(i0, j0, k0) * (1.0 - tx) + v(i0 + 1, j0, k0) * tx;
        let c10 = v(i0, j0 + 1, k0) * (1.0 - tx) + v(i0 + 1, j0 + 1, k0) * tx;
        let c01 = v(i0, j0, k0 + 1) * (1.0 - tx) + v(i0 + 1, j0, k0 + 1) * tx;
        let c11 = v(i0, j0 + 1, k0 + 1) * (1.0 - tx) + v(i0 + 1, j0 + 1, k0 + 1) * tx;
        let c0 = c00 * (1.0 - ty) + c10 * ty;
        let c1 = c01 * (1.0 - ty) + c11 * ty;
        c0 * (1.0 - tz) + c1 * tz
    }
}

/// Time-ordered stack of frames covering one cardiac cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume4D {
    frames: Vec<Volume3D>,
    ed_index: usize,
    es_index: usize,
}

impl Volume4D {
    pub fn new(frames: Vec<Volume3D>, ed_index: usize, es_index: usize) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::volume(
                "frame-count>=2",
                format!("{} frames", frames.len()),
            ));
        }
        let grid = *frames[0].grid();
        if let Some((t, f)) = frames.iter().enumerate().find(|(_, f)| *f.grid() != grid) {
            let rule = if f.dims() != grid.dims {
                "dimension-mismatch"
            } else {
                "spacing-mismatch"
            };
            return Err(Error::volume(
                rule,
                format!("frame {} grid {:?} differs from frame 0 {:?}", t, f.grid(), grid),
            ));
        }
        if ed_index >= frames.len() || es_index >= frames.len() {
            return Err(Error::volume(
                "phase-index-range",
                format!("ed {} / es {} with {} frames", ed_index, es_index, frames.len()),
            ));
        }
        if ed_index == es_index {
            return Err(Error::volume("ed!=es", format!("ed = es = {}", ed_index)));
        }
        Ok(Self {
            frames,
            ed_index,
            es_index,
        })
    }

    pub fn frames(&self) -> &[Volume3D] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &Volume3D {
        &self.frames[t]
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn ed_index(&self) -> usize {
        self.ed_index
    }

    pub fn es_index(&self) -> usize {
        self.es_index
    }

    pub fn grid(&self) -> &VoxelGrid {
        self.frames[0].grid()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_mismatched_frames() {
        let a = Volume3D::filled([4, 4, 4], [1.0; 3], 0.0).unwrap();
        let b = Volume3D::filled([4, 4, 5], [1.0; 3], 0.0).unwrap();
        let err = Volume4D::new(vec![a.clone(), b], 0, 1).unwrap_err();
        assert_eq!(err.rule(), "dimension-mismatch");
        let c = Volume3D::filled([4, 4, 4], [1.0, 1.0, 2.0], 0.0).unwrap();
        assert_eq!(Volume4D::new(vec![a, c], 0, 1).unwrap_err().rule(), "spacing-mismatch");
    }

    #[test]
    fn rejects_bad_payload_and_phases() {
        assert_eq!(
            Volume3D::new([2, 2, 2], [1.0; 3], vec![0.0; 7]).unwrap_err().rule(),
            "payload-size"
        );
        let a = Volume3D::filled([2, 2, 2], [1.0; 3], 0.0).unwrap();
        assert_eq!(
            Volume4D::new(vec![a.clone(), a.clone()], 1, 1).unwrap_err().rule(),
            "ed!=es"
        );
        assert_eq!(
            Volume4D::new(vec![a.clone()], 0, 0).unwrap_err().rule(),
            "frame-count>=2"
        );
    }

    #[test]
    fn trilinear_reproduces_linear_field() {
        let dims = [5, 6, 7];
        let sp = [0.5, 1.0, 2.0];
        let grid = VoxelGrid::new(dims, sp).unwrap();
        let f = |p: Vec3| (0.1 * p.x + 0.05 * p.y + 0.02 * p.z) as f32 / 2.0;
        let mut vox = vec![0.0f32; grid.len()];
        for k in 0..7 {
            for j in 0..6 {
                for i in 0..5 {
                    vox[grid.index(i, j, k)] = f(grid.position(i, j, k));
                }
            }
        }
        let vol = Volume3D::new(dims, sp, vox).unwrap();
        let p = Vec3::new(1.3, 2.7, 5.1);
        assert!((vol.sample(p) - f(p) as f64).abs() < 1e-6);
        assert_eq!(vol.sample(Vec3::new(-1.0, 0.0, 0.0)), 0.0);
        assert_eq!(vol.sample(Vec3::new(0.0, 0.0, 12.5)), 0.0);
    }
}
