//! Mesh voxelization and Dice overlap.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mesh::SurfaceMesh;
use crate::volume::VoxelGrid;

/// Binary mask on a voxel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelMask {
    pub grid: VoxelGrid,
    pub data: Vec<bool>,
}

impl VoxelMask {
    pub fn empty(grid: VoxelGrid) -> Self {
        let n = grid.len();
        Self { grid, data: vec![false; n] }
    }

    pub fn from_fn(grid: VoxelGrid, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let [nx, ny, nz] = grid.dims;
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { grid, data }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn volume_mm3(&self) -> f64 {
        self.count() as f64 * self.grid.voxel_volume_mm3()
    }
}

// Ray offsets (fractions of a voxel) that keep scanlines off mesh edges and
// vertices in practice.
const JITTER_Y: f64 = 1.234_567e-7;
const JITTER_Z: f64 = 2.345_678e-7;

/// Parity-count scanline fill of a mesh on `grid`. Open meshes are capped
/// first. A voxel is inside when its centre is.
pub fn voxelize(mesh: &SurfaceMesh, grid: &VoxelGrid) -> Result<VoxelMask> {
    let closed = if mesh.is_watertight() { mesh.clone() } else { mesh.capped()? };
    let [nx, ny, nz] = grid.dims;
    let [sx, sy, sz] = grid.spacing;
    let mut hits: Vec<Vec<f64>> = vec![Vec::new(); ny * nz];
    for t in 0..closed.triangles.len() {
        let [a, b, c] = closed.triangle(t);
        // work in voxel units
        let (ay, az, by, bz, cy, cz) = (a.y / sy, a.z / sz, b.y / sy, b.z / sz, c.y / sy, c.z / sz);
        let area = (by - ay) * (cz - az) - (bz - az) * (cy - ay);
        if area == 0.0 {
            continue;
        }
        let jlo = (ay.min(by).min(cy) - JITTER_Y).ceil().max(0.0) as usize;
        let jhi = (ay.max(by).max(cy) - JITTER_Y).floor();
        let klo = (az.min(bz).min(cz) - JITTER_Z).ceil().max(0.0) as usize;
        let khi = (az.max(bz).max(cz) - JITTER_Z).floor();
        if jhi < 0.0 || khi < 0.0 {
            continue;
        }
        let jhi = (jhi as usize).min(ny - 1);
        let khi = (khi as usize).min(nz - 1);
        for k in klo..=khi {
            let z = k as f64 + JITTER_Z;
            for j in jlo..=jhi {
                let y = j as f64 + JITTER_Y;
                let w0 = (by - y) * (cz - z) - (bz - z) * (cy - y);
                let w1 = (cy - y) * (az - z) - (cz - z) * (ay - y);
                let w2 = (ay - y) * (bz - z) - (az - z) * (by - y);
                let inside = (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0) || (w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0);
                if inside {
                    let x = (w0 * a.x + w1 * b.x + w2 * c.x) / (w0 + w1 + w2);
                    hits[k * ny + j].push(x / sx);
                }
            }
        }
    }
    let mut mask = VoxelMask::empty(*grid);
    for k in 0..nz {
        for j in 0..ny {
            let row = &mut hits[k * ny + j];
            if row.len() < 2 {
                continue;
            }
            row.sort_by(|a, b| a.total_cmp(b));
            for pair in row.chunks_exact(2) {
                let lo = pair[0].ceil().max(0.0);
                let hi = pair[1].floor().min((nx - 1) as f64);
                if hi < lo {
                    continue;
                }
                for i in lo as usize..=hi as usize {
                    mask.data[grid.index(i, j, k)] = true;
                }
            }
        }
    }
    Ok(mask)
}

/// Dice score; `both_empty` flags the `1.0` given to two empty masks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiceScore {
    pub value: f64,
    pub both_empty: bool,
}

pub fn dice(a: &VoxelMask, b: &VoxelMask) -> Result<DiceScore> {
    if a.grid != b.grid {
        return Err(Error::arg(
            "same-grid",
            format!("{:?} vs {:?}", a.grid.dims, b.grid.dims),
        ));
    }
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(DiceScore { value: 1.0, both_empty: true });
    }
    Ok(DiceScore {
        value: 2.0 * both as f64 / (na + nb) as f64,
        both_empty: false,
    })
}

/// Dice of two meshes voxelized on `grid`.
pub fn mesh_dice(s: &SurfaceMesh, r: &SurfaceMesh, grid: &VoxelGrid) -> Result<f64> {
    Ok(dice(&voxelize(s, grid)?, &voxelize(r, grid)?)?.value)
}
