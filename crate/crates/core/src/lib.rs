//! Numerical core for semi-automated 4D left-ventricle segmentation of
//! temporal 3D echocardiography.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the CLI and the
//! HTTP service live in the `lv4d` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod annotation;
pub mod contour;
pub mod error;
pub mod evalstats;
pub mod experiments;
pub mod geom;
pub mod image;
pub mod mesh;
pub mod meshkit;
pub mod phantom;
pub mod pipeline;
pub mod regengine;
pub mod slicer;
pub mod volume;

pub use error::{Error, Result};
pub use geom::{Mat3, Mat4, Point2, Vec3};
pub use image::Image2D;
pub use volume::{Volume3D, Volume4D, VoxelGrid};
