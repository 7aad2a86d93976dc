#![allow(dead_code)]

use std::path::{Path, PathBuf};

use lv4d::commands;
use lv4d_core::phantom::PhantomSpec;

/// Coarse, short beating phantom that segments in seconds.
pub fn small_spec() -> PhantomSpec {
    PhantomSpec {
        name: "small".into(),
        frames: 4,
        es_frame: 2,
        spacing_mm: [2.0, 2.0, 2.0],
        ..PhantomSpec::beating()
    }
}

pub fn write_small_study(dir: &Path) -> PathBuf {
    commands::write_phantom(&small_spec(), dir).unwrap();
    dir.to_path_buf()
}
