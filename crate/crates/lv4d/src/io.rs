//! On-disk formats: volume header + raw blob, annotation JSON, OBJ meshes,
//! report JSON and CSV tables.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};

use lv4d_core::annotation::{SeedContour, StudyAnnotation};
use lv4d_core::contour::Phase;
use lv4d_core::evalstats::{BlandAltman, FrameMetrics, MetricsReport};
use lv4d_core::mesh::SurfaceMesh;
use lv4d_core::{Vec3, Volume3D, Volume4D};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    F32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub frames: usize,
    pub dtype: Dtype,
    pub max_value: f64,
    pub ed_index: usize,
    pub es_index: usize,
    /// Raw blob, relative to the header.
    pub data: String,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::json(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::json(path, e))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_volume_header(path: &Path) -> Result<VolumeHeader> {
    read_json(path)
}

/// Reads a header and its blob; intensities are divided by `max_value`.
pub fn read_volume4d(path: &Path) -> Result<Volume4D> {
    let h = read_volume_header(path)?;
    let invalid = |rule: &'static str, detail: String| CliError::Core(lv4d_core::Error::InvalidVolume { rule, detail });
    if !(h.max_value > 0.0) {
        return Err(invalid("max_value>0", format!("max_value = {}", h.max_value)));
    }
    let blob_path = path.parent().unwrap_or(Path::new(".")).join(&h.data);
    let blob = fs::read(&blob_path).map_err(|e| CliError::io(&blob_path, e))?;
    let per_frame = h.dims.iter().product::<usize>();
    let width = match h.dtype {
        Dtype::U8 => 1,
        Dtype::F32 => 4,
    };
    let expected = per_frame * h.frames * width;
    if blob.len() != expected {
        return Err(invalid(
            "payload-size",
            format!("{} holds {} bytes, header implies {}", blob_path.display(), blob.len(), expected),
        ));
    }
    let scale = 1.0 / h.max_value;
    let mut frames = Vec::with_capacity(h.frames);
    for f in 0..h.frames {
        let chunk = &blob[f * per_frame * width..(f + 1) * per_frame * width];
        let voxels: Vec<f32> = match h.dtype {
            Dtype::U8 => chunk.iter().map(|&b| (b as f64 * scale) as f32).collect(),
            Dtype::F32 => chunk
                .chunks_exact(4)
                .map(|c| {
                    let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                    if h.max_value == 1.0 {
                        v
                    } else {
                        (v as f64 * scale) as f32
                    }
                })
                .collect(),
        };
        if voxels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("intensity-in-[0,1]", format!("frame {} exceeds max_value", f)));
        }
        frames.push(Volume3D::new(h.dims, h.spacing_mm, voxels)?);
    }
    Ok(Volume4D::new(frames, h.ed_index, h.es_index)?)
}

/// Writes `<stem>.json` and `<stem>.raw` next to each other. `f32` keeps
/// voxels bit-exact; `u8` quantizes to 255 levels.
pub fn write_volume4d(vol: &Volume4D, header_path: &Path, dtype: Dtype) -> Result<()> {
    let raw_path = header_path.with_extension("raw");
    let raw_name = raw_path.file_name().unwrap().to_string_lossy().into_owned();
    let grid = vol.grid();
    let header = VolumeHeader {
        dims: grid.dims,
        spacing_mm: grid.spacing,
        frames: vol.frame_count(),
        dtype,
        max_value: match dtype {
            Dtype::U8 => 255.0,
            Dtype::F32 => 1.0,
        },
        ed_index: vol.ed_index(),
        es_index: vol.es_index(),
        data: raw_name,
    };
    let mut blob = Vec::with_capacity(grid.len() * vol.frame_count() * 4);
    for f in vol.frames() {
        for &v in f.voxels() {
            match dtype {
                Dtype::U8 => blob.push((v.clamp(0.0, 1.0) * 255.0).round() as u8),
                Dtype::F32 => blob.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    write_bytes(&raw_path, &blob)?;
    write_json(&header, header_path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourRecord {
    pub phase: Phase,
    pub angle_deg: f64,
    pub points_mm: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub apex_mm: [f64; 3],
    pub base_mm: [f64; 3],
    pub contours: Vec<ContourRecord>,
}

impl AnnotationFile {
    pub fn validate(&self) -> lv4d_core::Result<StudyAnnotation> {
        let v = |p: [f64; 3]| Vec3::new(p[0], p[1], p[2]);
        let contours = self
            .contours
            .iter()
            .map(|c| SeedContour {
                phase: c.phase,
                angle_deg: c.angle_deg,
                points_mm: c.points_mm.iter().map(|&p| v(p)).collect(),
            })
            .collect();
        StudyAnnotation::new(v(self.apex_mm), v(self.base_mm), contours)
    }

    pub fn from_annotation(a: &StudyAnnotation) -> Self {
        let arr = |p: Vec3| [p.x, p.y, p.z];
        Self {
            apex_mm: arr(a.apex),
            base_mm: arr(a.base),
            contours: a
                .contours()
                .iter()
                .map(|c| ContourRecord {
                    phase: c.phase,
                    angle_deg: c.angle_deg,
                    points_mm: c.points_mm.iter().map(|&p| arr(p)).collect(),
                })
                .collect(),
        }
    }
}

pub fn read_annotation(path: &Path) -> Result<StudyAnnotation> {
    let file: AnnotationFile = read_json(path)?;
    Ok(file.validate()?)
}

pub fn write_annotation(a: &StudyAnnotation, path: &Path) -> Result<()> {
    write_json(&AnnotationFile::from_annotation(a), path)
}

/// `v` and `f` records, 1-based indices. Shortest round-trip float
/// formatting keeps vertices exact.
pub fn mesh_to_obj(mesh: &SurfaceMesh) -> Result<String> {
    mesh.validate()?;
    let mut s = String::with_capacity(mesh.vertices.len() * 48 + mesh.triangles.len() * 24);
    for v in &mesh.vertices {
        s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for t in &mesh.triangles {
        s.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    Ok(s)
}

pub fn write_mesh(mesh: &SurfaceMesh, path: &Path) -> Result<()> {
    write_bytes(path, mesh_to_obj(mesh)?.as_bytes())
}

pub fn read_mesh(path: &Path) -> Result<SurfaceMesh> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut mesh = SurfaceMesh {
        vertices: Vec::new(),
        triangles: Vec::new(),
        layout: None,
    };
    let bad = |line: usize, what: &str| CliError::Parse {
        path: path.to_path_buf(),
        detail: format!("line {}: {}", line, what),
    };
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it.map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad(n + 1, "bad vertex"))?;
                if c.len() < 3 {
                    return Err(bad(n + 1, "vertex needs 3 coordinates"));
                }
                mesh.vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                // `f a/b/c` style references keep only the vertex index
                let idx: Vec<usize> = it
                    .map(|t| t.split('/').next().unwrap_or("").parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(n + 1, "bad face"))?;
                if idx.len() != 3 || idx.contains(&0) {
                    return Err(bad(n + 1, "faces must be triangles with 1-based indices"));
                }
                mesh.triangles.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            _ => {}
        }
    }
    mesh.validate()?;
    Ok(mesh)
}

pub fn frame_mesh_name(frame: usize) -> String {
    format!("frame_{:03}.obj", frame)
}

/// Meshes named `frame_NNN.obj`, in frame order.
pub fn read_mesh_dir(dir: &Path) -> Result<Vec<SurfaceMesh>> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let n = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            n.starts_with("frame_") && n.ends_with(".obj")
        })
        .collect();
    names.sort();
    for (i, p) in names.iter().enumerate() {
        if p.file_name().unwrap().to_string_lossy() != frame_mesh_name(i) {
            return Err(CliError::Parse {
                path: dir.to_path_buf(),
                detail: format!("expected {} at position {}", frame_mesh_name(i), i),
            });
        }
    }
    names.iter().map(|p| read_mesh(p)).collect()
}

pub fn write_mesh_dir(meshes: &[SurfaceMesh], dir: &Path) -> Result<()> {
    for (t, m) in meshes.iter().enumerate() {
        write_mesh(m, &dir.join(frame_mesh_name(t)))?;
    }
    Ok(())
}

fn write_csv<F>(path: &Path, header: &[&str], rows: F) -> Result<()>
where
    F: FnOnce(&mut csv::Writer<BufWriter<fs::File>>) -> std::result::Result<(), csv::Error>,
{
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| CliError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    };
    w.write_record(header).map_err(csv_err)?;
    rows(&mut w).map_err(csv_err)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn volumes_csv(volumes_ml: &[f64]) -> String {
    let mut s = String::from("frame,volume_mL\n");
    for (t, v) in volumes_ml.iter().enumerate() {
        s.push_str(&format!("{},{}\n", t, v));
    }
    s
}

pub fn write_volumes_csv(volumes_ml: &[f64], path: &Path) -> Result<()> {
    write_bytes(path, volumes_csv(volumes_ml).as_bytes())
}

pub fn read_volumes_csv(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let v = rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| CliError::Parse {
            path: path.to_path_buf(),
            detail: String::from("volume column"),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_frame_metrics_csv(rows: &[FrameMetrics], path: &Path) -> Result<()> {
    write_csv(path, &["frame", "d_m", "d_H", "dice", "volume_mL", "reference_volume_mL"], |w| {
        for m in rows {
            w.write_record(&[
                m.frame.to_string(),
                m.d_m.to_string(),
                m.d_h.to_string(),
                m.dice.to_string(),
                m.volume_ml.to_string(),
                m.reference_volume_ml.to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn write_reliability_csv(curve: &[(f64, f64)], path: &Path) -> Result<()> {
    write_csv(path, &["threshold", "fraction_above"], |w| {
        for (t, f) in curve {
            w.write_record(&[t.to_string(), f.to_string()])?;
        }
        Ok(())
    })
}

pub fn write_bland_altman_csv(ba: &BlandAltman, path: &Path) -> Result<()> {
    write_csv(path, &["bias", "sd", "lower_limit", "upper_limit"], |w| {
        w.write_record(&[ba.bias.to_string(), ba.sd.to_string(), ba.loa_low.to_string(), ba.loa_high.to_string()])
    })
}

pub fn write_report(report: &MetricsReport, path: &Path) -> Result<()> {
    write_json(report, path)
}
