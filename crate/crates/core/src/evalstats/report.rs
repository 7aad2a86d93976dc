use alloc::format;
use alloc::vec::Vec;

use super::distance::{hausdorff, mean_absolute_distance};
use super::stats::{bland_altman, correlation, ejection_fraction, BlandAltman, KruskalWallisResult};
use super::voxel::mesh_dice;
use crate::error::{Error, Result};
use crate::mesh::{mesh_volume, SurfaceMesh};
use crate::volume::VoxelGrid;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameMetrics {
    pub frame: usize,
    pub d_m: f64,
    #[cfg_attr(feature = "serde", serde(rename = "d_H"))]
    pub d_h: f64,
    pub dice: f64,
    #[cfg_attr(feature = "serde", serde(rename = "volume_mL"))]
    pub volume_ml: f64,
    #[cfg_attr(feature = "serde", serde(rename = "reference_volume_mL"))]
    pub reference_volume_ml: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Clinical {
    #[cfg_attr(feature = "serde", serde(rename = "EDV_mL"))]
    pub edv_ml: f64,
    #[cfg_attr(feature = "serde", serde(rename = "ESV_mL"))]
    pub esv_ml: f64,
    #[cfg_attr(feature = "serde", serde(rename = "EF_percent"))]
    pub ef_percent: f64,
}

impl Clinical {
    pub fn new(edv_ml: f64, esv_ml: f64) -> Result<Self> {
        Ok(Self {
            edv_ml,
            esv_ml,
            ef_percent: ejection_fraction(edv_ml, esv_ml)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StatsSummary {
    /// Predicted minus reference volume per frame.
    pub volume_bland_altman: Option<BlandAltman>,
    pub volume_correlation: Option<f64>,
    /// Named Kruskal-Wallis tests (filled by experiments).
    pub kruskal_wallis: Vec<(alloc::string::String, KruskalWallisResult)>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub per_frame: Vec<FrameMetrics>,
    pub clinical: Clinical,
    pub reference_clinical: Clinical,
    pub stats: Option<StatsSummary>,
}

impl MetricsReport {
    pub fn mean_of(&self, f: impl Fn(&FrameMetrics) -> f64) -> f64 {
        self.per_frame.iter().map(f).sum::<f64>() / self.per_frame.len() as f64
    }

    pub fn cycle_mean_dm(&self) -> f64 {
        self.mean_of(|m| m.d_m)
    }

    pub fn cycle_mean_dice(&self) -> f64 {
        self.mean_of(|m| m.dice)
    }

    pub fn max_dh(&self) -> f64 {
        self.per_frame.iter().map(|m| m.d_h).fold(0.0, f64::max)
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.per_frame.iter().map(|m| m.volume_ml).collect()
    }

    pub fn reference_volumes(&self) -> Vec<f64> {
        self.per_frame.iter().map(|m| m.reference_volume_ml).collect()
    }
}

/// Metrics of one predicted mesh against its reference.
pub fn frame_metrics(frame: usize, pred: &SurfaceMesh, truth: &SurfaceMesh, grid: &VoxelGrid) -> Result<FrameMetrics> {
    let m = FrameMetrics {
        frame,
        d_m: mean_absolute_distance(pred, truth)?,
        d_h: hausdorff(pred, truth)?,
        dice: mesh_dice(pred, truth, grid)?,
        volume_ml: mesh_volume(pred)?,
        reference_volume_ml: mesh_volume(truth)?,
    };
    Ok(m)
}

/// Per-frame and clinical metrics of a predicted cycle against reference
/// meshes. Dice uses `grid` (the source volume grid).
pub fn evaluate(
    pred: &[SurfaceMesh],
    truth: &[SurfaceMesh],
    grid: &VoxelGrid,
    ed_index: usize,
    es_index: usize,
) -> Result<MetricsReport> {
    if pred.len() != truth.len() {
        return Err(Error::arg(
            "frame-count-match",
            format!("{} predicted vs {} reference frames", pred.len(), truth.len()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::arg("non-empty", "no frames to evaluate"));
    }
    if ed_index >= pred.len() || es_index >= pred.len() {
        return Err(Error::arg("frame-index", format!("ED {} / ES {} of {}", ed_index, es_index, pred.len())));
    }
    let per_frame = pred
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(t, (p, r))| frame_metrics(t, p, r, grid))
        .collect::<Result<Vec<_>>>()?;
    let clinical = Clinical::new(per_frame[ed_index].volume_ml, per_frame[es_index].volume_ml)?;
    let reference_clinical = Clinical::new(
        per_frame[ed_index].reference_volume_ml,
        per_frame[es_index].reference_volume_ml,
    )?;
    let mut report = MetricsReport {
        per_frame,
        clinical,
        reference_clinical,
        stats: None,
    };
    if report.per_frame.len() >= 2 {
        let (v, r) = (report.volumes(), report.reference_volumes());
        report.stats = Some(StatsSummary {
            volume_bland_altman: bland_altman(&v, &r).ok(),
            volume_correlation: correlation(&v, &r).ok(),
            kruskal_wallis: Vec::new(),
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::mesh::icosphere;

    #[test]
    fn identical_meshes_score_perfectly() {
        let g = VoxelGrid::new([24, 24, 24], [1.0, 1.0, 1.0]).unwrap();
        let a = icosphere(Vec3::new(11.3, 11.6, 11.1), 8.0, 3);
        let b = icosphere(Vec3::new(11.3, 11.6, 11.1), 6.0, 3);
        let r = evaluate(&[a.clone(), b.clone()], &[a, b], &g, 0, 1).unwrap();
        for m in &r.per_frame {
            assert!(m.d_m < 1e-12);
            assert!(m.d_h < 1e-12);
            assert_eq!(m.dice, 1.0);
        }
        assert!(r.clinical.ef_percent > 0.0);
        assert_eq!(r.clinical, r.reference_clinical);
    }
}
