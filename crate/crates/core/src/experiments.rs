//! Robustness and comparison studies on phantom cohorts.
//!
//! Each replicate phantom plays the part of one patient. The ED and ES
//! results of every replicate are grouped per setting and compared with
//! Kruskal-Wallis tests, separately per phase.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::annotation::StudyAnnotation;
use crate::contour::Phase;
use crate::error::Result;
use crate::evalstats::{dice_reliability_curve, evaluate, frame_metrics, kruskal_wallis, KruskalWallisResult, MetricsReport};
use crate::mesh::{mesh_volume, SurfaceMesh};
use crate::meshkit::{build_mesh, fit_ellipsoid_baseline};
use crate::phantom::{render_frame, PhantomGeometry, PhantomSpec, PhantomTruth, TRUTH_LONGITUDES, TRUTH_ROWS};
use crate::pipeline::{perturb_axis, perturb_contours, segment_ed_es, segment_study, AxisRotation, Diagnostics, PipelineConfig, Segmentation};
use crate::regengine::Registrar;
use crate::volume::Volume4D;

pub const ANGULAR_SPACINGS: [f64; 4] = [1.0, 5.0, 10.0, 15.0];
pub const AXIS_PERTURBATION_RAD: f64 = core::f64::consts::PI / 32.0;
pub const CONTOUR_DELTA_MM: f64 = 1.0;
pub const RELIABILITY_THRESHOLDS: usize = 101;

/// One phantom reduced to its ED and ES frames.
#[derive(Clone, Debug)]
pub struct Subject {
    pub spec: PhantomSpec,
    pub geometry: PhantomGeometry,
    /// Two frames: ED then ES.
    pub volume: Volume4D,
    pub truth_meshes: [SurfaceMesh; 2],
    pub truth_volumes_ml: [f64; 2],
    pub annotation: StudyAnnotation,
}

impl Subject {
    pub fn ed_es(spec: &PhantomSpec) -> Result<Self> {
        spec.validate()?;
        let geometry = PhantomGeometry::new(spec);
        let grid = geometry.grid();
        let ts = [0, spec.es_frame];
        let frames = ts.iter().map(|&t| render_frame(&geometry, &grid, t)).collect();
        Ok(Self {
            spec: spec.clone(),
            volume: Volume4D::new(frames, 0, 1)?,
            truth_meshes: ts.map(|t| geometry.truth_mesh(t, TRUTH_LONGITUDES, TRUTH_ROWS)),
            truth_volumes_ml: ts.map(|t| geometry.volume_ml(t)),
            annotation: geometry.annotation()?,
            geometry,
        })
    }

    fn truth(&self, phase: Phase) -> &SurfaceMesh {
        &self.truth_meshes[(phase == Phase::Es) as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Metric {
    #[cfg_attr(feature = "serde", serde(rename = "d_m"))]
    Dm,
    #[cfg_attr(feature = "serde", serde(rename = "d_H"))]
    Dh,
    #[cfg_attr(feature = "serde", serde(rename = "Dice"))]
    Dice,
    #[cfg_attr(feature = "serde", serde(rename = "volume"))]
    Volume,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Dm, Metric::Dh, Metric::Dice, Metric::Volume];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Dm => "d_m",
            Metric::Dh => "d_H",
            Metric::Dice => "Dice",
            Metric::Volume => "volume",
        }
    }
}

/// One mesh compared with its truth.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Measurement {
    pub group: String,
    pub subject: String,
    pub phase: Phase,
    pub d_m: f64,
    #[cfg_attr(feature = "serde", serde(rename = "d_H"))]
    pub d_h: f64,
    pub dice: f64,
    #[cfg_attr(feature = "serde", serde(rename = "volume_mL"))]
    pub volume_ml: f64,
    #[cfg_attr(feature = "serde", serde(rename = "truth_volume_mL"))]
    pub truth_volume_ml: f64,
}

impl Measurement {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Dm => self.d_m,
            Metric::Dh => self.d_h,
            Metric::Dice => self.dice,
            Metric::Volume => self.volume_ml,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupTest {
    pub phase: Phase,
    pub metric: Metric,
    pub result: KruskalWallisResult,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentReport {
    pub name: String,
    pub groups: Vec<String>,
    pub measurements: Vec<Measurement>,
    pub tests: Vec<GroupTest>,
    /// Smallest Jacobian determinant over all registrations, if any ran.
    pub diagnostics_min_jacobian: Option<f64>,
}

impl ExperimentReport {
    fn new(name: &str, groups: Vec<String>, measurements: Vec<Measurement>, metrics: &[Metric], diag: &Diagnostics) -> Result<Self> {
        let mut r = Self {
            name: name.to_string(),
            groups,
            measurements,
            tests: Vec::new(),
            diagnostics_min_jacobian: (diag.registrations > 0).then_some(diag.min_jacobian),
        };
        for phase in [Phase::Ed, Phase::Es] {
            for &metric in metrics {
                let samples: Vec<Vec<f64>> = r.groups.iter().map(|g| r.values(g, phase, metric)).collect();
                r.tests.push(GroupTest {
                    phase,
                    metric,
                    result: kruskal_wallis(&samples)?,
                });
            }
        }
        Ok(r)
    }

    pub fn values(&self, group: &str, phase: Phase, metric: Metric) -> Vec<f64> {
        self.measurements
            .iter()
            .filter(|m| m.group == group && m.phase == phase)
            .map(|m| m.get(metric))
            .collect()
    }

    pub fn mean(&self, group: &str, phase: Phase, metric: Metric) -> f64 {
        let v = self.values(group, phase, metric);
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }

    pub fn test(&self, phase: Phase, metric: Metric) -> Option<&KruskalWallisResult> {
        self.tests
            .iter()
            .find(|t| t.phase == phase && t.metric == metric)
            .map(|t| &t.result)
    }
}

fn measure(group: &str, subject: &Subject, phase: Phase, mesh: &SurfaceMesh) -> Result<Measurement> {
    let t = (phase == Phase::Es) as usize;
    let fm = frame_metrics(t, mesh, subject.truth(phase), subject.volume.grid())?;
    Ok(Measurement {
        group: group.to_string(),
        subject: subject.spec.name.clone(),
        phase,
        d_m: fm.d_m,
        d_h: fm.d_h,
        dice: fm.dice,
        volume_ml: mesh_volume(mesh)?,
        truth_volume_ml: subject.truth_volumes_ml[t],
    })
}

/// ED/ES spatial segmentation of one subject under one setting.
fn run_ed_es(
    group: &str,
    subject: &Subject,
    annotation: &StudyAnnotation,
    cfg: &PipelineConfig,
    diag: &mut Diagnostics,
) -> Result<[Measurement; 2]> {
    let (ed, es) = segment_ed_es(&subject.volume, annotation, cfg, diag)?;
    Ok([
        measure(group, subject, Phase::Ed, &build_mesh(&ed)?)?,
        measure(group, subject, Phase::Es, &build_mesh(&es)?)?,
    ])
}

fn theta_label(t: f64) -> String {
    format!("theta_d={}", t)
}

/// Spatial segmentation at each angular spacing.
pub fn angular_spacing(subjects: &[Subject], spacings: &[f64], cfg: &PipelineConfig) -> Result<ExperimentReport> {
    let mut diag = Diagnostics::default();
    let mut out = Vec::new();
    for &theta in spacings {
        let c = PipelineConfig {
            theta_d: theta,
            ..cfg.clone()
        };
        for s in subjects {
            out.extend(run_ed_es(&theta_label(theta), s, &s.annotation, &c, &mut diag)?);
        }
    }
    let groups = spacings.iter().map(|&t| theta_label(t)).collect();
    ExperimentReport::new("angular-spacing", groups, out, &[Metric::Dm, Metric::Dh, Metric::Dice], &diag)
}

/// The unperturbed axis plus the six elemental rotations of the apex about
/// the base. The seed contours are traced again on the rotated planes.
pub fn axis_perturbation(subjects: &[Subject], angle: f64, cfg: &PipelineConfig) -> Result<ExperimentReport> {
    let mut diag = Diagnostics::default();
    let mut out = Vec::new();
    let mut groups = alloc::vec![String::from("original")];
    groups.extend(AxisRotation::ALL.iter().map(|r| r.label().to_string()));
    for s in subjects {
        out.extend(run_ed_es("original", s, &s.annotation, cfg, &mut diag)?);
        let axis = s.annotation.axis();
        for r in AxisRotation::ALL {
            let ann = s.geometry.annotation_on(&perturb_axis(&axis, r, angle)?)?;
            out.extend(run_ed_es(r.label(), s, &ann, cfg, &mut diag)?);
        }
    }
    ExperimentReport::new("axis-perturbation", groups, out, &Metric::ALL, &diag)
}

/// Seeds eroded by `delta`, unchanged, and dilated by `delta`.
pub fn contour_perturbation(subjects: &[Subject], delta: f64, cfg: &PipelineConfig) -> Result<ExperimentReport> {
    let mut diag = Diagnostics::default();
    let mut out = Vec::new();
    let settings = [(-delta, "eroded"), (0.0, "original"), (delta, "dilated")];
    for s in subjects {
        for (d, name) in settings {
            let ann = perturb_contours(&s.annotation, d)?;
            out.extend(run_ed_es(name, s, &ann, cfg, &mut diag)?);
        }
    }
    let groups = settings.iter().map(|(_, n)| n.to_string()).collect();
    ExperimentReport::new("contour-perturbation", groups, out, &Metric::ALL, &diag)
}

/// Truncated-ellipsoid fit to the seeds against the pipeline.
pub fn ellipsoid_baseline(subjects: &[Subject], cfg: &PipelineConfig) -> Result<ExperimentReport> {
    let mut diag = Diagnostics::default();
    let mut out = Vec::new();
    for s in subjects {
        out.extend(run_ed_es("pipeline", s, &s.annotation, cfg, &mut diag)?);
        out.extend(ellipsoid_measurements(s)?);
    }
    let groups = alloc::vec![String::from("pipeline"), String::from("ellipsoid")];
    ExperimentReport::new("ellipsoid-baseline", groups, out, &Metric::ALL, &diag)
}

/// The ellipsoid baseline alone, ED then ES.
pub fn ellipsoid_measurements(s: &Subject) -> Result<[Measurement; 2]> {
    let axis = s.annotation.axis();
    let fit = |phase| -> Result<Measurement> {
        let (_, mesh) = fit_ellipsoid_baseline(&axis, s.annotation.contour(phase, 0.0), s.annotation.contour(phase, 90.0))?;
        measure("ellipsoid", s, phase, &mesh)
    };
    Ok([fit(Phase::Ed)?, fit(Phase::Es)?])
}

/// Full-cycle pipeline against the same pipeline driven by demons.
#[derive(Clone, Debug)]
pub struct MethodComparison {
    pub pipeline: MetricsReport,
    pub demons: MetricsReport,
    pub pipeline_curve: Vec<(f64, f64)>,
    pub demons_curve: Vec<(f64, f64)>,
    /// Cycle-mean Dice of the pipeline minus that of demons.
    pub dice_gap: f64,
    pub segmentation: Segmentation,
}

impl MethodComparison {
    /// Smallest `pipeline - demons` curve difference over thresholds at or
    /// above `from`.
    pub fn curve_margin(&self, from: f64) -> f64 {
        self.pipeline_curve
            .iter()
            .zip(&self.demons_curve)
            .filter(|(p, _)| p.0 >= from - 1e-12)
            .map(|(p, d)| p.1 - d.1)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn method_comparison(vol: &Volume4D, truth: &PhantomTruth, cfg: &PipelineConfig) -> Result<MethodComparison> {
    let run = |registrar: Registrar| -> Result<(Segmentation, MetricsReport)> {
        let c = PipelineConfig {
            registrar,
            ..cfg.clone()
        };
        let seg = segment_study(vol, &truth.annotation, &c)?;
        let rep = evaluate(&seg.meshes, &truth.meshes, vol.grid(), vol.ed_index(), vol.es_index())?;
        Ok((seg, rep))
    };
    let (segmentation, pipeline) = run(cfg.registrar.clone())?;
    let (_, demons) = run(Registrar::demons())?;
    let dice = |r: &MetricsReport| r.per_frame.iter().map(|f| f.dice).collect::<Vec<_>>();
    Ok(MethodComparison {
        pipeline_curve: dice_reliability_curve(&dice(&pipeline), RELIABILITY_THRESHOLDS)?,
        demons_curve: dice_reliability_curve(&dice(&demons), RELIABILITY_THRESHOLDS)?,
        dice_gap: pipeline.cycle_mean_dice() - demons.cycle_mean_dice(),
        pipeline,
        demons,
        segmentation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Vec<Subject> {
        let base = PhantomSpec {
            spacing_mm: [2.0, 2.0, 2.0],
            ..PhantomSpec::beating()
        };
        crate::phantom::cohort(&base, 2)
            .iter()
            .map(|s| Subject::ed_es(s).unwrap())
            .collect()
    }

    #[test]
    fn contour_study_shape() {
        let subjects = small();
        let r = contour_perturbation(&subjects, 1.0, &PipelineConfig::with_theta_d(90.0)).unwrap();
        assert_eq!(r.groups, ["eroded", "original", "dilated"]);
        assert_eq!(r.measurements.len(), 3 * 2 * 2);
        assert_eq!(r.tests.len(), 8);
        assert!(r.mean("dilated", Phase::Ed, Metric::Volume) > r.mean("eroded", Phase::Ed, Metric::Volume));
    }

    #[test]
    fn ellipsoid_fits_every_subject() {
        for s in small() {
            let [ed, es] = ellipsoid_measurements(&s).unwrap();
            assert!(ed.volume_ml > es.volume_ml);
            assert!(ed.dice > 0.7);
        }
    }
}
