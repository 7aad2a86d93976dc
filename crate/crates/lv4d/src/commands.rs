//! The CLI operations, callable as library functions.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lv4d_core::contour::Phase;
use lv4d_core::evalstats::{evaluate, MetricsReport};
use lv4d_core::experiments::{
    angular_spacing, axis_perturbation, contour_perturbation, ellipsoid_baseline, ellipsoid_measurements,
    method_comparison, ExperimentReport, Measurement, MethodComparison, Metric, Subject, ANGULAR_SPACINGS,
    AXIS_PERTURBATION_RAD, CONTOUR_DELTA_MM,
};
use lv4d_core::mesh::SurfaceMesh;
use lv4d_core::phantom::{cohort, default_suite, generate, suite_spec, PhantomSpec};
use lv4d_core::pipeline::{segment_study, Diagnostics, PipelineConfig, Segmentation};
use lv4d_core::regengine::{RegistrationConfig, Registrar};
use lv4d_core::{Vec3, VoxelGrid};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{self, Dtype};

pub const EXPERIMENTS: [&str; 5] = [
    "angular-spacing",
    "axis-perturbation",
    "contour-perturbation",
    "ellipsoid-baseline",
    "method-comparison",
];

pub const VOLUME_FILE: &str = "volume.json";
pub const ANNOTATION_FILE: &str = "annotation.json";
pub const TRUTH_DIR: &str = "truth";
pub const TRUTH_FILE: &str = "truth.json";
pub const MESH_DIR: &str = "meshes";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub registrations: usize,
    pub min_jacobian: Option<f64>,
    pub unconverged: usize,
    pub clamped_points: usize,
}

impl From<&Diagnostics> for DiagnosticsRecord {
    fn from(d: &Diagnostics) -> Self {
        Self {
            registrations: d.registrations,
            min_jacobian: (d.registrations > 0).then_some(d.min_jacobian),
            unconverged: d.unconverged,
            clamped_points: d.clamped_points,
        }
    }
}

/// `segmentation.json` in a segment output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationRecord {
    pub theta_d: f64,
    pub frames: usize,
    pub ed_index: usize,
    pub es_index: usize,
    #[serde(rename = "volumes_mL")]
    pub volumes_ml: Vec<f64>,
    pub diagnostics: DiagnosticsRecord,
}

/// `truth.json` in a phantom truth directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub name: String,
    pub grid: VoxelGrid,
    pub frames: usize,
    pub ed_index: usize,
    pub es_index: usize,
    #[serde(rename = "volumes_mL")]
    pub volumes_ml: Vec<f64>,
    pub ef_percent: f64,
}

#[derive(Clone, Debug)]
pub struct SegmentArgs {
    pub volume: PathBuf,
    pub annotation: PathBuf,
    pub theta_d: f64,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub truth: Option<PathBuf>,
}

#[derive(Debug)]
pub struct SegmentOutput {
    pub segmentation: Segmentation,
    pub report: Option<MetricsReport>,
}

pub fn pipeline_config(theta_d: f64, config: Option<&Path>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::with_theta_d(theta_d);
    if let Some(path) = config {
        let rc: RegistrationConfig = io::read_json(path)?;
        rc.validate()?;
        cfg.registrar = Registrar::MovingMesh(rc);
    }
    Ok(cfg)
}

/// A truth directory holds its meshes either under `meshes/` or directly.
fn mesh_dir(dir: &Path) -> PathBuf {
    let sub = dir.join(MESH_DIR);
    if sub.is_dir() {
        sub
    } else {
        dir.to_path_buf()
    }
}

fn write_report_files(report: &MetricsReport, out: &Path) -> Result<()> {
    io::write_report(report, &out.join("report.json"))?;
    io::write_frame_metrics_csv(&report.per_frame, &out.join("metrics.csv"))?;
    let dice: Vec<f64> = report.per_frame.iter().map(|m| m.dice).collect();
    let curve = lv4d_core::evalstats::dice_reliability_curve(&dice, lv4d_core::experiments::RELIABILITY_THRESHOLDS)?;
    io::write_reliability_csv(&curve, &out.join("reliability.csv"))?;
    if let Some(ba) = report.stats.as_ref().and_then(|s| s.volume_bland_altman) {
        io::write_bland_altman_csv(&ba, &out.join("bland_altman.csv"))?;
    }
    Ok(())
}

pub fn cmd_segment(args: &SegmentArgs) -> Result<SegmentOutput> {
    let cfg = pipeline_config(args.theta_d, args.config.as_deref())?;
    // theta_d problems surface before any file is read
    lv4d_core::slicer::angle_count(args.theta_d, 180.0)?;
    let vol = io::read_volume4d(&args.volume)?;
    let ann = io::read_annotation(&args.annotation)?;
    let truth = match &args.truth {
        Some(dir) => Some(io::read_mesh_dir(&mesh_dir(dir))?),
        None => None,
    };
    let seg = segment_study(&vol, &ann, &cfg)?;
    io::write_mesh_dir(&seg.meshes, &args.out.join(MESH_DIR))?;
    io::write_volumes_csv(&seg.volumes_ml, &args.out.join("volumes.csv"))?;
    io::write_json(
        &SegmentationRecord {
            theta_d: args.theta_d,
            frames: vol.frame_count(),
            ed_index: vol.ed_index(),
            es_index: vol.es_index(),
            volumes_ml: seg.volumes_ml.clone(),
            diagnostics: (&seg.diagnostics).into(),
        },
        &args.out.join("segmentation.json"),
    )?;
    let report = match truth {
        Some(t) => {
            let r = evaluate(&seg.meshes, &t, vol.grid(), vol.ed_index(), vol.es_index())?;
            write_report_files(&r, &args.out)?;
            Some(r)
        }
        None => None,
    };
    Ok(SegmentOutput {
        segmentation: seg,
        report,
    })
}

/// Suite member by name, or a JSON spec file.
pub fn load_phantom_spec(spec: &str) -> Result<PhantomSpec> {
    if let Some(s) = suite_spec(spec) {
        return Ok(s);
    }
    let path = Path::new(spec);
    if path.is_file() {
        let s: PhantomSpec = io::read_json(path)?;
        s.validate()?;
        return Ok(s);
    }
    Err(CliError::Unknown {
        kind: "phantom",
        name: spec.to_string(),
    })
}

/// Writes one phantom study: volume, annotation, spec and truth.
pub fn write_phantom(spec: &PhantomSpec, out: &Path) -> Result<()> {
    let (vol, truth) = generate(spec)?;
    io::write_volume4d(&vol, &out.join(VOLUME_FILE), Dtype::F32)?;
    io::write_annotation(&truth.annotation, &out.join(ANNOTATION_FILE))?;
    io::write_json(spec, &out.join("spec.json"))?;
    let tdir = out.join(TRUTH_DIR);
    io::write_mesh_dir(&truth.meshes, &tdir.join(MESH_DIR))?;
    io::write_json(
        &TruthRecord {
            name: spec.name.clone(),
            grid: *vol.grid(),
            frames: vol.frame_count(),
            ed_index: vol.ed_index(),
            es_index: vol.es_index(),
            volumes_ml: truth.volumes_ml.clone(),
            ef_percent: truth.ef_percent,
        },
        &tdir.join(TRUTH_FILE),
    )
}

/// `suite` writes every member into its own subdirectory.
pub fn cmd_phantom(spec: &str, seed: Option<u64>, out: &Path) -> Result<Vec<PathBuf>> {
    let specs = if spec == "suite" {
        default_suite()
    } else {
        vec![load_phantom_spec(spec)?]
    };
    let nested = specs.len() > 1;
    let mut dirs = Vec::new();
    for mut s in specs {
        if let Some(seed) = seed {
            s.rng_seed = seed;
        }
        let dir = if nested { out.join(&s.name) } else { out.to_path_buf() };
        write_phantom(&s, &dir)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Dice grid for meshes without a volume: 0.5 mm voxels over the union of
/// the bounds, meshes shifted into the positive octant.
fn fallback_grid(pred: &mut [SurfaceMesh], truth: &mut [SurfaceMesh]) -> Result<VoxelGrid> {
    let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    for m in pred.iter().chain(truth.iter()) {
        let (a, b) = m.bounds();
        lo = Vec3::new(lo.x.min(a.x), lo.y.min(a.y), lo.z.min(a.z));
        hi = Vec3::new(hi.x.max(b.x), hi.y.max(b.y), hi.z.max(b.z));
    }
    let h = 0.5;
    let shift = Vec3::new(h, h, h) - lo;
    let m = lv4d_core::Mat4::translation(shift);
    for mesh in pred.iter_mut().chain(truth.iter_mut()) {
        *mesh = mesh.transformed(&m);
    }
    let span = hi - lo;
    let dim = |s: f64| (s / h).ceil() as usize + 3;
    Ok(VoxelGrid::new([dim(span.x), dim(span.y), dim(span.z)], [h; 3])?)
}

pub fn cmd_evaluate(pred_dir: &Path, truth_dir: &Path, out: &Path) -> Result<MetricsReport> {
    let mut pred = io::read_mesh_dir(&mesh_dir(pred_dir))?;
    let mut truth = io::read_mesh_dir(&mesh_dir(truth_dir))?;
    if pred.is_empty() || truth.is_empty() {
        return Err(CliError::Core(lv4d_core::Error::InvalidArgument {
            rule: "non-empty",
            detail: format!("{} predicted and {} reference meshes", pred.len(), truth.len()),
        }));
    }
    let record_path = truth_dir.join(TRUTH_FILE);
    let record: Option<TruthRecord> = if record_path.is_file() {
        Some(io::read_json(&record_path)?)
    } else {
        None
    };
    let (grid, ed, es) = match record {
        Some(r) => (r.grid, r.ed_index, r.es_index),
        None => {
            let vols = truth
                .iter()
                .map(lv4d_core::mesh::mesh_volume)
                .collect::<lv4d_core::Result<Vec<_>>>()?;
            let es = (0..vols.len()).min_by(|&a, &b| vols[a].total_cmp(&vols[b])).unwrap();
            (fallback_grid(&mut pred, &mut truth)?, 0, es)
        }
    };
    let report = evaluate(&pred, &truth, &grid, ed, es)?;
    write_report_files(&report, out)?;
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct ExperimentOptions {
    pub replicates: usize,
    pub cfg: PipelineConfig,
    /// Replaces the suite member an experiment runs on.
    pub base: Option<PhantomSpec>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            replicates: 6,
            cfg: PipelineConfig::default(),
            base: None,
        }
    }
}

#[derive(Debug)]
pub enum ExperimentOutput {
    Groups {
        report: ExperimentReport,
        /// Ellipsoid baseline on the unbent spheroid (ellipsoid-baseline only).
        spheroid: Option<[Measurement; 2]>,
    },
    Methods(Box<MethodComparison>),
}

fn subjects(base: &PhantomSpec, n: usize) -> Result<Vec<Subject>> {
    cohort(base, n)
        .iter()
        .map(|s| Subject::ed_es(s).map_err(CliError::from))
        .collect()
}

fn suite(name: &str) -> PhantomSpec {
    suite_spec(name).expect("suite member")
}

pub fn run_experiment(name: &str, opts: &ExperimentOptions) -> Result<ExperimentOutput> {
    let base = |default: &str| opts.base.clone().unwrap_or_else(|| suite(default));
    let n = opts.replicates;
    let cfg = &opts.cfg;
    let groups = |report| Ok(ExperimentOutput::Groups { report, spheroid: None });
    match name {
        "angular-spacing" => groups(angular_spacing(&subjects(&base("beating"), n)?, &ANGULAR_SPACINGS, cfg)?),
        "axis-perturbation" => groups(axis_perturbation(&subjects(&base("beating"), n)?, AXIS_PERTURBATION_RAD, cfg)?),
        "contour-perturbation" => groups(contour_perturbation(&subjects(&base("beating"), n)?, CONTOUR_DELTA_MM, cfg)?),
        "ellipsoid-baseline" => {
            let report = ellipsoid_baseline(&subjects(&base("bent"), n)?, cfg)?;
            let mut spheroid = base("beating");
            spheroid.bend = 0.0;
            let spheroid = ellipsoid_measurements(&Subject::ed_es(&spheroid)?)?;
            Ok(ExperimentOutput::Groups {
                report,
                spheroid: Some(spheroid),
            })
        }
        "method-comparison" => {
            let (vol, truth) = generate(&base("beating"))?;
            Ok(ExperimentOutput::Methods(Box::new(method_comparison(&vol, &truth, cfg)?)))
        }
        _ => Err(CliError::Unknown {
            kind: "experiment",
            name: name.to_string(),
        }),
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Group means (SD) per phase with the Kruskal-Wallis row underneath.
pub fn experiment_table(r: &ExperimentReport) -> String {
    let metrics: Vec<Metric> = Metric::ALL
        .into_iter()
        .filter(|&m| r.tests.iter().any(|t| t.metric == m))
        .collect();
    let mut s = format!("# {}\n", r.name);
    for phase in [Phase::Ed, Phase::Es] {
        let _ = write!(s, "\n## {:?}\n\n| group |", phase);
        for m in &metrics {
            let _ = write!(s, " {} |", m.label());
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(metrics.len()));
        s.push('\n');
        for g in &r.groups {
            let _ = write!(s, "| {} |", g);
            for &m in &metrics {
                let (mean, sd) = mean_sd(&r.values(g, phase, m));
                let _ = write!(s, " {:.3} ({:.3}) |", mean, sd);
            }
            s.push('\n');
        }
        s.push_str("| KW H / p |");
        for &m in &metrics {
            match r.test(phase, m) {
                Some(t) => {
                    let _ = write!(s, " {:.3} / {:.4} |", t.h, t.p_value);
                }
                None => s.push_str(" - |"),
            }
        }
        s.push('\n');
    }
    s
}

fn write_measurements_csv(rows: &[Measurement], path: &Path) -> Result<()> {
    let mut s = String::from("group,subject,phase,d_m,d_H,dice,volume_mL,truth_volume_mL\n");
    for m in rows {
        let _ = writeln!(
            s,
            "{},{},{:?},{},{},{},{},{}",
            m.group, m.subject, m.phase, m.d_m, m.d_h, m.dice, m.volume_ml, m.truth_volume_ml
        );
    }
    fs::create_dir_all(path.parent().unwrap()).map_err(|e| CliError::io(path, e))?;
    fs::write(path, s).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct MethodRecord<'a> {
    pipeline: &'a MetricsReport,
    demons: &'a MetricsReport,
    dice_gap: f64,
    /// Smallest pipeline-minus-demons reliability difference at thresholds >= 0.85.
    curve_margin_085: f64,
}

pub fn write_experiment(name: &str, output: &ExperimentOutput, out: &Path) -> Result<()> {
    match output {
        ExperimentOutput::Groups { report, spheroid } => {
            io::write_json(report, &out.join(format!("{}.json", name)))?;
            write_measurements_csv(&report.measurements, &out.join(format!("{}.csv", name)))?;
            let mut md = experiment_table(report);
            if let Some(sph) = spheroid {
                io::write_json(sph, &out.join(format!("{}-spheroid.json", name)))?;
                md.push_str("\n## spheroid volume\n\n| phase | ellipsoid mL | truth mL | error % |\n|---|---|---|---|\n");
                for m in sph {
                    let _ = writeln!(
                        md,
                        "| {:?} | {:.2} | {:.2} | {:.1} |",
                        m.phase,
                        m.volume_ml,
                        m.truth_volume_ml,
                        100.0 * (m.volume_ml - m.truth_volume_ml) / m.truth_volume_ml
                    );
                }
            }
            write_text(&md, &out.join(format!("{}.md", name)))
        }
        ExperimentOutput::Methods(mc) => {
            io::write_json(
                &MethodRecord {
                    pipeline: &mc.pipeline,
                    demons: &mc.demons,
                    dice_gap: mc.dice_gap,
                    curve_margin_085: mc.curve_margin(0.85),
                },
                &out.join(format!("{}.json", name)),
            )?;
            let mut csv = String::from("threshold,pipeline,demons\n");
            for (p, d) in mc.pipeline_curve.iter().zip(&mc.demons_curve) {
                let _ = writeln!(csv, "{},{},{}", p.0, p.1, d.1);
            }
            write_text(&csv, &out.join(format!("{}-reliability.csv", name)))?;
            io::write_frame_metrics_csv(&mc.pipeline.per_frame, &out.join(format!("{}-pipeline.csv", name)))?;
            io::write_frame_metrics_csv(&mc.demons.per_frame, &out.join(format!("{}-demons.csv", name)))?;
            let mut md = format!("# {}\n\n| method | d_m | d_H | Dice | EF % | r |\n|---|---|---|---|---|---|\n", name);
            for (label, r) in [("pipeline", &mc.pipeline), ("demons", &mc.demons)] {
                let (dm, dm_sd) = mean_sd(&r.per_frame.iter().map(|m| m.d_m).collect::<Vec<_>>());
                let (dh, dh_sd) = mean_sd(&r.per_frame.iter().map(|m| m.d_h).collect::<Vec<_>>());
                let (dc, dc_sd) = mean_sd(&r.per_frame.iter().map(|m| m.dice).collect::<Vec<_>>());
                let corr = r.stats.as_ref().and_then(|s| s.volume_correlation).unwrap_or(f64::NAN);
                let _ = writeln!(
                    md,
                    "| {} | {:.3} ({:.3}) | {:.3} ({:.3}) | {:.4} ({:.4}) | {:.1} | {:.4} |",
                    label, dm, dm_sd, dh, dh_sd, dc, dc_sd, r.clinical.ef_percent, corr
                );
            }
            let _ = writeln!(md, "\nDice gap {:.4}, reliability margin from 0.85: {:.3}", mc.dice_gap, mc.curve_margin(0.85));
            write_text(&md, &out.join(format!("{}.md", name)))
        }
    }
}

fn write_text(s: &str, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, s).map_err(|e| CliError::io(path, e))
}

pub fn cmd_experiment(name: &str, out: &Path, opts: &ExperimentOptions) -> Result<ExperimentOutput> {
    if !EXPERIMENTS.contains(&name) {
        return Err(CliError::Unknown {
            kind: "experiment",
            name: name.to_string(),
        });
    }
    let output = run_experiment(name, opts)?;
    write_experiment(name, &output, out)?;
    Ok(output)
}
