//! HTTP service over a directory of studies.
//!
//! A study is a subdirectory of the data root holding `volume.json`. Posted
//! annotations and job outputs live under `_annotations/` and `_jobs/`; the
//! study directories themselves are never written.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lv4d_core::annotation::StudyAnnotation;
use lv4d_core::slicer::{AxisFrame, SlicePlane};
use lv4d_core::{Vec3, Volume4D};
use serde::{Deserialize, Serialize};

use crate::commands::{self, SegmentArgs, ANNOTATION_FILE, MESH_DIR, TRUTH_DIR, VOLUME_FILE};
use crate::error::CliError;
use crate::io::{self, AnnotationFile};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    rule: &'static str,
    detail: String,
}

impl ApiError {
    fn not_found(what: &str, id: &str) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            rule: "known-id",
            detail: format!("unknown {} `{}`", what, id),
        }
    }

    fn invalid(rule: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            rule,
            detail: detail.into(),
        }
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        let status = match e {
            CliError::Core(_) | CliError::Json { .. } | CliError::Unknown { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            rule: e.rule(),
            detail: e.to_string(),
        }
    }
}

impl From<lv4d_core::Error> for ApiError {
    fn from(e: lv4d_core::Error) -> Self {
        CliError::from(e).into()
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct ErrorBody {
    pub error: String,
    pub rule: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.detail,
            rule: self.rule.to_string(),
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct JobRecord {
    pub job_id: String,
    pub study: String,
    pub theta_d: f64,
    pub status: JobStatus,
    pub frames: Option<usize>,
    pub out_dir: String,
    pub error: Option<ErrorBody>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct StudySummary {
    pub id: String,
    pub frames: usize,
    pub dims: [usize; 3],
    pub has_annotation: bool,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct StudyMeta {
    pub id: String,
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub frames: usize,
    pub ed_index: usize,
    pub es_index: usize,
    /// Axis used for slicing when the request names none.
    pub apex_mm: [f64; 3],
    pub base_mm: [f64; 3],
    pub axis_source: String,
    /// Slice images are square with this side, centred on the axis midpoint.
    pub slice_size_px: usize,
    pub slice_spacing_mm: f64,
}

struct Inner {
    root: PathBuf,
    jobs: Mutex<HashMap<String, JobRecord>>,
    volumes: Mutex<HashMap<String, Arc<Volume4D>>>,
    study_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    next_job: AtomicU64,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        // job ids keep counting across restarts
        let first = fs::read_dir(root.join("_jobs"))
            .map(|d| {
                d.filter_map(|e| e.ok())
                    .filter_map(|e| e.file_name().to_string_lossy().strip_prefix("job-")?.parse::<u64>().ok())
                    .max()
                    .map_or(1, |m| m + 1)
            })
            .unwrap_or(1);
        Self(Arc::new(Inner {
            root,
            jobs: Mutex::new(HashMap::new()),
            volumes: Mutex::new(HashMap::new()),
            study_locks: Mutex::new(HashMap::new()),
            next_job: AtomicU64::new(first),
        }))
    }

    pub fn root(&self) -> &Path {
        &self.0.root
    }

    pub fn job(&self, id: &str) -> Option<JobRecord> {
        self.0.jobs.lock().unwrap().get(id).cloned()
    }

    fn set_job(&self, rec: JobRecord) {
        self.0.jobs.lock().unwrap().insert(rec.job_id.clone(), rec);
    }

    fn study_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = fs::read_dir(&self.0.root)
            .into_iter()
            .flatten()
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join(VOLUME_FILE).is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| !n.starts_with('_'))
            .collect();
        ids.sort();
        ids
    }

    fn study_dir(&self, id: &str) -> ApiResult<PathBuf> {
        if self.study_ids().iter().any(|s| s == id) {
            Ok(self.0.root.join(id))
        } else {
            Err(ApiError::not_found("study", id))
        }
    }

    fn volume(&self, id: &str) -> ApiResult<Arc<Volume4D>> {
        let dir = self.study_dir(id)?;
        if let Some(v) = self.0.volumes.lock().unwrap().get(id) {
            return Ok(v.clone());
        }
        let v = Arc::new(io::read_volume4d(&dir.join(VOLUME_FILE))?);
        self.0.volumes.lock().unwrap().insert(id.to_string(), v.clone());
        Ok(v)
    }

    fn posted_annotation_path(&self, id: &str) -> PathBuf {
        self.0.root.join("_annotations").join(format!("{}.json", id))
    }

    /// The posted annotation, else the one shipped with the study.
    fn annotation_path(&self, id: &str) -> ApiResult<Option<PathBuf>> {
        let posted = self.posted_annotation_path(id);
        if posted.is_file() {
            return Ok(Some(posted));
        }
        let own = self.study_dir(id)?.join(ANNOTATION_FILE);
        Ok(own.is_file().then_some(own))
    }

    fn study_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.0
            .study_locks
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_default()
            .clone()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/studies", get(list_studies))
        .route("/api/studies/{id}/meta", get(study_meta))
        .route("/api/studies/{id}/slice", get(slice_png))
        .route("/api/studies/{id}/annotation", post(post_annotation))
        .route("/api/studies/{id}/segment", post(post_segment))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/jobs/{id}/meshes/{frame}", get(get_mesh))
        .route("/api/jobs/{id}/volumes", get(get_volumes))
        .with_state(state)
}

pub async fn serve(port: u16, data_root: PathBuf) -> std::io::Result<()> {
    if !data_root.is_dir() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} is not a directory", data_root.display()),
        ));
    }
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    axum::serve(listener, router(AppState::new(data_root))).await
}

async fn list_studies(State(st): State<AppState>) -> ApiResult<Json<Vec<StudySummary>>> {
    let mut out = Vec::new();
    for id in st.study_ids() {
        let h = io::read_volume_header(&st.0.root.join(&id).join(VOLUME_FILE))?;
        out.push(StudySummary {
            has_annotation: st.annotation_path(&id)?.is_some(),
            id,
            frames: h.frames,
            dims: h.dims,
        });
    }
    Ok(Json(out))
}

fn parse_point(s: &str) -> Option<Vec3> {
    let v: Vec<f64> = s.split(',').map(|c| c.trim().parse().ok()).collect::<Option<_>>()?;
    (v.len() == 3).then(|| Vec3::new(v[0], v[1], v[2]))
}

/// Axis through the volume centre along z, half the z extent long.
fn default_axis(vol: &Volume4D) -> (Vec3, Vec3) {
    let e = vol.grid().extent();
    let c = e * 0.5;
    let d = Vec3::new(0.0, 0.0, e.z * 0.25);
    (c + d, c - d)
}

fn study_axis(st: &AppState, id: &str, vol: &Volume4D) -> ApiResult<(Vec3, Vec3, &'static str)> {
    match st.annotation_path(id)? {
        Some(p) => {
            let a: AnnotationFile = io::read_json(&p)?;
            let v = |p: [f64; 3]| Vec3::new(p[0], p[1], p[2]);
            Ok((v(a.apex_mm), v(a.base_mm), "annotation"))
        }
        None => {
            let (a, b) = default_axis(vol);
            Ok((a, b, "default"))
        }
    }
}

async fn study_meta(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<StudyMeta>> {
    let vol = st.volume(&id)?;
    let (apex, base, source) = study_axis(&st, &id, &vol)?;
    let plane = SlicePlane::covering(&AxisFrame::new(apex, base)?, 0.0, vol.grid());
    let g = vol.grid();
    Ok(Json(StudyMeta {
        id,
        dims: g.dims,
        spacing_mm: g.spacing,
        frames: vol.frame_count(),
        ed_index: vol.ed_index(),
        es_index: vol.es_index(),
        apex_mm: [apex.x, apex.y, apex.z],
        base_mm: [base.x, base.y, base.z],
        axis_source: source.to_string(),
        slice_size_px: plane.extent.0,
        slice_spacing_mm: plane.spacing,
    }))
}

#[derive(Deserialize)]
struct SliceQuery {
    frame: Option<usize>,
    angle: Option<f64>,
    format: Option<String>,
    /// `x,y,z` in mm; both must be given to override the study axis.
    apex: Option<String>,
    base: Option<String>,
}

pub fn encode_png8(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut enc = png::Encoder::new(&mut buf, width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().expect("in-memory PNG header");
    w.write_image_data(pixels).expect("in-memory PNG data");
    w.finish().expect("in-memory PNG");
    buf
}

async fn slice_png(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<SliceQuery>,
) -> ApiResult<Response> {
    if let Some(f) = q.format.as_deref() {
        if f != "png8" {
            return Err(ApiError::invalid("format=png8", format!("unsupported format `{}`", f)));
        }
    }
    let vol = st.volume(&id)?;
    let frame = q.frame.unwrap_or(vol.ed_index());
    if frame >= vol.frame_count() {
        return Err(ApiError::invalid(
            "frame-index",
            format!("frame {} of {}", frame, vol.frame_count()),
        ));
    }
    let angle = q.angle.unwrap_or(0.0);
    if !angle.is_finite() {
        return Err(ApiError::invalid("finite-angle", "angle must be finite"));
    }
    let (apex, base) = match (q.apex.as_deref(), q.base.as_deref()) {
        (Some(a), Some(b)) => match (parse_point(a), parse_point(b)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(ApiError::invalid("point-xyz", "apex and base must be `x,y,z`")),
        },
        (None, None) => {
            let (a, b, _) = study_axis(&st, &id, &vol)?;
            (a, b)
        }
        _ => return Err(ApiError::invalid("apex-and-base", "give both apex and base or neither")),
    };
    let axis = AxisFrame::new(apex, base)?;
    let plane = SlicePlane::covering(&axis, angle, vol.grid());
    let img = tokio::task::spawn_blocking(move || {
        let (w, h) = plane.extent;
        let e = vol.grid().extent();
        let f = vol.frame(frame);
        let mut px = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                // edge-clamped: pixels past the volume repeat its border
                let p = plane.pixel_position(x, y);
                let q = Vec3::new(p.x.clamp(0.0, e.x), p.y.clamp(0.0, e.y), p.z.clamp(0.0, e.z));
                px.push((f.sample(q).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        encode_png8(w, h, &px)
    })
    .await
    .expect("slice task");
    Ok(([(header::CONTENT_TYPE, "image/png")], img).into_response())
}

async fn post_annotation(State(st): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    st.study_dir(&id)?;
    let file: AnnotationFile =
        serde_json::from_slice(&body).map_err(|e| ApiError::invalid("json", e.to_string()))?;
    let ann: StudyAnnotation = file.validate()?;
    io::write_annotation(&ann, &st.posted_annotation_path(&id))?;
    Ok(Json(serde_json::json!({ "study": id, "contours": ann.contours().len() })))
}

#[derive(Deserialize)]
struct SegmentRequest {
    theta_d: Option<f64>,
}

async fn post_segment(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let dir = st.study_dir(&id)?;
    let req: SegmentRequest = if body.is_empty() {
        SegmentRequest { theta_d: None }
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::invalid("json", e.to_string()))?
    };
    let theta_d = req.theta_d.unwrap_or(5.0);
    lv4d_core::slicer::angle_count(theta_d, 180.0)?;
    let annotation = st
        .annotation_path(&id)?
        .ok_or_else(|| ApiError::invalid("annotation-present", format!("study `{}` has no annotation", id)))?;
    // validate now so a bad annotation fails the request, not the job
    io::read_annotation(&annotation)?;

    let job_id = format!("job-{:04}", st.0.next_job.fetch_add(1, Ordering::SeqCst));
    let out = st.0.root.join("_jobs").join(&job_id);
    let rec = JobRecord {
        job_id: job_id.clone(),
        study: id.clone(),
        theta_d,
        status: JobStatus::Pending,
        frames: None,
        out_dir: out.to_string_lossy().into_owned(),
        error: None,
    };
    st.set_job(rec.clone());

    let truth = dir.join(TRUTH_DIR);
    let args = SegmentArgs {
        volume: dir.join(VOLUME_FILE),
        annotation,
        theta_d,
        config: None,
        out,
        truth: truth.is_dir().then_some(truth),
    };
    let lock = st.study_lock(&id);
    let task_state = st.clone();
    tokio::spawn(async move {
        let _guard = lock.lock().await;
        let mut rec = task_state.job(&job_id).expect("job registered");
        rec.status = JobStatus::Running;
        task_state.set_job(rec.clone());
        let result = tokio::task::spawn_blocking(move || {
            // keep the annotation the job actually used next to its outputs
            fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
            fs::copy(&args.annotation, args.out.join(ANNOTATION_FILE)).map_err(|e| CliError::io(&args.annotation, e))?;
            commands::cmd_segment(&args).map(|o| o.segmentation.meshes.len())
        })
        .await;
        match result {
            Ok(Ok(frames)) => {
                rec.status = JobStatus::Done;
                rec.frames = Some(frames);
            }
            Ok(Err(e)) => {
                rec.status = JobStatus::Failed;
                rec.error = Some(ErrorBody {
                    error: e.to_string(),
                    rule: e.rule().to_string(),
                });
            }
            Err(e) => {
                rec.status = JobStatus::Failed;
                rec.error = Some(ErrorBody {
                    error: e.to_string(),
                    rule: "job-panicked".into(),
                });
            }
        }
        task_state.set_job(rec);
    });
    Ok((StatusCode::ACCEPTED, Json(rec)))
}

async fn get_job(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<JobRecord>> {
    st.job(&id).map(Json).ok_or_else(|| ApiError::not_found("job", &id))
}

fn finished_job(st: &AppState, id: &str) -> ApiResult<JobRecord> {
    let rec = st.job(id).ok_or_else(|| ApiError::not_found("job", id))?;
    if rec.status != JobStatus::Done {
        return Err(ApiError {
            status: StatusCode::CONFLICT,
            rule: "job-done",
            detail: format!("job `{}` is {:?}", id, rec.status),
        });
    }
    Ok(rec)
}

async fn get_mesh(State(st): State<AppState>, UrlPath((id, frame)): UrlPath<(String, usize)>) -> ApiResult<Response> {
    let rec = finished_job(&st, &id)?;
    if frame >= rec.frames.unwrap_or(0) {
        return Err(ApiError::not_found("frame", &frame.to_string()));
    }
    let path = Path::new(&rec.out_dir).join(MESH_DIR).join(io::frame_mesh_name(frame));
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(([(header::CONTENT_TYPE, "text/plain")], text).into_response())
}

async fn get_volumes(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let rec = finished_job(&st, &id)?;
    let path = Path::new(&rec.out_dir).join("volumes.csv");
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], text).into_response())
}
