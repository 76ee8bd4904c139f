//! HTTP API. Handlers only read job snapshots; a single worker thread owns
//! job execution and is the only writer of job state.
//!
//! ```text
//! <data root>/generator.misockpt   generator served by this instance
//! <data root>/bank.json            its edit bank
//! <data root>/jobs/<id>/job.json   JobRecord; the directory is the result dir
//! ```

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use makeitso::editing::{load_bank_for, save_bank, EditBank};
use makeitso::generator::{load_checkpoint, save_checkpoint, GeneratorParams};
use makeitso::harness::{toy_bank, toy_generator, REPORT_SCHEMA_VERSION};
use makeitso::inversion::{InversionConfig, MANIFEST_VERSION};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Result, ServiceError};
use crate::images::{encode_png, ingest, Ingested};
use crate::results::{read_result_manifest, run_invert, InvertOptions, ResultSnapshot, SourceInfo, RECONSTRUCTION_PNG, TARGET_PNG};

pub const API_VERSION: u32 = 1;
pub const JOB_SCHEMA_VERSION: u32 = 1;

pub const GENERATOR_FILE: &str = "generator.misockpt";
pub const BANK_FILE: &str = "bank.json";
pub const JOB_FILE: &str = "job.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Invert,
    Evaluate,
    Ablate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub iteration: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub progress: Progress,
    pub config: InversionConfig,
    pub source: SourceInfo,
    /// File names inside the job directory.
    pub artifacts: Vec<String>,
    pub error: Option<String>,
}

struct Inner {
    root: PathBuf,
    generator: Arc<GeneratorParams>,
    bank: Arc<EditBank>,
    jobs: RwLock<HashMap<String, JobRecord>>,
    snapshots: Mutex<HashMap<String, Arc<ResultSnapshot>>>,
    queue: Mutex<mpsc::Sender<String>>,
    pending: Mutex<Option<mpsc::Receiver<String>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Open (or initialize) a data root and start the worker. A missing
    /// generator or bank is created from the toy presets. Jobs left queued
    /// by a previous process are resumed; jobs left running are failed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let state = Self::open_idle(root)?;
        state.start_worker();
        Ok(state)
    }

    /// Like [`AppState::open`] but jobs stay queued until
    /// [`AppState::start_worker`] is called.
    pub fn open_idle(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(root.join("jobs"))?;
        let gpath = root.join(GENERATOR_FILE);
        let generator = if gpath.is_file() {
            load_checkpoint(&gpath)?
        } else {
            let g = toy_generator()?;
            save_checkpoint(&g, &gpath)?;
            g
        };
        let bpath = root.join(BANK_FILE);
        let bank = if bpath.is_file() {
            load_bank_for(&bpath, &generator)?
        } else {
            let b = toy_bank(&generator, 8)?;
            save_bank(&b, &bpath)?;
            b
        };

        let mut jobs = HashMap::new();
        let mut resume = Vec::new();
        for entry in std::fs::read_dir(root.join("jobs"))? {
            let path = entry?.path().join(JOB_FILE);
            let Ok(text) = std::fs::read_to_string(&path) else { continue };
            let Ok(mut rec) = serde_json::from_str::<JobRecord>(&text) else { continue };
            match rec.state {
                JobState::Queued => resume.push(rec.id.clone()),
                JobState::Running => {
                    rec.state = JobState::Failed;
                    rec.error = Some("interrupted by a service restart".into());
                    write_record(&root, &rec)?;
                }
                _ => {}
            }
            jobs.insert(rec.id.clone(), rec);
        }

        let (tx, rx) = mpsc::channel();
        let state = AppState(Arc::new(Inner {
            root,
            generator: Arc::new(generator),
            bank: Arc::new(bank),
            jobs: RwLock::new(jobs),
            snapshots: Mutex::new(HashMap::new()),
            queue: Mutex::new(tx),
            pending: Mutex::new(Some(rx)),
        }));
        for id in resume {
            state.enqueue(id);
        }
        Ok(state)
    }

    /// Spawn the job worker; later calls do nothing.
    pub fn start_worker(&self) {
        if let Some(rx) = self.0.pending.lock().unwrap().take() {
            let worker = self.clone();
            std::thread::spawn(move || worker.work(rx));
        }
    }

    pub fn root(&self) -> &Path {
        &self.0.root
    }

    pub fn job(&self, id: &str) -> Option<JobRecord> {
        self.0.jobs.read().unwrap().get(id).cloned()
    }

    fn job_dir(&self, id: &str) -> PathBuf {
        self.0.root.join("jobs").join(id)
    }

    fn enqueue(&self, id: String) {
        let _ = self.0.queue.lock().unwrap().send(id);
    }

    /// Validate and queue an inversion of `image`.
    pub fn create_job(&self, image: &[u8], options: &InvertOptions) -> Result<JobRecord> {
        let config = options.config()?;
        let g = &self.0.generator;
        let target = ingest(image, g.resolution())?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.job_dir(&id);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(TARGET_PNG), encode_png(&target.image)?)?;
        let rec = JobRecord {
            id: id.clone(),
            kind: JobKind::Invert,
            state: JobState::Queued,
            progress: Progress {
                iteration: 0,
                total: config.total_iters,
            },
            config,
            source: SourceInfo {
                original_width: target.original_width,
                original_height: target.original_height,
                resolution: g.resolution(),
            },
            artifacts: vec![TARGET_PNG.into()],
            error: None,
        };
        write_record(&self.0.root, &rec)?;
        self.0.jobs.write().unwrap().insert(id.clone(), rec.clone());
        self.enqueue(id);
        Ok(rec)
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut JobRecord)) -> Option<JobRecord> {
        let mut jobs = self.0.jobs.write().unwrap();
        let rec = jobs.get_mut(id)?;
        f(rec);
        Some(rec.clone())
    }

    /// Apply a state change, persisting it before other readers can see it.
    fn transition(&self, id: &str, f: impl FnOnce(&mut JobRecord)) -> Result<()> {
        let mut jobs = self.0.jobs.write().unwrap();
        let Some(rec) = jobs.get_mut(id) else { return Ok(()) };
        let mut next = rec.clone();
        f(&mut next);
        let written = write_record(&self.0.root, &next);
        *rec = next;
        written
    }

    fn work(&self, rx: mpsc::Receiver<String>) {
        while let Ok(id) = rx.recv() {
            if self.transition(&id, |r| r.state = JobState::Running).is_err() {
                continue;
            }
            let Some(rec) = self.job(&id) else { continue };
            let outcome = self.execute(&rec);
            let dir = self.job_dir(&id);
            let _ = self.transition(&id, |r| match outcome {
                Ok(()) => {
                    r.state = JobState::Done;
                    r.progress.iteration = r.progress.total;
                    r.artifacts = list_artifacts(&dir);
                }
                Err(e) => {
                    r.state = JobState::Failed;
                    r.error = Some(e.to_string());
                }
            });
        }
    }

    fn execute(&self, rec: &JobRecord) -> Result<()> {
        let dir = self.job_dir(&rec.id);
        let image = ingest(&std::fs::read(dir.join(TARGET_PNG))?, rec.source.resolution)?;
        let target = Ingested {
            image: image.image,
            original_width: rec.source.original_width,
            original_height: rec.source.original_height,
        };
        run_invert(&self.0.generator, &self.0.bank, &target, &rec.config, &dir, |done, _| {
            self.update(&rec.id, |r| r.progress.iteration = r.progress.iteration.max(done));
        })?;
        Ok(())
    }

    /// Snapshot of a finished job, or the error that explains why not.
    pub fn finished(&self, id: &str) -> Result<Arc<ResultSnapshot>> {
        let rec = self.job(id).ok_or_else(|| ServiceError::NotFound(format!("unknown job `{id}`")))?;
        match rec.state {
            JobState::Done => {}
            JobState::Failed => {
                return Err(ServiceError::Failed(format!(
                    "job `{id}` failed: {}",
                    rec.error.unwrap_or_default()
                )))
            }
            s => return Err(ServiceError::Conflict(format!("job `{id}` is {s:?}, not done").to_lowercase())),
        }
        if let Some(s) = self.0.snapshots.lock().unwrap().get(id) {
            return Ok(s.clone());
        }
        let snap = Arc::new(ResultSnapshot::load(&self.job_dir(id))?);
        self.0.snapshots.lock().unwrap().insert(id.to_string(), snap.clone());
        Ok(snap)
    }
}

fn write_record(root: &Path, rec: &JobRecord) -> Result<()> {
    let dir = root.join("jobs").join(&rec.id);
    std::fs::create_dir_all(&dir)?;
    let text = serde_json::to_string_pretty(rec).map_err(|e| ServiceError::Io(e.into()))?;
    let tmp = dir.join("job.json.tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(tmp, dir.join(JOB_FILE))?;
    Ok(())
}

fn list_artifacts(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map(|it| {
            it.filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n != JOB_FILE)
                .collect()
        })
        .unwrap_or_default();
    names.sort();
    names
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::Usage { .. } => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self.to_json())).into_response()
    }
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/version", get(version))
        .route("/api/jobs", post(create_job))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/jobs/{id}/image", get(get_image))
        .route("/api/banks", get(get_banks))
        .route("/api/results/{id}/edit", post(post_edit))
        .route("/api/results/{id}/manifest", get(get_manifest))
        .layer(DefaultBodyLimit::max(32 * 1024 * 1024))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, root: PathBuf) -> Result<()> {
    let state = AppState::open(root)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

async fn version() -> Json<serde_json::Value> {
    Json(json!({
        "api_version": API_VERSION,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "schemas": {
            "job": JOB_SCHEMA_VERSION,
            "run_manifest": MANIFEST_VERSION,
            "report": REPORT_SCHEMA_VERSION,
        }
    }))
}

const OPTION_FIELDS: [&str; 5] = ["iters", "beta", "ema_interval", "replay_n", "seed"];

async fn create_job(State(state): State<AppState>, multipart: Result<Multipart, axum::extract::multipart::MultipartRejection>) -> Result<Response> {
    let mut multipart = multipart.map_err(|e| ServiceError::usage(format!("expected multipart/form-data: {e}")))?;
    let mut image: Option<Bytes> = None;
    let mut options = serde_json::Map::new();
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ServiceError::usage(format!("malformed multipart body: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        if name == "image" {
            if let Some(ct) = field.content_type() {
                if !matches!(ct, "image/png" | "image/jpeg" | "application/octet-stream") {
                    return Err(ServiceError::flag("image", format!("unsupported content type `{ct}`")));
                }
            }
            image = Some(field.bytes().await.map_err(|e| ServiceError::usage(e.to_string()))?);
        } else if OPTION_FIELDS.contains(&name.as_str()) {
            let text = field.text().await.map_err(|e| ServiceError::usage(e.to_string()))?;
            let value: serde_json::Value = serde_json::from_str(text.trim())
                .map_err(|_| ServiceError::flag(&name, format!("`{name}` must be a number, got `{text}`")))?;
            options.insert(name, value);
        } else {
            return Err(ServiceError::flag(&name, format!("unknown form field `{name}`")));
        }
    }
    let image = image.ok_or_else(|| ServiceError::flag("image", "missing `image` file field"))?;
    let options: InvertOptions = serde_json::from_value(serde_json::Value::Object(options))
        .map_err(|e| ServiceError::usage(format!("invalid options: {e}")))?;
    let rec = tokio::task::spawn_blocking(move || state.create_job(&image, &options))
        .await
        .map_err(|e| ServiceError::Failed(e.to_string()))??;
    Ok((StatusCode::ACCEPTED, Json(rec)).into_response())
}

async fn get_job(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<JobRecord>> {
    state
        .job(&id)
        .map(Json)
        .ok_or_else(|| ServiceError::NotFound(format!("unknown job `{id}`")))
}

#[derive(Deserialize)]
struct ImageQuery {
    kind: Option<String>,
}

async fn get_image(State(state): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Query<ImageQuery>) -> Result<Response> {
    let rec = state.job(&id).ok_or_else(|| ServiceError::NotFound(format!("unknown job `{id}`")))?;
    let file = match q.kind.as_deref() {
        Some("target") => TARGET_PNG,
        Some("reconstruction") => {
            state.finished(&rec.id)?;
            RECONSTRUCTION_PNG
        }
        other => {
            return Err(ServiceError::flag(
                "kind",
                format!("kind must be `target` or `reconstruction`, got {other:?}"),
            ))
        }
    };
    Ok(png(std::fs::read(state.job_dir(&rec.id).join(file))?))
}

#[derive(Serialize)]
struct DirectionInfo<'a> {
    name: &'a str,
    default_strength: f64,
    strength_range: [f64; 2],
}

async fn get_banks(State(state): State<AppState>) -> Json<serde_json::Value> {
    let bank = &state.0.bank;
    let dirs: Vec<DirectionInfo> = bank
        .directions
        .iter()
        .map(|d| DirectionInfo {
            name: &d.name,
            default_strength: d.default_strength,
            strength_range: d.strength_range,
        })
        .collect();
    Json(json!({ "banks": [{ "name": "default", "arch_hash": bank.arch_hash, "directions": dirs }] }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    pub direction: String,
    pub strength: f64,
}

async fn post_edit(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<EditRequest>, JsonRejection>,
) -> Result<Response> {
    let snap = state.finished(&id)?;
    let Json(req) = body.map_err(|e| ServiceError::usage(format!("edit body must be {{direction, strength}}: {}", e.body_text())))?;
    let bytes = tokio::task::spawn_blocking(move || snap.render_edit_png(&req.direction, req.strength))
        .await
        .map_err(|e| ServiceError::Failed(e.to_string()))??;
    Ok(png(bytes))
}

async fn get_manifest(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response> {
    state.finished(&id)?;
    let m = read_result_manifest(&state.job_dir(&id))?;
    Ok(Json(m).into_response())
}
