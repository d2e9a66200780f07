//! Trajectory documents, retrieval metrics over a trajectory, and the
//! synthetic end-to-end simulation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{CacheError, FrameId, SceneCache};
use crate::geometry::{Camera, CameraJson, GeometryError, Intrinsics};
use crate::retrieval::{coverage, greedy_max_coverage, visibility, RetrievalConfig, RetrievalError};
use crate::synth::{make_trajectory, AnalyticScene, SynthError, TrajectorySpec};

/// Largest `n_s` in the coverage table.
pub const REPORT_MAX_NS: usize = 8;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("keyframe {index}: {source}")]
    BadKeyframe { index: usize, source: GeometryError },
    #[error("invalid trajectory id {0:?} (use 1-64 of [A-Za-z0-9_-])")]
    BadId(String),
    #[error("invalid simulation: {0}")]
    BadSimulation(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    #[serde(flatten)]
    pub camera: CameraJson,
    /// Seconds since the start of the recording.
    #[serde(default)]
    pub timestamp: f64,
}

/// A recorded camera path. Times are Unix seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDoc {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub keyframes: Vec<Keyframe>,
    #[serde(default)]
    pub created: u64,
    #[serde(default)]
    pub modified: u64,
}

pub fn valid_doc_id(id: &str) -> bool {
    (1..=64).contains(&id.len()) && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

impl TrajectoryDoc {
    pub fn from_cameras(id: impl Into<String>, cameras: &[Camera]) -> Self {
        TrajectoryDoc {
            id: id.into(),
            name: String::new(),
            keyframes: cameras
                .iter()
                .enumerate()
                .map(|(i, c)| Keyframe { camera: CameraJson::from(c), timestamp: i as f64 })
                .collect(),
            created: 0,
            modified: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        if !valid_doc_id(&self.id) {
            return Err(ReportError::BadId(self.id.clone()));
        }
        self.cameras().map(|_| ())
    }

    pub fn cameras(&self) -> Result<Vec<Camera>, ReportError> {
        if self.keyframes.is_empty() {
            return Err(ReportError::EmptyTrajectory);
        }
        self.keyframes
            .iter()
            .enumerate()
            .map(|(index, k)| Camera::try_from(&k.camera).map_err(|source| ReportError::BadKeyframe { index, source }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub n_s: usize,
    /// Mean over trajectory steps of the greedy prefix coverage.
    pub coverage: f64,
    /// Increase over the previous row (over zero for `n_s = 1`).
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    /// Visible point count per cached frame, in frame id order.
    pub phi: Vec<u64>,
    pub selected: Vec<FrameId>,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisitRecall {
    /// Frames with id below this count as early.
    pub early_window: usize,
    /// Early frames selected at the final step.
    pub early_selected: Vec<FrameId>,
    pub recalled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub frames: usize,
    pub steps: usize,
    pub subsample_d: u32,
    pub delta: f64,
    pub n_s: usize,
    pub coverage_table: Vec<CoverageRow>,
    pub per_step: Vec<StepMetrics>,
    pub revisit_recall: RevisitRecall,
}

impl Report {
    pub fn is_monotone(&self) -> bool {
        self.coverage_table.windows(2).all(|w| w[1].coverage >= w[0].coverage)
    }
}

/// Retrieval metrics of `targets` against `cache`.
///
/// Coverage is measured against the cells any cached frame covers, so a target
/// looking partly at empty space can still reach 1.
pub fn coverage_report(cache: &SceneCache, targets: &[Camera], cfg: &RetrievalConfig) -> Result<Report, ReportError> {
    if targets.is_empty() {
        return Err(ReportError::EmptyTrajectory);
    }
    let mut sums = [0.0f64; REPORT_MAX_NS];
    let mut per_step = Vec::with_capacity(targets.len());
    for (step, target) in targets.iter().enumerate() {
        let vis = visibility(cache, target, cfg)?;
        let picks: Vec<FrameId> =
            greedy_max_coverage(&vis.masks, REPORT_MAX_NS).into_iter().map(|i| vis.frame_ids[i]).collect();
        for (n, sum) in sums.iter_mut().enumerate() {
            *sum += coverage(&picks[..picks.len().min(n + 1)], &vis).of_candidates;
        }
        let selected = picks[..picks.len().min(cfg.n_s)].to_vec();
        let cov = coverage(&selected, &vis).of_candidates;
        per_step.push(StepMetrics { step, phi: vis.phi, selected, coverage: cov });
    }
    let mut coverage_table = Vec::with_capacity(REPORT_MAX_NS);
    let mut prev = 0.0;
    for (n, sum) in sums.iter().enumerate() {
        let c = sum / targets.len() as f64;
        coverage_table.push(CoverageRow { n_s: n + 1, coverage: c, gain: c - prev });
        prev = c;
    }

    let early_window = cache.frame_count().div_ceil(10).max(1);
    let last = per_step.last().expect("targets is nonempty");
    let early_selected: Vec<FrameId> = last.selected.iter().copied().filter(|id| (*id as usize) < early_window).collect();
    Ok(Report {
        frames: cache.frame_count(),
        steps: targets.len(),
        subsample_d: cache.subsample(),
        delta: cfg.delta,
        n_s: cfg.n_s,
        coverage_table,
        per_step,
        revisit_recall: RevisitRecall { early_window, recalled: !early_selected.is_empty(), early_selected },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCamera {
    pub hfov_deg: f64,
    pub width: u32,
    pub height: u32,
}

/// Mesh options of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMesh {
    pub levels: Vec<f64>,
    pub near_radius: f64,
    #[serde(default)]
    pub decimate_to: Option<usize>,
}

/// `simulate` input: a scene, a trajectory and how to split it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub scene: AnalyticScene,
    pub trajectory: TrajectorySpec,
    pub camera: SimCamera,
    #[serde(default = "default_subsample")]
    pub subsample_d: u32,
    /// Poses ingested into the cache; the rest become retrieval targets.
    /// Defaults to the first half.
    #[serde(default)]
    pub ingest: Option<usize>,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub mesh: Option<SimMesh>,
}

fn default_subsample() -> u32 {
    crate::cache::DEFAULT_SUBSAMPLE
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub cache: SceneCache,
    pub targets: Vec<Camera>,
}

/// Renders the first `count` poses of the spec's trajectory into a cache and
/// returns it with every trajectory camera.
pub fn render_cache(spec: &SimulationSpec, count: usize) -> Result<(SceneCache, Vec<Camera>), ReportError> {
    spec.scene.validate()?;
    let k = Intrinsics::from_hfov(spec.camera.hfov_deg, spec.camera.width, spec.camera.height)?;
    let cameras = make_trajectory(&spec.trajectory, k)?.cameras;
    if count == 0 || count > cameras.len() {
        return Err(ReportError::BadSimulation(format!("cannot ingest {count} of {} poses", cameras.len())));
    }
    let mut cache = SceneCache::new(spec.subsample_d)?;
    for cam in &cameras[..count] {
        let depth = spec.scene.render_depth(&cam.pose, &cam.intrinsics);
        cache.insert_frame(depth, cam.pose, cam.intrinsics, None)?;
    }
    Ok((cache, cameras))
}

/// Caches the ingested part of the trajectory; the remaining poses are the targets.
pub fn simulate(spec: &SimulationSpec) -> Result<Simulation, ReportError> {
    spec.scene.validate()?;
    let k = Intrinsics::from_hfov(spec.camera.hfov_deg, spec.camera.width, spec.camera.height)?;
    let n = make_trajectory(&spec.trajectory, k)?.len();
    let ingest = spec.ingest.unwrap_or(n / 2);
    if ingest == 0 || ingest >= n {
        return Err(ReportError::BadSimulation(format!(
            "ingest count {ingest} must leave at least one cached frame and one target out of {n} poses"
        )));
    }
    let (cache, mut cameras) = render_cache(spec, ingest)?;
    let targets = cameras.split_off(ingest);
    Ok(Simulation { cache, targets })
}
