//! Request and response bodies shared by the CLI and the service, so both
//! produce the same JSON for the same cache.

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use scenemem::cache::{FrameId, SceneCache};
use scenemem::contextpack::{assemble_plan, latent_frame_count, ContextLayout, DEFAULT_PATCH};
use scenemem::geometry::{Camera, CameraJson, GeometryError};
use scenemem::report::TrajectoryDoc;
use scenemem::retrieval::{coverage, select_greedy, visibility, CellMask, RetrievalConfig, RetrievalError};
use scenemem::warp::{warp_retrieved, CanonicalCoordMap, WarpError};

/// Spatial downsampling from pixels to latent cells.
pub const LATENT_STRIDE: u32 = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VisibilityRequest {
    pub camera: CameraJson,
    #[serde(default)]
    pub n_s: Option<usize>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub per_cell: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanTokens {
    pub total: u64,
    pub filled: u64,
}

/// Covered target cells of the selection as alternating run lengths,
/// starting with an uncovered run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerCell {
    pub rows: u32,
    pub cols: u32,
    pub runs: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResponse {
    pub frame_ids: Vec<FrameId>,
    pub phi: Vec<u64>,
    pub selected: Vec<FrameId>,
    /// Share of the cells any cached frame covers.
    pub coverage: f64,
    /// Share of all target cells.
    pub coverage_of_target: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_tokens: Option<PlanTokens>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_cell: Option<PerCell>,
}

fn plan_tokens(cache: &SceneCache, selected: &[FrameId], target: &Camera) -> Option<PlanTokens> {
    let layout = ContextLayout::default();
    let k = &target.intrinsics;
    let history = latent_frame_count(cache.frame_count() as u64).unwrap_or(0);
    let capacity = layout.capacity(scenemem::contextpack::SlotKind::Spatial) as usize;
    let retrieved = &selected[..selected.len().min(capacity)];
    let plan = assemble_plan(history, retrieved, &layout, k.height / LATENT_STRIDE, k.width / LATENT_STRIDE, DEFAULT_PATCH)
        .ok()?;
    Some(PlanTokens { total: plan.total_tokens, filled: plan.filled_tokens })
}

/// Visibility scores, greedy selection and coverage for one camera.
/// An empty cache gives an empty selection with zero coverage.
pub fn retrieve(
    cache: &SceneCache,
    target: &Camera,
    cfg: &RetrievalConfig,
    per_cell: bool,
) -> Result<RetrievalResponse, RetrievalError> {
    cfg.validate()?;
    if cache.is_empty() {
        return Ok(RetrievalResponse {
            frame_ids: vec![],
            phi: vec![],
            selected: vec![],
            coverage: 0.0,
            coverage_of_target: 0.0,
            plan_tokens: plan_tokens(cache, &[], target),
            per_cell: None,
        });
    }
    let vis = visibility(cache, target, cfg)?;
    let selected = select_greedy(&vis, cfg.n_s);
    let cov = coverage(&selected, &vis);
    let per_cell = per_cell.then(|| {
        let mut union = CellMask::new(vis.cell_count());
        for id in &selected {
            if let Some(m) = vis.mask_of(*id) {
                union.union_with(m);
            }
        }
        PerCell { rows: vis.grid_rows, cols: vis.grid_cols, runs: union.to_runs() }
    });
    Ok(RetrievalResponse {
        plan_tokens: plan_tokens(cache, &selected, target),
        frame_ids: vis.frame_ids,
        phi: vis.phi,
        selected,
        coverage: cov.of_candidates,
        coverage_of_target: cov.of_target,
        per_cell,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WarpRequest {
    pub camera: CameraJson,
    pub frame_ids: Vec<FrameId>,
    #[serde(default)]
    pub n_s: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpSlot {
    pub slot: usize,
    /// `None` for padding slots.
    pub frame_id: Option<FrameId>,
    pub valid: usize,
    /// The slot's correspondence map file, base64 encoded.
    pub lyc1: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpResponse {
    pub width: u32,
    pub height: u32,
    pub n_s: usize,
    pub maps: Vec<WarpSlot>,
}

pub fn warp(
    cache: &SceneCache,
    target: &Camera,
    frame_ids: &[FrameId],
    n_s: usize,
) -> Result<(Vec<CanonicalCoordMap>, WarpResponse), WarpError> {
    let maps = warp_retrieved(cache, frame_ids, target, n_s)?;
    let slots = maps
        .iter()
        .enumerate()
        .map(|(slot, m)| WarpSlot {
            slot,
            frame_id: frame_ids.get(slot).copied(),
            valid: m.valid_count(),
            lyc1: base64::engine::general_purpose::STANDARD.encode(m.encode()),
        })
        .collect();
    let k = &target.intrinsics;
    Ok((maps, WarpResponse { width: k.width, height: k.height, n_s, maps: slots }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameInfo {
    pub id: FrameId,
    pub camera: CameraJson,
    pub points: usize,
}

pub fn frame_list(cache: &SceneCache) -> Vec<FrameInfo> {
    cache
        .frames()
        .iter()
        .map(|f| FrameInfo { id: f.frame_id, camera: CameraJson::from(&f.camera), points: f.cloud.valid_count() })
        .collect()
}

/// `u32` count followed by `f32` xyz triples, little-endian.
pub fn point_blob(cache: &SceneCache, id: FrameId) -> Result<Vec<u8>, scenemem::cache::CacheError> {
    let f = cache.get_frame(id)?;
    let n = f.cloud.valid_count();
    let mut out = Vec::with_capacity(4 + 12 * n);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for p in f.cloud.iter_valid() {
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum CameraInputError {
    #[error("not a camera, camera list or trajectory document: {0}")]
    Parse(String),
    #[error("camera {index}: {source}")]
    Invalid { index: usize, source: GeometryError },
    #[error(transparent)]
    Doc(#[from] scenemem::report::ReportError),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CameraInput {
    Doc(TrajectoryDoc),
    Wrapped { camera: CameraJson },
    One(CameraJson),
    Many(Vec<CameraJson>),
}

/// Parses a camera, `{"camera": ..}`, a camera array or a trajectory document.
pub fn parse_cameras(text: &str) -> Result<Vec<Camera>, CameraInputError> {
    let input: CameraInput = serde_json::from_str(text).map_err(|e| CameraInputError::Parse(e.to_string()))?;
    let list = match input {
        CameraInput::Doc(doc) => return Ok(doc.cameras()?),
        CameraInput::Wrapped { camera } | CameraInput::One(camera) => vec![camera],
        CameraInput::Many(v) => v,
    };
    list.iter()
        .enumerate()
        .map(|(index, c)| Camera::try_from(c).map_err(|source| CameraInputError::Invalid { index, source }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use scenemem::geometry::{Intrinsics, Pose};

    fn cam_json() -> CameraJson {
        let k = Intrinsics::from_hfov(60.0, 32, 24).unwrap();
        CameraJson::from(&Camera::new(Pose::identity(), k))
    }

    #[test]
    fn camera_inputs_of_every_shape() {
        let one = serde_json::to_string(&cam_json()).unwrap();
        assert_eq!(parse_cameras(&one).unwrap().len(), 1);
        let wrapped = format!("{{\"camera\": {one}}}");
        assert_eq!(parse_cameras(&wrapped).unwrap().len(), 1);
        let many = format!("[{one}, {one}, {one}]");
        assert_eq!(parse_cameras(&many).unwrap().len(), 3);
        let cams = parse_cameras(&many).unwrap();
        let doc = serde_json::to_string(&TrajectoryDoc::from_cameras("t", &cams)).unwrap();
        assert_eq!(parse_cameras(&doc).unwrap(), cams);
        assert!(matches!(parse_cameras("{\"x\": 1}"), Err(CameraInputError::Parse(_))));
        let mut bad = cam_json();
        bad.r[4] = 3.0;
        let bad = format!("[{one}, {}]", serde_json::to_string(&bad).unwrap());
        assert!(matches!(parse_cameras(&bad), Err(CameraInputError::Invalid { index: 1, .. })));
    }

    #[test]
    fn empty_cache_retrieves_nothing() {
        let cache = SceneCache::default();
        let cam = Camera::try_from(&cam_json()).unwrap();
        let r = retrieve(&cache, &cam, &RetrievalConfig::default(), true).unwrap();
        assert!(r.selected.is_empty() && r.phi.is_empty());
        assert_eq!(r.coverage, 0.0);
    }
}
