//! Per-frame 3D cache.
//!
//! Every inserted frame keeps its own depth raster, camera and a subsampled
//! world-space point grid. Frames are never fused into a shared point set;
//! retrieval and warping always work against individual frames.
//!
//! On disk a cache is a directory holding `manifest.json`, one
//! `depth_<id>.lyd` raster per frame and optionally `rgb_<id>.png`.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{unproject_unchecked, Camera, CameraJson, DepthMap, GeometryError, Intrinsics, Pose};

pub const DEFAULT_SUBSAMPLE: u32 = 8;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "scenemem-cache";
pub const MANIFEST_VERSION: u32 = 1;
pub const DEPTH_MAGIC: &[u8; 4] = b"LYD1";

pub type FrameId = u64;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("depth is {depth_w}x{depth_h} but intrinsics expect {k_w}x{k_h}")]
    DimensionMismatch { depth_w: u32, depth_h: u32, k_w: u32, k_h: u32 },
    #[error("frame {0} not found")]
    NotFound(FrameId),
    #[error("subsample factor must be at least 1")]
    InvalidSubsample,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: file listed in manifest does not exist")]
    MissingFile { path: PathBuf },
    #[error("corrupt manifest: {0}")]
    Manifest(String),
    #[error("unsupported cache version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("{path}: bad magic, not a LYD1 depth raster")]
    BadMagic { path: PathBuf },
    #[error("{path}: truncated raster ({got} of {expected} bytes)")]
    Truncated { path: PathBuf, expected: usize, got: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CacheError + '_ {
    move |source| CacheError::Io { path: path.to_path_buf(), source }
}

/// Subsampled world-space points, `rows x cols`, one per `d x d` block.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGrid {
    rows: u32,
    cols: u32,
    points: Vec<Vector3<f64>>,
    valid: Vec<bool>,
}

impl PointGrid {
    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> Option<&Vector3<f64>> {
        let i = row as usize * self.cols as usize + col as usize;
        self.valid[i].then(|| &self.points[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Valid points in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = &Vector3<f64>> + '_ {
        self.points.iter().zip(&self.valid).filter_map(|(p, v)| v.then_some(p))
    }

    /// Valid points with their `(row, col)` cell.
    pub fn iter_cells(&self) -> impl Iterator<Item = (u32, u32, &Vector3<f64>)> + '_ {
        let cols = self.cols;
        self.points
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|(_, (_, v))| **v)
            .map(move |(i, (p, _))| ((i / cols as usize) as u32, (i % cols as usize) as u32, p))
    }

    /// Cell `(r, c)` samples pixel `(c*d, r*d)`; trailing partial blocks are dropped.
    pub fn from_depth(depth: &DepthMap, pose: &Pose, k: &Intrinsics, d: u32) -> PointGrid {
        let rows = depth.height() / d;
        let cols = depth.width() / d;
        let n = rows as usize * cols as usize;
        let mut points = Vec::with_capacity(n);
        let mut valid = Vec::with_capacity(n);
        for r in 0..rows {
            for c in 0..cols {
                let (px, py) = (c * d, r * d);
                match depth.valid(px, py) {
                    Some(z) => {
                        points.push(unproject_unchecked(px as f64 + 0.5, py as f64 + 0.5, z as f64, pose, k));
                        valid.push(true);
                    }
                    None => {
                        points.push(Vector3::zeros());
                        valid.push(false);
                    }
                }
            }
        }
        PointGrid { rows, cols, points, valid }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: FrameId,
    pub camera: Camera,
    pub depth: Arc<DepthMap>,
    pub cloud: PointGrid,
    /// Handle to the frame's image payload (a PNG path).
    pub rgb_ref: Option<PathBuf>,
}

impl FrameRecord {
    pub fn pose(&self) -> &Pose {
        &self.camera.pose
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.camera.intrinsics
    }
}

/// Ordered per-frame store. Frame ids start at 0 (the anchor) and increase by one.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneCache {
    frames: Vec<FrameRecord>,
    subsample_d: u32,
    scene_scale: f64,
}

impl Default for SceneCache {
    fn default() -> Self {
        SceneCache { frames: Vec::new(), subsample_d: DEFAULT_SUBSAMPLE, scene_scale: 1.0 }
    }
}

impl SceneCache {
    pub fn new(subsample_d: u32) -> Result<Self, CacheError> {
        if subsample_d == 0 {
            return Err(CacheError::InvalidSubsample);
        }
        Ok(SceneCache { subsample_d, ..Default::default() })
    }

    pub fn subsample(&self) -> u32 {
        self.subsample_d
    }

    pub const fn anchor_id(&self) -> FrameId {
        0
    }

    /// Median valid depth of the anchor frame; 1.0 until an anchor with
    /// valid depth exists.
    pub fn scene_scale(&self) -> f64 {
        self.scene_scale
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn get_frame(&self, id: FrameId) -> Result<&FrameRecord, CacheError> {
        self.frames
            .binary_search_by_key(&id, |f| f.frame_id)
            .map(|i| &self.frames[i])
            .map_err(|_| CacheError::NotFound(id))
    }

    /// Total number of valid cached points over all frames.
    pub fn stored_points(&self) -> usize {
        self.frames.iter().map(|f| f.cloud.valid_count()).sum()
    }

    pub fn insert_frame(
        &mut self,
        depth: DepthMap,
        pose: Pose,
        k: Intrinsics,
        rgb_ref: Option<PathBuf>,
    ) -> Result<FrameId, CacheError> {
        k.validate()?;
        if !depth.matches(&k) {
            return Err(CacheError::DimensionMismatch {
                depth_w: depth.width(),
                depth_h: depth.height(),
                k_w: k.width,
                k_h: k.height,
            });
        }
        let frame_id = self.frames.last().map_or(0, |f| f.frame_id + 1);
        if frame_id == 0 {
            self.scene_scale = depth.median_valid().unwrap_or(1.0);
        }
        let cloud = PointGrid::from_depth(&depth, &pose, &k, self.subsample_d);
        self.frames.push(FrameRecord {
            frame_id,
            camera: Camera::new(pose, k),
            depth: Arc::new(depth),
            cloud,
            rgb_ref,
        });
        Ok(frame_id)
    }

    pub fn save(&self, dir: &Path) -> Result<(), CacheError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut entries = Vec::with_capacity(self.frames.len());
        for f in &self.frames {
            let depth_name = format!("depth_{}.lyd", f.frame_id);
            write_depth(&dir.join(&depth_name), &f.depth)?;
            let rgb = match &f.rgb_ref {
                Some(src) => {
                    let name = format!("rgb_{}.png", f.frame_id);
                    let dst = dir.join(&name);
                    if !same_file(src, &dst) {
                        fs::copy(src, &dst).map_err(io_err(src))?;
                    }
                    Some(name)
                }
                None => None,
            };
            entries.push(ManifestFrame { id: f.frame_id, camera: CameraJson::from(&f.camera), depth: depth_name, rgb });
        }
        let manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            subsample_d: self.subsample_d,
            frames: entries,
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CacheError::Manifest(e.to_string()))?;
        fs::write(&path, text).map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<SceneCache, CacheError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CacheError::Manifest(e.to_string()))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(CacheError::Manifest(format!("unknown format tag {:?}", manifest.format)));
        }
        if manifest.version != MANIFEST_VERSION {
            return Err(CacheError::VersionMismatch { found: manifest.version, expected: MANIFEST_VERSION });
        }
        let mut cache = SceneCache::new(manifest.subsample_d)?;
        for (i, entry) in manifest.frames.iter().enumerate() {
            if entry.id != i as FrameId {
                return Err(CacheError::Manifest(format!("frame {i} has id {}, ids must be 0,1,2,...", entry.id)));
            }
            let camera = Camera::try_from(&entry.camera)?;
            let depth = read_depth(&dir.join(&entry.depth))?;
            let rgb_ref = match &entry.rgb {
                Some(name) => {
                    let p = dir.join(name);
                    if !p.exists() {
                        return Err(CacheError::MissingFile { path: p });
                    }
                    Some(p)
                }
                None => None,
            };
            cache.insert_frame(depth, camera.pose, camera.intrinsics, rgb_ref)?;
        }
        Ok(cache)
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    subsample_d: u32,
    frames: Vec<ManifestFrame>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFrame {
    id: FrameId,
    camera: CameraJson,
    depth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rgb: Option<String>,
}

/// Encodes a depth raster: `LYD1`, u32 width, u32 height, then f32 values (all little-endian).
pub fn encode_depth(depth: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + depth.values().len() * 4);
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&depth.width().to_le_bytes());
    out.extend_from_slice(&depth.height().to_le_bytes());
    for v in depth.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<(), CacheError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&encode_depth(depth)).map_err(io_err(path))
}

pub fn read_depth(path: &Path) -> Result<DepthMap, CacheError> {
    if !path.exists() {
        return Err(CacheError::MissingFile { path: path.to_path_buf() });
    }
    let mut bytes = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(io_err(path))?;
    decode_depth(&bytes, path)
}

/// `path` is only used for diagnostics.
pub fn decode_depth(bytes: &[u8], path: &Path) -> Result<DepthMap, CacheError> {
    if bytes.len() < 4 || &bytes[..4] != DEPTH_MAGIC {
        return Err(CacheError::BadMagic { path: path.to_path_buf() });
    }
    if bytes.len() < 12 {
        return Err(CacheError::Truncated { path: path.to_path_buf(), expected: 12, got: bytes.len() });
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let expected = 12 + width as usize * height as usize * 4;
    if bytes.len() != expected {
        return Err(CacheError::Truncated { path: path.to_path_buf(), expected, got: bytes.len() });
    }
    let values = bytes[12..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(DepthMap::new(width, height, values).expect("size checked above"))
}
