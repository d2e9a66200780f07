//! Visibility-based retrieval of history frames.
//!
//! Every cached point cloud is projected into a target camera whose image is
//! divided into `d x d` cells (the cache's subsample factor). A first pass
//! keeps the minimum projected depth per cell over all frames; a second pass
//! marks a point visible when its normalized depth is within `delta` of that
//! minimum. A frame's visibility score is its number of visible points and its
//! coverage mask is the set of cells those points land in.
//!
//! Inference picks frames greedily by newly covered cells; training samples
//! frames in proportion to their scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{FrameId, SceneCache};
use crate::geometry::{Camera, Intrinsics, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("cache is empty")]
    EmptyCache,
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Number of spatial memory slots.
    pub n_s: usize,
    /// Occlusion threshold in normalized depth units.
    pub delta: f64,
    /// Seed for training-mode sampling.
    pub seed: u64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { n_s: 5, delta: 0.1, seed: 0 }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.n_s == 0 {
            return Err(RetrievalError::InvalidConfig("n_s must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(RetrievalError::InvalidConfig("delta must be positive".into()));
        }
        Ok(())
    }
}

/// Fixed-size bit set over target cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellMask {
    len: usize,
    words: Vec<u64>,
}

impl CellMask {
    pub fn new(len: usize) -> Self {
        CellMask { len, words: vec![0; len.div_ceil(64)] }
    }

    pub fn from_cells(len: usize, cells: impl IntoIterator<Item = usize>) -> Self {
        let mut m = CellMask::new(len);
        for c in cells {
            m.insert(c);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn union_with(&mut self, other: &CellMask) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// Number of cells in `self` that are not in `covered`.
    pub fn count_new(&self, covered: &CellMask) -> usize {
        self.words.iter().zip(&covered.words).map(|(a, b)| (a & !b).count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|i| self.contains(*i))
    }

    /// Run-length encoding as alternating run lengths, starting with an unset run.
    pub fn to_runs(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut n = 0u32;
        for i in 0..self.len {
            if self.contains(i) != current {
                runs.push(n);
                current = !current;
                n = 0;
            }
            n += 1;
        }
        runs.push(n);
        runs
    }

    pub fn from_runs(len: usize, runs: &[u32]) -> Option<Self> {
        let mut m = CellMask::new(len);
        let mut pos = 0usize;
        for (i, r) in runs.iter().enumerate() {
            let end = pos + *r as usize;
            if end > len {
                return None;
            }
            if i % 2 == 1 {
                (pos..end).for_each(|c| m.insert(c));
            }
            pos = end;
        }
        (pos == len).then_some(m)
    }
}

/// Visibility of every cached frame from one target camera.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityResult {
    pub grid_rows: u32,
    pub grid_cols: u32,
    /// Minimum projected depth per cell (`f64::INFINITY` where nothing landed).
    pub min_depth: Vec<f64>,
    pub frame_ids: Vec<FrameId>,
    /// Cells each frame visibly covers, parallel to `frame_ids`.
    pub masks: Vec<CellMask>,
    /// Visible point count per frame, parallel to `frame_ids`.
    pub phi: Vec<u64>,
}

impl VisibilityResult {
    pub fn cell_count(&self) -> usize {
        self.grid_rows as usize * self.grid_cols as usize
    }

    fn index_of(&self, id: FrameId) -> Option<usize> {
        self.frame_ids.iter().position(|f| *f == id)
    }

    pub fn phi_of(&self, id: FrameId) -> Option<u64> {
        self.index_of(id).map(|i| self.phi[i])
    }

    pub fn mask_of(&self, id: FrameId) -> Option<&CellMask> {
        self.index_of(id).map(|i| &self.masks[i])
    }

    /// Cells covered by at least one frame.
    pub fn candidate_union(&self) -> CellMask {
        let mut all = CellMask::new(self.cell_count());
        self.masks.iter().for_each(|m| all.union_with(m));
        all
    }
}

/// Target cell grid for a camera: its image split into `d x d` blocks.
pub fn target_grid(k: &Intrinsics, d: u32) -> (u32, u32) {
    (k.height / d, k.width / d)
}

/// Projects a point and returns its cell index and depth if it falls inside the grid.
#[inline]
fn splat_cell(p: &nalgebra::Vector3<f64>, pose: &Pose, k: &Intrinsics, d: f64, rows: u32, cols: u32) -> Option<(usize, f64)> {
    let c = pose.transform(p);
    if c.z <= 0.0 {
        return None;
    }
    let u = k.fx * c.x / c.z + k.cx;
    let v = k.fy * c.y / c.z + k.cy;
    if !(u >= 0.0 && v >= 0.0) {
        return None;
    }
    let (col, row) = ((u / d) as u64, (v / d) as u64);
    if col >= cols as u64 || row >= rows as u64 {
        return None;
    }
    Some((row as usize * cols as usize + col as usize, c.z))
}

pub fn visibility(cache: &SceneCache, target: &Camera, cfg: &RetrievalConfig) -> Result<VisibilityResult, RetrievalError> {
    cfg.validate()?;
    if cache.is_empty() {
        return Err(RetrievalError::EmptyCache);
    }
    let d = cache.subsample();
    let (rows, cols) = target_grid(&target.intrinsics, d);
    let n_cells = rows as usize * cols as usize;
    let (pose, k, df) = (&target.pose, &target.intrinsics, d as f64);

    // pass 1: per-cell minimum depth; min is order independent
    let min_depth = cache
        .frames()
        .par_iter()
        .fold(
            || vec![f64::INFINITY; n_cells],
            |mut buf, f| {
                for p in f.cloud.iter_valid() {
                    if let Some((cell, z)) = splat_cell(p, pose, k, df, rows, cols) {
                        if z < buf[cell] {
                            buf[cell] = z;
                        }
                    }
                }
                buf
            },
        )
        .reduce(
            || vec![f64::INFINITY; n_cells],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x = x.min(y));
                a
            },
        );

    // pass 2: delta test in normalized depth
    let scale = cache.scene_scale();
    let per_frame: Vec<(CellMask, u64)> = cache
        .frames()
        .par_iter()
        .map(|f| {
            let mut mask = CellMask::new(n_cells);
            let mut phi = 0u64;
            for p in f.cloud.iter_valid() {
                if let Some((cell, z)) = splat_cell(p, pose, k, df, rows, cols) {
                    if (z - min_depth[cell]) / scale < cfg.delta {
                        mask.insert(cell);
                        phi += 1;
                    }
                }
            }
            (mask, phi)
        })
        .collect();

    let (masks, phi) = per_frame.into_iter().unzip();
    Ok(VisibilityResult {
        grid_rows: rows,
        grid_cols: cols,
        min_depth,
        frame_ids: cache.frames().iter().map(|f| f.frame_id).collect(),
        masks,
        phi,
    })
}

/// Greedy maximum coverage over `masks`: returns indices into `masks`.
///
/// Each round takes the mask adding the most uncovered cells, lowest index on
/// ties, and stops after `limit` picks or when nothing new can be covered.
pub fn greedy_max_coverage(masks: &[CellMask], limit: usize) -> Vec<usize> {
    let Some(len) = masks.first().map(CellMask::len) else {
        return Vec::new();
    };
    let mut covered = CellMask::new(len);
    let mut taken = vec![false; masks.len()];
    let mut picks = Vec::new();
    while picks.len() < limit {
        let mut best: Option<(usize, usize)> = None;
        for (i, m) in masks.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let gain = m.count_new(&covered);
            if gain > 0 && best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let Some((i, _)) = best else { break };
        taken[i] = true;
        covered.union_with(&masks[i]);
        picks.push(i);
    }
    picks
}

/// Greedy selection over an already computed visibility result.
pub fn select_greedy(vis: &VisibilityResult, n_s: usize) -> Vec<FrameId> {
    greedy_max_coverage(&vis.masks, n_s).into_iter().map(|i| vis.frame_ids[i]).collect()
}

/// Inference-time retrieval: up to `cfg.n_s` frames maximizing target coverage.
/// An empty cache yields an empty selection.
pub fn select_frames_greedy(cache: &SceneCache, target: &Camera, cfg: &RetrievalConfig) -> Result<Vec<FrameId>, RetrievalError> {
    if cache.is_empty() {
        cfg.validate()?;
        return Ok(Vec::new());
    }
    let vis = visibility(cache, target, cfg)?;
    Ok(select_greedy(&vis, cfg.n_s))
}

/// Training-time retrieval: `cfg.n_s` draws without replacement, each
/// proportional to the remaining frames' visibility scores.
pub fn sample_frames_train(vis: &VisibilityResult, cfg: &RetrievalConfig) -> Vec<FrameId> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_frames_with(vis, cfg.n_s, &mut rng)
}

pub fn sample_frames_with<R: Rng + ?Sized>(vis: &VisibilityResult, n_s: usize, rng: &mut R) -> Vec<FrameId> {
    let mut pool: Vec<(FrameId, u64)> =
        vis.frame_ids.iter().copied().zip(vis.phi.iter().copied()).filter(|(_, p)| *p > 0).collect();
    let mut out = Vec::with_capacity(n_s.min(pool.len()));
    while out.len() < n_s && !pool.is_empty() {
        let total: u64 = pool.iter().map(|(_, p)| p).sum();
        let mut r = rng.random_range(0..total);
        let pos = pool
            .iter()
            .position(|(_, p)| {
                if r < *p {
                    true
                } else {
                    r -= p;
                    false
                }
            })
            .expect("r < total");
        out.push(pool.remove(pos).0);
    }
    out
}

/// Coverage of a selection, as fractions of two different denominators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// `|union| / |cells covered by any candidate frame|` (0 when no candidate covers anything).
    pub of_candidates: f64,
    /// `|union| / |all target cells|`.
    pub of_target: f64,
}

pub fn coverage(selection: &[FrameId], vis: &VisibilityResult) -> Coverage {
    let mut union = CellMask::new(vis.cell_count());
    for id in selection {
        if let Some(m) = vis.mask_of(*id) {
            union.union_with(m);
        }
    }
    let covered = union.count() as f64;
    let candidates = vis.candidate_union().count();
    Coverage {
        of_candidates: if candidates == 0 { 0.0 } else { covered / candidates as f64 },
        of_target: if vis.cell_count() == 0 { 0.0 } else { covered / vis.cell_count() as f64 },
    }
}

/// Fraction of the cells any candidate covers that `selection` covers.
pub fn coverage_fraction(selection: &[FrameId], vis: &VisibilityResult) -> f64 {
    coverage(selection, vis).of_candidates
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DepthMap, Intrinsics};
    use crate::synth::{AnalyticScene, Primitive};
    use nalgebra::Vector3;

    fn k() -> Intrinsics {
        Intrinsics::new(64.0, 64.0, 32.0, 32.0, 64, 64).unwrap()
    }

    fn vis_from_masks(len: usize, masks: Vec<CellMask>, phi: Vec<u64>) -> VisibilityResult {
        VisibilityResult {
            grid_rows: 1,
            grid_cols: len as u32,
            min_depth: vec![0.0; len],
            frame_ids: (0..masks.len() as u64).collect(),
            masks,
            phi,
        }
    }

    #[test]
    fn self_visibility_of_plane() {
        let scene = AnalyticScene::new(vec![Primitive::Plane { point: [0.0, 0.0, 2.0], normal: [0.0, 0.0, -1.0] }]).unwrap();
        let cam = Camera::new(Pose::identity(), k());
        let mut cache = SceneCache::default();
        cache.insert_frame(scene.render_depth(&cam.pose, &cam.intrinsics), cam.pose, cam.intrinsics, None).unwrap();
        let vis = visibility(&cache, &cam, &RetrievalConfig::default()).unwrap();
        assert_eq!(vis.phi, vec![64]);
        assert_eq!(vis.masks[0].count(), 64);
        assert_eq!(coverage(&[0], &vis), Coverage { of_candidates: 1.0, of_target: 1.0 });
    }

    #[test]
    fn frame_behind_target_scores_zero() {
        let mut cache = SceneCache::default();
        cache.insert_frame(DepthMap::filled(64, 64, 2.0), Pose::identity(), k(), None).unwrap();
        // target looks along -z, away from the z=2 plane
        let back = Camera::new(Pose::looking_along(Vector3::zeros(), -Vector3::z()).unwrap(), k());
        let vis = visibility(&cache, &back, &RetrievalConfig::default()).unwrap();
        assert_eq!(vis.phi, vec![0]);
        assert_eq!(select_greedy(&vis, 5), Vec::<FrameId>::new());
    }

    #[test]
    fn empty_cache() {
        let cache = SceneCache::default();
        let cam = Camera::new(Pose::identity(), k());
        assert_eq!(visibility(&cache, &cam, &RetrievalConfig::default()), Err(RetrievalError::EmptyCache));
        assert_eq!(select_frames_greedy(&cache, &cam, &RetrievalConfig::default()).unwrap(), Vec::<FrameId>::new());
    }

    #[test]
    fn config_validation() {
        assert!(RetrievalConfig { n_s: 0, ..Default::default() }.validate().is_err());
        assert!(RetrievalConfig { delta: 0.0, ..Default::default() }.validate().is_err());
        let d = RetrievalConfig::default();
        assert_eq!((d.n_s, d.delta), (5, 0.1));
    }

    #[test]
    fn greedy_thirds_with_tie() {
        // cells 0..12: frame 0 covers 4, frame 1 covers 4, frame 2 covers 4 (disjoint); tie -> ascending ids
        let masks = vec![
            CellMask::from_cells(12, 0..4),
            CellMask::from_cells(12, 4..8),
            CellMask::from_cells(12, 8..12),
        ];
        assert_eq!(greedy_max_coverage(&masks, 2), vec![0, 1]);
        // unequal thirds: largest two win
        let masks = vec![
            CellMask::from_cells(12, 0..3),
            CellMask::from_cells(12, 3..8),
            CellMask::from_cells(12, 8..12),
        ];
        assert_eq!(greedy_max_coverage(&masks, 2), vec![1, 2]);
    }

    #[test]
    fn greedy_skips_duplicates_and_stops_early() {
        let masks = vec![
            CellMask::from_cells(10, 0..6),
            CellMask::from_cells(10, 0..6),
            CellMask::from_cells(10, 6..8),
        ];
        assert_eq!(greedy_max_coverage(&masks, 5), vec![0, 2]);
        assert!(greedy_max_coverage(&[], 3).is_empty());
    }

    #[test]
    fn coverage_of_halves() {
        let vis = vis_from_masks(8, vec![CellMask::from_cells(8, 0..4), CellMask::from_cells(8, 4..8)], vec![4, 4]);
        assert_eq!(coverage_fraction(&[0, 1], &vis), 1.0);
        assert_eq!(coverage_fraction(&[0], &vis), 0.5);
        assert_eq!(coverage_fraction(&[1], &vis), 0.5);
        assert_eq!(coverage_fraction(&[], &vis), 0.0);
    }

    #[test]
    fn sampling_edge_cases() {
        let zero = vis_from_masks(4, vec![CellMask::new(4), CellMask::new(4)], vec![0, 0]);
        assert!(sample_frames_train(&zero, &RetrievalConfig::default()).is_empty());
        let some = vis_from_masks(4, vec![CellMask::new(4), CellMask::new(4), CellMask::new(4)], vec![5, 0, 2]);
        let mut picked = sample_frames_train(&some, &RetrievalConfig { n_s: 5, ..Default::default() });
        picked.sort();
        assert_eq!(picked, vec![0, 2]);
        let cfg = RetrievalConfig { n_s: 2, seed: 42, ..Default::default() };
        assert_eq!(sample_frames_train(&some, &cfg), sample_frames_train(&some, &cfg));
    }

    #[test]
    fn sampling_is_proportional() {
        let vis = vis_from_masks(2, vec![CellMask::new(2), CellMask::new(2)], vec![3, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let trials = 100_000;
        let hits = (0..trials).filter(|_| sample_frames_with(&vis, 1, &mut rng) == vec![0]).count();
        let freq = hits as f64 / trials as f64;
        assert!((freq - 0.75).abs() <= 0.01, "{freq}");
    }

    #[test]
    fn mask_runs_round_trip() {
        let m = CellMask::from_cells(70, [0, 1, 2, 10, 64, 65, 69]);
        let runs = m.to_runs();
        assert_eq!(runs[0], 0);
        assert_eq!(CellMask::from_runs(70, &runs), Some(m));
        let empty = CellMask::new(5);
        assert_eq!(empty.to_runs(), vec![5]);
        assert_eq!(CellMask::from_runs(5, &[2, 4]), None);
    }
}
