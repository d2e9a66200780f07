use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;

use super::{MeshError, OrientedPointSet};
use crate::geometry::Camera;

/// Truncation band in voxels of the owning level.
pub const TRUNCATION_VOXELS: f64 = 3.0;

const FUSE_CHUNK: usize = 2048;

pub(crate) type Key = [i64; 3];

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Acc {
    sum: f64,
    count: u32,
}

#[derive(Debug, Clone, PartialEq)]
struct Level {
    voxel: f64,
    /// `voxel / voxel_0` as an integer.
    scale: i64,
    acc: HashMap<Key, Acc>,
}

/// Multi-level sparse lattice of signed distances. Level 0 is the finest.
///
/// Level `l` samples the lattice `idx * voxel_size(l)`; cell `idx` spans
/// `[idx, idx + 1) * voxel_size(l)`. Each region of space is owned by one
/// level: a coarse cell is kept whole when its center lies in its level's
/// distance band and is otherwise split into its children.
#[derive(Debug, Clone, PartialEq)]
pub struct HierGrid {
    levels: Vec<Level>,
    near_radius: f64,
    centers: Vec<Vector3<f64>>,
}

/// Sets up an empty grid. Every size must be an integer multiple of the
/// previous one so the level lattices nest.
pub fn build_grid(cameras: &[Camera], near_radius: f64, level_sizes: &[f64]) -> Result<HierGrid, MeshError> {
    if cameras.is_empty() {
        return Err(MeshError::NoCameras);
    }
    if !(near_radius > 0.0 && near_radius.is_finite()) {
        return Err(MeshError::BadNearRadius(near_radius));
    }
    let increasing = level_sizes.windows(2).all(|w| w[1] > w[0]);
    if level_sizes.is_empty() || !increasing || level_sizes.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(MeshError::BadLevels(level_sizes.to_vec()));
    }
    let mut levels = Vec::with_capacity(level_sizes.len());
    for (l, &voxel) in level_sizes.iter().enumerate() {
        let ratio = voxel / level_sizes[0];
        let scale = ratio.round();
        let nests = levels.last().is_none_or(|prev: &Level| (scale as i64) % prev.scale == 0);
        if (ratio - scale).abs() > 1e-6 * ratio || !nests {
            return Err(MeshError::NonIntegerRatio { fine: level_sizes[l.saturating_sub(1)], coarse: voxel });
        }
        levels.push(Level { voxel, scale: scale as i64, acc: HashMap::new() });
    }
    Ok(HierGrid { levels, near_radius, centers: cameras.iter().map(|c| c.pose.center()).collect() })
}

impl HierGrid {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn voxel_size(&self, level: usize) -> f64 {
        self.levels[level].voxel
    }

    pub fn truncation(&self, level: usize) -> f64 {
        TRUNCATION_VOXELS * self.levels[level].voxel
    }

    pub fn near_radius(&self) -> f64 {
        self.near_radius
    }

    pub fn camera_centers(&self) -> &[Vector3<f64>] {
        &self.centers
    }

    pub fn nearest_camera_distance(&self, p: &Vector3<f64>) -> f64 {
        self.centers.iter().map(|c| (c - p).norm()).fold(f64::INFINITY, f64::min)
    }

    /// Level whose distance band contains `dist`: 0 below the near radius,
    /// then one level per doubling, capped at the coarsest.
    pub fn band(&self, dist: f64) -> usize {
        let top = self.levels.len() - 1;
        if dist < self.near_radius {
            return 0;
        }
        let raw = (dist / self.near_radius).log2().floor() as usize + 1;
        raw.min(top)
    }

    pub fn lattice_point(&self, level: usize, idx: Key) -> Vector3<f64> {
        let s = self.levels[level].voxel;
        Vector3::new(idx[0] as f64 * s, idx[1] as f64 * s, idx[2] as f64 * s)
    }

    fn cell_center(&self, level: usize, idx: Key) -> Vector3<f64> {
        let s = self.levels[level].voxel;
        Vector3::new((idx[0] as f64 + 0.5) * s, (idx[1] as f64 + 0.5) * s, (idx[2] as f64 + 0.5) * s)
    }

    fn ancestor(&self, level: usize, idx: Key, up: usize) -> Key {
        let f = self.levels[up].scale / self.levels[level].scale;
        idx.map(|i| i.div_euclid(f))
    }

    /// Level owning the region that cell `idx` of `level` lies in, or `None`
    /// when that region is split into finer cells.
    pub fn region_owner(&self, level: usize, idx: Key) -> Option<usize> {
        let top = self.levels.len() - 1;
        for up in (level..=top).rev() {
            let a = self.ancestor(level, idx, up);
            if up == 0 || self.band(self.nearest_camera_distance(&self.cell_center(up, a))) >= up {
                return Some(up);
            }
        }
        None
    }

    /// Whether `level` owns its cell `idx`.
    pub fn owns_cell(&self, level: usize, idx: Key) -> bool {
        self.region_owner(level, idx) == Some(level)
    }

    /// Trilinear interpolation of a cell's corner values at `p`; `None` when
    /// a corner is unobserved.
    pub(crate) fn interpolate_in_cell(&self, level: usize, cell: Key, p: &Vector3<f64>) -> Option<f64> {
        let s = self.levels[level].voxel;
        let f = Vector3::new(p.x / s - cell[0] as f64, p.y / s - cell[1] as f64, p.z / s - cell[2] as f64);
        let mut acc = 0.0;
        for dx in 0..2 {
            for dy in 0..2 {
                for dz in 0..2 {
                    let v = self.sdf(level, [cell[0] + dx, cell[1] + dy, cell[2] + dz])?;
                    let w = |d: i64, t: f64| if d == 1 { t } else { 1.0 - t };
                    acc += v * w(dx, f.x) * w(dy, f.y) * w(dz, f.z);
                }
            }
        }
        Some(acc)
    }

    /// Ancestor of cell `idx` at the coarser level `up`.
    pub(crate) fn ancestor_at(&self, level: usize, idx: Key, up: usize) -> Key {
        self.ancestor(level, idx, up)
    }

    /// Level owning the region that contains `p`.
    pub fn owner_of_point(&self, p: &Vector3<f64>) -> usize {
        for up in (1..self.levels.len()).rev() {
            let s = self.levels[up].voxel;
            let idx = [(p.x / s).floor() as i64, (p.y / s).floor() as i64, (p.z / s).floor() as i64];
            if self.band(self.nearest_camera_distance(&self.cell_center(up, idx))) >= up {
                return up;
            }
        }
        0
    }

    /// Averaged signed distance at lattice point `idx`, if observed.
    pub fn sdf(&self, level: usize, idx: Key) -> Option<f64> {
        self.levels[level].acc.get(&idx).map(|a| a.sum / a.count as f64)
    }

    pub fn observations(&self, level: usize, idx: Key) -> u32 {
        self.levels[level].acc.get(&idx).map_or(0, |a| a.count)
    }

    /// Number of lattice points holding a value.
    pub fn occupied(&self, level: usize) -> usize {
        self.levels[level].acc.len()
    }

    /// Occupied lattice indices in ascending order.
    pub fn sorted_keys(&self, level: usize) -> Vec<Key> {
        let mut keys: Vec<Key> = self.levels[level].acc.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    /// Adds one equal-weight observation at a lattice point.
    pub fn add_observation(&mut self, level: usize, idx: Key, value: f64) {
        let a = self.levels[level].acc.entry(idx).or_default();
        a.sum += value;
        a.count += 1;
    }

    /// Whether points at camera distance `dist` can touch a lattice point of
    /// a cell owned by `level`.
    fn level_relevant(&self, level: usize, dist: f64) -> bool {
        let top = self.levels.len() - 1;
        let margin = self.truncation(level) + 0.5 * 3f64.sqrt() * self.levels[top].voxel * 1.01;
        self.band((dist - margin).max(0.0)) <= level && level <= self.band(dist + margin)
    }
}

#[derive(Clone, Copy)]
struct Nearest {
    d2: f64,
    sum: f64,
    n: u32,
}

impl Nearest {
    fn offer(&mut self, d2: f64, value: f64) {
        if d2 < self.d2 {
            *self = Nearest { d2, sum: value, n: 1 };
        } else if d2 == self.d2 {
            self.sum += value;
            self.n += 1;
        }
    }

    fn merge(&mut self, other: &Nearest) {
        if other.d2 < self.d2 {
            *self = *other;
        } else if other.d2 == self.d2 {
            self.sum += other.sum;
            self.n += other.n;
        }
    }
}

/// Fuses one observation (typically one view) into every level.
///
/// Each lattice point within the level's truncation distance of a point
/// receives the signed point-to-plane distance `n · (q - p)` to its nearest
/// point; exactly tied nearest points are averaged. Successive calls are
/// averaged with equal weight.
pub fn fuse_sdf(grid: &mut HierGrid, points: &OrientedPointSet) {
    let dists: Vec<f64> = points.points.par_iter().map(|p| grid.nearest_camera_distance(p)).collect();
    for level in 0..grid.levels.len() {
        let idx: Vec<usize> = (0..points.len()).filter(|&i| grid.level_relevant(level, dists[i])).collect();
        let s = grid.levels[level].voxel;
        let trunc = grid.truncation(level);
        let partials: Vec<HashMap<Key, Nearest>> = idx
            .par_chunks(FUSE_CHUNK)
            .map(|chunk| {
                let mut local: HashMap<Key, Nearest> = HashMap::new();
                for &i in chunk {
                    let (p, n) = (points.points[i], points.normals[i]);
                    let lo = (p.map(|x| x - trunc) / s).map(f64::ceil);
                    let hi = (p.map(|x| x + trunc) / s).map(f64::floor);
                    for x in lo.x as i64..=hi.x as i64 {
                        for y in lo.y as i64..=hi.y as i64 {
                            for z in lo.z as i64..=hi.z as i64 {
                                let q = Vector3::new(x as f64 * s, y as f64 * s, z as f64 * s);
                                let d = q - p;
                                let d2 = d.norm_squared();
                                if d2 > trunc * trunc {
                                    continue;
                                }
                                local
                                    .entry([x, y, z])
                                    .or_insert(Nearest { d2: f64::INFINITY, sum: 0.0, n: 0 })
                                    .offer(d2, n.dot(&d));
                            }
                        }
                    }
                }
                local
            })
            .collect();
        let mut merged: HashMap<Key, Nearest> = HashMap::new();
        for part in &partials {
            for (k, v) in part {
                merged.entry(*k).and_modify(|m| m.merge(v)).or_insert(*v);
            }
        }
        for (k, v) in merged {
            grid.add_observation(level, k, v.sum / v.n as f64);
        }
    }
}
