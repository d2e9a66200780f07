//! Surface meshes from posed depth.
//!
//! Oriented points are fused into a hierarchical sparse signed-distance grid
//! (fine cells near the cameras, coarser cells further away), each level is
//! polygonised with marching cubes, the level meshes are welded into one, and
//! the result can be simplified with quadric edge collapse.
//!
//! ```
//! use nalgebra::Vector3;
//! use scenemem::geometry::{Camera, Intrinsics, Pose};
//! use scenemem::mesher::{extract_from_views, MeshParams};
//! use scenemem::synth::{AnalyticScene, Primitive};
//!
//! let scene = AnalyticScene::new(vec![Primitive::Sphere { center: [0.0; 3], radius: 1.0 }]).unwrap();
//! let k = Intrinsics::from_hfov(60.0, 64, 48).unwrap();
//! let views: Vec<_> = [[0.0, 0.0, -3.0], [3.0, 0.0, 0.0], [0.0, 0.0, 3.0], [-3.0, 0.0, 0.0]]
//!     .iter()
//!     .map(|e| {
//!         let pose = Pose::look_at(Vector3::from(*e), Vector3::zeros(), Vector3::y()).unwrap();
//!         (scene.render_depth(&pose, &k), Camera::new(pose, k))
//!     })
//!     .collect();
//! let params = MeshParams::new(vec![0.1, 0.2], 2.5);
//! let out = extract_from_views(&views, &params).unwrap();
//! assert!(out.mesh.triangle_count() > 0);
//! ```

mod cubes;
mod decimate;
mod grid;
mod io;
mod measure;
mod points;
mod stitch;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cache::SceneCache;
use crate::geometry::{Camera, DepthMap};

pub use cubes::{marching_cubes, polygonise, CUBE_CORNERS, CUBE_EDGES};
pub use decimate::decimate;
pub use grid::{build_grid, fuse_sdf, HierGrid, TRUNCATION_VOXELS};
pub use io::{read_obj, read_ply, write_obj, write_ply};
pub use measure::{hausdorff, point_triangle_distance, radial_errors, rms, SurfaceIndex, Topology};
pub use points::{depth_to_oriented_points, OrientedPointSet};
pub use stitch::{stitch_levels, StitchReport};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("no cameras given")]
    NoCameras,
    #[error("level sizes must be positive and strictly increasing: {0:?}")]
    BadLevels(Vec<f64>),
    #[error("level size {coarse} is not an integer multiple of {fine}")]
    NonIntegerRatio { fine: f64, coarse: f64 },
    #[error("near radius must be positive, got {0}")]
    BadNearRadius(f64),
    #[error("stride must be at least 1")]
    BadStride,
    #[error("depth is {depth_w}x{depth_h} but intrinsics are {k_w}x{k_h}")]
    DimensionMismatch { depth_w: u32, depth_h: u32, k_w: u32, k_h: u32 },
    #[error("level {0} out of range")]
    NoSuchLevel(usize),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

/// Area threshold below which a triangle counts as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

impl TriMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Self {
        TriMesh { vertices, triangles }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    /// Unnormalised face normal (twice the area).
    pub fn face_normal(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a))
    }

    pub fn area(&self, t: usize) -> f64 {
        0.5 * self.face_normal(t).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// Indices in range and coordinates finite.
    pub fn is_valid(&self) -> bool {
        let n = self.vertices.len() as u32;
        self.vertices.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.triangles.iter().all(|t| t.iter().all(|&i| i < n))
    }

    /// Appends `other`, offsetting its indices.
    pub fn append(&mut self, other: &TriMesh) {
        let off = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles.extend(other.triangles.iter().map(|t| t.map(|i| i + off)));
    }

    /// Merges bit-identical vertices, drops degenerate and repeated triangles,
    /// and removes unreferenced vertices. Order of first appearance is kept.
    pub fn cleanup(&self) -> TriMesh {
        let mut first: std::collections::HashMap<[u64; 3], u32> = std::collections::HashMap::new();
        let remap: Vec<u32> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| *first.entry([v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]).or_insert(i as u32))
            .collect();
        let mut seen = std::collections::HashSet::new();
        let mut tris = Vec::with_capacity(self.triangles.len());
        for t in &self.triangles {
            let t = t.map(|i| remap[i as usize]);
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                continue;
            }
            let [a, b, c] = t.map(|i| self.vertices[i as usize]);
            if 0.5 * (b - a).cross(&(c - a)).norm() <= DEGENERATE_AREA {
                continue;
            }
            let mut key = t;
            key.sort_unstable();
            if seen.insert(key) {
                tris.push(t);
            }
        }
        TriMesh::new(self.vertices.clone(), tris).compact()
    }

    /// Drops vertices no triangle references.
    pub fn compact(&self) -> TriMesh {
        let mut map = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let triangles = self
            .triangles
            .iter()
            .map(|t| {
                t.map(|i| {
                    let slot = &mut map[i as usize];
                    if *slot == u32::MAX {
                        *slot = vertices.len() as u32;
                        vertices.push(self.vertices[i as usize]);
                    }
                    *slot
                })
            })
            .collect();
        TriMesh { vertices, triangles }
    }

    pub fn topology(&self) -> Topology {
        Topology::of(self)
    }
}

/// Inputs to [`extract_from_views`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshParams {
    /// Voxel size per level, finest first.
    pub level_sizes: Vec<f64>,
    pub near_radius: f64,
    /// Pixel stride when sampling oriented points.
    pub stride: usize,
    /// Target face count for decimation.
    pub decimate_to: Option<usize>,
}

impl MeshParams {
    pub fn new(level_sizes: Vec<f64>, near_radius: f64) -> Self {
        MeshParams { level_sizes, near_radius, stride: 1, decimate_to: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshOutput {
    #[serde(skip)]
    pub mesh: TriMesh,
    /// Faces per level before stitching.
    pub level_faces: Vec<usize>,
    pub stitch: StitchReport,
    /// Faces after stitching, before decimation.
    pub stitched_faces: usize,
    pub faces: usize,
    pub vertices: usize,
}

/// Full pipeline: oriented points, fusion, per-level marching cubes,
/// stitching, cleanup and optional decimation.
pub fn extract_from_views(views: &[(DepthMap, Camera)], params: &MeshParams) -> Result<MeshOutput, MeshError> {
    let cameras: Vec<Camera> = views.iter().map(|(_, c)| *c).collect();
    let mut grid = build_grid(&cameras, params.near_radius, &params.level_sizes)?;
    let sets = views
        .par_iter()
        .map(|(d, c)| depth_to_oriented_points(d, &c.pose, &c.intrinsics, params.stride))
        .collect::<Result<Vec<_>, _>>()?;
    for set in &sets {
        fuse_sdf(&mut grid, set);
    }
    mesh_grid(&grid, params.decimate_to)
}

/// [`extract_from_views`] over every frame of a cache.
pub fn extract_from_cache(cache: &SceneCache, params: &MeshParams) -> Result<MeshOutput, MeshError> {
    let views: Vec<(DepthMap, Camera)> = cache.frames().iter().map(|f| ((*f.depth).clone(), f.camera)).collect();
    extract_from_views(&views, params)
}

/// Polygonises, stitches and optionally decimates an already fused grid.
pub fn mesh_grid(grid: &HierGrid, decimate_to: Option<usize>) -> Result<MeshOutput, MeshError> {
    let levels = (0..grid.level_count()).map(|l| marching_cubes(grid, l)).collect::<Result<Vec<_>, _>>()?;
    let level_faces = levels.iter().map(TriMesh::triangle_count).collect();
    let (stitched, stitch) = stitch_levels(&levels, grid);
    let stitched_faces = stitched.triangle_count();
    let mesh = match decimate_to {
        Some(n) => decimate(&stitched, n),
        None => stitched,
    };
    Ok(MeshOutput { level_faces, stitch, stitched_faces, faces: mesh.triangle_count(), vertices: mesh.vertex_count(), mesh })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cleanup_merges_and_drops() {
        let v = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(2.0, 0.0, 0.0),
            Vector3::new(9.0, 9.0, 9.0),
        ];
        let m = TriMesh::new(v, vec![[0, 1, 2], [0, 3, 2], [0, 1, 4], [2, 1, 0]]);
        let c = m.cleanup();
        // [0,3,2] duplicates [0,1,2] once 3 merges into 1; [0,1,4] is collinear
        assert_eq!(c.triangles, vec![[0, 1, 2]]);
        assert_eq!(c.vertex_count(), 3);
    }

    #[test]
    fn append_offsets_indices() {
        let tri = TriMesh::new(
            vec![Vector3::zeros(), Vector3::x(), Vector3::y()],
            vec![[0, 1, 2]],
        );
        let mut m = tri.clone();
        m.append(&tri);
        assert_eq!(m.triangles[1], [3, 4, 5]);
        assert!(m.is_valid());
    }
}
