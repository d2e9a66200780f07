use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use super::TriMesh;

/// Edge and orientation statistics of a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Topology {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    /// `V - E + F` over referenced vertices.
    pub euler: i64,
    pub boundary_edges: usize,
    /// Edges with more than two incident triangles.
    pub non_manifold_edges: usize,
    /// Two-triangle edges traversed in the same direction by both.
    pub inconsistent_edges: usize,
    /// Divergence-theorem volume; positive for outward-facing closed meshes.
    pub signed_volume: f64,
}

impl Topology {
    pub fn of(mesh: &TriMesh) -> Topology {
        let mut edges: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
        for t in &mesh.triangles {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                let e = edges.entry((a.min(b), a.max(b))).or_default();
                if a < b {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
        let mut referenced = vec![false; mesh.vertices.len()];
        mesh.triangles.iter().flatten().for_each(|&i| referenced[i as usize] = true);
        let v = referenced.iter().filter(|r| **r).count();
        let (mut boundary, mut non_manifold, mut inconsistent) = (0, 0, 0);
        for &(fwd, back) in edges.values() {
            match fwd + back {
                1 => boundary += 1,
                2 if fwd != 1 => inconsistent += 1,
                2 => {}
                _ => non_manifold += 1,
            }
        }
        let signed_volume = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.corners(t);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum();
        Topology {
            vertices: v,
            edges: edges.len(),
            faces: mesh.triangles.len(),
            euler: v as i64 - edges.len() as i64 + mesh.triangles.len() as i64,
            boundary_edges: boundary,
            non_manifold_edges: non_manifold,
            inconsistent_edges: inconsistent,
            signed_volume,
        }
    }

    pub fn is_closed_manifold(&self) -> bool {
        self.boundary_edges == 0 && self.non_manifold_edges == 0 && self.inconsistent_edges == 0
    }
}

/// `|v - center| - radius` for every vertex.
pub fn radial_errors(mesh: &TriMesh, center: &Vector3<f64>, radius: f64) -> Vec<f64> {
    mesh.vertices.iter().map(|v| (v - center).norm() - radius).collect()
}

pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Closest distance from `p` to triangle `abc`.
pub fn point_triangle_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    (p - closest_on_triangle(p, a, b, c)).norm()
}

// Voronoi-region walk over vertices, edges and face.
fn closest_on_triangle(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Vector3<f64> {
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = va + vb + vc;
    if denom.abs() < f64::MIN_POSITIVE {
        // degenerate triangle: fall back to its edges
        return [(a, b), (b, c), (c, a)]
            .iter()
            .map(|(s, e)| closest_on_segment(p, s, e))
            .min_by(|x, y| (p - x).norm().total_cmp(&(p - y).norm()))
            .unwrap();
    }
    a + ab * (vb / denom) + ac * (vc / denom)
}

pub(crate) fn closest_on_segment(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    a + ab * ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
}

/// Uniform-grid index over a mesh's triangles for closest-distance queries.
pub struct SurfaceIndex<'a> {
    mesh: &'a TriMesh,
    origin: Vector3<f64>,
    cell: f64,
    dims: [i64; 3],
    buckets: HashMap<[i64; 3], Vec<u32>>,
}

impl<'a> SurfaceIndex<'a> {
    pub fn new(mesh: &'a TriMesh) -> Self {
        let (mut lo, mut hi) = (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY));
        for v in &mesh.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let n = mesh.triangles.len().max(1) as f64;
        let extent = (hi - lo).max().max(1e-9);
        let mean_edge = if mesh.triangles.is_empty() {
            extent
        } else {
            (0..mesh.triangles.len()).map(|t| {
                let [a, b, c] = mesh.corners(t);
                ((b - a).norm() + (c - b).norm() + (a - c).norm()) / 3.0
            }).sum::<f64>() / n
        };
        let cell = (2.0 * mean_edge).max(extent / 256.0).max(1e-9);
        let dims = [0, 1, 2].map(|k| (((hi[k] - lo[k]) / cell).floor() as i64 + 1).max(1));
        let mut buckets: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for t in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.corners(t);
            let (tlo, thi) = (a.inf(&b).inf(&c), a.sup(&b).sup(&c));
            let i0 = [0, 1, 2].map(|k| ((tlo[k] - lo[k]) / cell).floor() as i64);
            let i1 = [0, 1, 2].map(|k| ((thi[k] - lo[k]) / cell).floor() as i64);
            for x in i0[0]..=i1[0] {
                for y in i0[1]..=i1[1] {
                    for z in i0[2]..=i1[2] {
                        buckets.entry([x, y, z]).or_default().push(t as u32);
                    }
                }
            }
        }
        SurfaceIndex { mesh, origin: lo, cell, dims, buckets }
    }

    /// Distance from `p` to the nearest triangle; infinite for an empty mesh.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        if self.mesh.triangles.is_empty() {
            return f64::INFINITY;
        }
        let home = [0, 1, 2].map(|k| ((p[k] - self.origin[k]) / self.cell).floor() as i64);
        // rings beyond this radius lie wholly outside the grid
        let max_r = (0..3).map(|k| home[k].abs().max((home[k] - self.dims[k] + 1).abs())).max().unwrap() + 1;
        let mut best = f64::INFINITY;
        for r in 0..=max_r {
            for x in home[0] - r..=home[0] + r {
                for y in home[1] - r..=home[1] + r {
                    for z in home[2] - r..=home[2] + r {
                        let shell = (x - home[0]).abs() == r || (y - home[1]).abs() == r || (z - home[2]).abs() == r;
                        if !shell {
                            continue;
                        }
                        if let Some(ts) = self.buckets.get(&[x, y, z]) {
                            for &t in ts {
                                let [a, b, c] = self.mesh.corners(t as usize);
                                best = best.min(point_triangle_distance(p, &a, &b, &c));
                            }
                        }
                    }
                }
            }
            if best <= r as f64 * self.cell {
                break;
            }
        }
        best
    }
}

fn sample_points(mesh: &TriMesh) -> Vec<Vector3<f64>> {
    let mut pts = mesh.vertices.clone();
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(t);
        pts.push((a + b + c) / 3.0);
        pts.push((a + b) * 0.5);
        pts.push((b + c) * 0.5);
        pts.push((c + a) * 0.5);
    }
    pts
}

/// Symmetric Hausdorff distance, measured from vertices, edge midpoints and
/// centroids of each mesh to the other mesh's surface.
pub fn hausdorff(a: &TriMesh, b: &TriMesh) -> f64 {
    let one_way = |from: &TriMesh, to: &TriMesh| {
        let index = SurfaceIndex::new(to);
        sample_points(from).par_iter().map(|p| index.distance(p)).reduce(|| 0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}
