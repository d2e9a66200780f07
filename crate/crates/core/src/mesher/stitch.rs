use std::collections::{BTreeMap, HashMap, HashSet};

use nalgebra::Vector3;
use serde::Serialize;

use super::measure::closest_on_segment;
use super::{HierGrid, TriMesh};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StitchReport {
    /// Open-boundary vertices lying next to another level's open boundary.
    pub seam_vertices: usize,
    pub welded: usize,
    /// Seam vertices inserted into another level's boundary edge.
    pub split: usize,
    /// Seam vertices still on an open boundary after stitching.
    pub unmatched: usize,
    /// Largest distance from a seam vertex to the other level's boundary,
    /// measured before welding.
    pub max_gap: f64,
}

struct Boundary {
    /// Directed open edges `(a, b, level)` as they appear in their triangle.
    edges: Vec<(u32, u32, usize)>,
}

fn open_edges(triangles: &[[u32; 3]], level_of_tri: &[usize]) -> Boundary {
    let mut count: HashMap<(u32, u32), u32> = HashMap::new();
    for t in triangles {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let mut edges = Vec::new();
    for (ti, t) in triangles.iter().enumerate() {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            if count[&(a.min(b), a.max(b))] == 1 {
                edges.push((a, b, level_of_tri[ti]));
            }
        }
    }
    Boundary { edges }
}

/// Spatial hash of boundary segments.
struct SegmentHash {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<usize>>,
}

impl SegmentHash {
    fn new(vertices: &[Vector3<f64>], edges: &[(u32, u32, usize)], cell: f64) -> Self {
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, &(a, b, _)) in edges.iter().enumerate() {
            let (pa, pb) = (vertices[a as usize], vertices[b as usize]);
            let lo = pa.inf(&pb).map(|x| (x / cell).floor() as i64);
            let hi = pa.sup(&pb).map(|x| (x / cell).floor() as i64);
            for x in lo.x..=hi.x {
                for y in lo.y..=hi.y {
                    for z in lo.z..=hi.z {
                        buckets.entry([x, y, z]).or_default().push(i);
                    }
                }
            }
        }
        SegmentHash { cell, buckets }
    }

    /// Segment indices in the cells around `p`, ascending.
    fn near(&self, p: &Vector3<f64>) -> Vec<usize> {
        let c = p.map(|x| (x / self.cell).floor() as i64);
        let mut out = Vec::new();
        for x in c.x - 1..=c.x + 1 {
            for y in c.y - 1..=c.y + 1 {
                for z in c.z - 1..=c.z + 1 {
                    if let Some(v) = self.buckets.get(&[x, y, z]) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Joins per-level meshes (index = level) into one.
///
/// Open-boundary vertices of a coarser level are welded to the nearest
/// open-boundary vertex of a finer level within half a fine voxel. Remaining
/// seam vertices that lie within one fine voxel of another level's open edge
/// are inserted into that edge, splitting its triangle, which closes
/// T-junctions. Meshes whose boundaries do not meet are concatenated.
pub fn stitch_levels(meshes: &[TriMesh], grid: &HierGrid) -> (TriMesh, StitchReport) {
    if meshes.len() <= 1 {
        return (meshes.first().cloned().unwrap_or_default(), StitchReport::default());
    }
    let mut combined = TriMesh::default();
    let mut level_of_vertex = Vec::new();
    let mut level_of_tri = Vec::new();
    for (l, m) in meshes.iter().enumerate() {
        combined.append(m);
        level_of_vertex.extend(std::iter::repeat_n(l, m.vertices.len()));
        level_of_tri.extend(std::iter::repeat_n(l, m.triangles.len()));
    }
    let voxel = |l: usize| grid.voxel_size(l.min(grid.level_count() - 1));
    let coarsest = voxel(meshes.len() - 1);
    let verts = &combined.vertices;

    // Boundaries are taken per level so that coincident seams still count
    // as open.
    let boundary = open_edges(&combined.triangles, &level_of_tri);
    let hash = SegmentHash::new(verts, &boundary.edges, coarsest);
    let mut boundary_vertices: BTreeMap<u32, usize> = BTreeMap::new();
    for &(a, b, l) in &boundary.edges {
        boundary_vertices.insert(a, l);
        boundary_vertices.insert(b, l);
    }

    let mut report = StitchReport::default();
    let mut seam: Vec<u32> = Vec::new();
    for (&v, &l) in &boundary_vertices {
        let p = verts[v as usize];
        let mut best = f64::INFINITY;
        for i in hash.near(&p) {
            let (a, b, el) = boundary.edges[i];
            if el == l {
                continue;
            }
            let d = (p - closest_on_segment(&p, &verts[a as usize], &verts[b as usize])).norm();
            if d <= voxel(l.max(el)) {
                best = best.min(d);
            }
        }
        if best.is_finite() {
            seam.push(v);
            report.max_gap = report.max_gap.max(best);
        }
    }
    report.seam_vertices = seam.len();

    // weld coarse seam vertices onto finer ones
    let mut point_hash: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
    let key = |p: &Vector3<f64>| p.map(|x| (x / coarsest).floor() as i64);
    for &v in &seam {
        let k = key(&verts[v as usize]);
        point_hash.entry([k.x, k.y, k.z]).or_default().push(v);
    }
    let mut remap: Vec<u32> = (0..verts.len() as u32).collect();
    let mut taken: HashSet<u32> = HashSet::new();
    let mut touched: HashSet<u32> = HashSet::new();
    for &v in &seam {
        let l = level_of_vertex[v as usize];
        let p = verts[v as usize];
        let c = key(&p);
        let mut best: Option<(f64, u32)> = None;
        for x in c.x - 1..=c.x + 1 {
            for y in c.y - 1..=c.y + 1 {
                for z in c.z - 1..=c.z + 1 {
                    for &f in point_hash.get(&[x, y, z]).map(Vec::as_slice).unwrap_or(&[]) {
                        let fl = level_of_vertex[f as usize];
                        if fl >= l || taken.contains(&f) {
                            continue;
                        }
                        let d = (verts[f as usize] - p).norm();
                        if d <= 0.5 * voxel(fl) && best.is_none_or(|(bd, bf)| (d, f) < (bd, bf)) {
                            best = Some((d, f));
                        }
                    }
                }
            }
        }
        if let Some((_, f)) = best {
            remap[v as usize] = f;
            taken.insert(f);
            touched.insert(f);
            touched.insert(v);
            report.welded += 1;
        }
    }
    let mut triangles: Vec<[u32; 3]> = combined.triangles.iter().map(|t| t.map(|i| remap[i as usize])).collect();

    // T-junctions: insert leftover seam vertices into the other level's open edges
    let welded_boundary = open_edges(&triangles, &level_of_tri);
    let open_now: HashSet<u32> = welded_boundary.edges.iter().flat_map(|&(a, b, _)| [a, b]).collect();
    let whash = SegmentHash::new(verts, &welded_boundary.edges, coarsest);
    let mut splits: HashMap<(u32, u32), Vec<(f64, u32)>> = HashMap::new();
    for &v in &seam {
        if touched.contains(&v) || !open_now.contains(&v) {
            continue;
        }
        let l = level_of_vertex[v as usize];
        let p = verts[v as usize];
        let mut best: Option<(f64, usize, f64)> = None;
        for i in whash.near(&p) {
            let (a, b, el) = welded_boundary.edges[i];
            if el == l || a == v || b == v {
                continue;
            }
            let (pa, pb) = (verts[a as usize], verts[b as usize]);
            let ab = pb - pa;
            let t = (p - pa).dot(&ab) / ab.norm_squared();
            if !(t > 1e-9 && t < 1.0 - 1e-9) {
                continue;
            }
            let d = (p - (pa + ab * t)).norm();
            if d <= voxel(l.min(el)) && best.is_none_or(|(bd, bi, _)| (d, i) < (bd, bi)) {
                best = Some((d, i, t));
            }
        }
        if let Some((_, i, t)) = best {
            let (a, b, _) = welded_boundary.edges[i];
            splits.entry((a, b)).or_default().push((t, v));
            report.split += 1;
        }
    }
    if !splits.is_empty() {
        for list in splits.values_mut() {
            list.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        }
        let mut out = Vec::with_capacity(triangles.len() + report.split);
        for t in &triangles {
            let mut poly: Vec<u32> = Vec::with_capacity(3);
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                poly.push(a);
                if let Some(list) = splits.get(&(a, b)) {
                    poly.extend(list.iter().map(|&(_, v)| v));
                }
            }
            if poly.len() == 3 {
                out.push(*t);
                continue;
            }
            // fan from the apex whose thinnest triangle is largest; inserted
            // vertices are collinear with their edge
            let fan_min_area = |apex: usize| {
                let n = poly.len();
                (1..n - 1)
                    .map(|i| {
                        let [a, b, c] = [apex, apex + i, apex + i + 1].map(|k| verts[poly[k % n] as usize]);
                        (b - a).cross(&(c - a)).norm()
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            let start = (0..poly.len()).max_by(|&x, &y| fan_min_area(x).total_cmp(&fan_min_area(y)).then(y.cmp(&x))).unwrap();
            poly.rotate_left(start);
            for i in 1..poly.len() - 1 {
                out.push([poly[0], poly[i], poly[i + 1]]);
            }
        }
        triangles = out;
    }
    let final_open: HashSet<u32> = open_edges(&triangles, &vec![0; triangles.len()])
        .edges
        .iter()
        .flat_map(|&(a, b, _)| [a, b])
        .collect();
    report.unmatched = seam.iter().filter(|v| remap[**v as usize] == **v && final_open.contains(v)).count();
    let mesh = TriMesh::new(combined.vertices, triangles).cleanup();
    (mesh, report)
}
