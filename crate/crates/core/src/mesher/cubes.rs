use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::Vector3;
use rayon::prelude::*;

use super::grid::Key;
use super::{HierGrid, MeshError, TriMesh};

/// Unit-cube corner offsets.
pub const CUBE_CORNERS: [[i64; 3]; 8] =
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];

/// Corner pairs joined by each cube edge.
pub const CUBE_EDGES: [[usize; 2]; 12] =
    [[0, 1], [1, 2], [2, 3], [3, 0], [4, 5], [5, 6], [6, 7], [7, 4], [0, 4], [1, 5], [2, 6], [3, 7]];

/// Faces as corner cycles, counter-clockwise seen from outside the cube.
const FACES: [[usize; 4]; 6] =
    [[0, 4, 7, 3], [1, 2, 6, 5], [0, 1, 5, 4], [3, 7, 6, 2], [0, 3, 2, 1], [4, 5, 6, 7]];

fn edge_between(a: usize, b: usize) -> usize {
    CUBE_EDGES.iter().position(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a)).unwrap()
}

/// Triangles (as cube edge triples) for one corner configuration. Bit `i` of
/// `case` marks corner `i` as inside (negative).
///
/// On every face the inside corners are cut off by segments; where a face has
/// two diagonal inside corners, each is cut off on its own. Because the rule
/// only looks at one face, adjacent cells always agree on the shared face.
fn triangulate_case(case: u8) -> Vec<[u8; 3]> {
    let inside = |c: usize| case & (1 << c) != 0;
    // next[e] = edge following e along the oriented boundary
    let mut next = [usize::MAX; 12];
    for face in FACES {
        let crossings: Vec<(usize, bool)> = (0..4)
            .filter(|&i| inside(face[i]) != inside(face[(i + 1) % 4]))
            .map(|i| (edge_between(face[i], face[(i + 1) % 4]), inside(face[(i + 1) % 4])))
            .collect();
        // (edge, entering the inside run) in counter-clockwise order; pair each
        // entry with the following exit and join exit -> entry
        for (j, &(edge, entering)) in crossings.iter().enumerate() {
            if entering {
                let exit = crossings[(j + 1) % crossings.len()].0;
                next[exit] = edge;
            }
        }
    }
    let mut seen = [false; 12];
    let mut tris = Vec::new();
    for start in 0..12 {
        if next[start] == usize::MAX || seen[start] {
            continue;
        }
        let mut cycle = vec![start];
        seen[start] = true;
        let mut e = next[start];
        while e != start {
            seen[e] = true;
            cycle.push(e);
            e = next[e];
        }
        // fan from an apex that keeps every triangle off the cube faces
        let n = cycle.len();
        let apex = (0..n)
            .find(|&a| (1..n - 1).all(|i| !on_one_face([cycle[a], cycle[(a + i) % n], cycle[(a + i + 1) % n]])))
            .unwrap_or(0);
        for i in 1..n - 1 {
            tris.push([cycle[apex] as u8, cycle[(apex + i + 1) % n] as u8, cycle[(apex + i) % n] as u8]);
        }
    }
    tris
}

fn on_one_face(edges: [usize; 3]) -> bool {
    FACES.iter().any(|f| edges.iter().all(|&e| f.contains(&CUBE_EDGES[e][0]) && f.contains(&CUBE_EDGES[e][1])))
}

fn table() -> &'static [Vec<[u8; 3]>; 256] {
    static TABLE: OnceLock<[Vec<[u8; 3]>; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|c| triangulate_case(c as u8)))
}

/// Edge triples for the corner values of one cell (negative is inside).
pub fn polygonise(values: &[f64; 8]) -> &'static [[u8; 3]] {
    let case = (0..8).fold(0u8, |acc, i| acc | (u8::from(values[i] < 0.0) << i));
    &table()[case as usize]
}

type EdgeKey = (Key, u8);

/// Triangle corners tagged with the lattice edge they lie on.
type KeyedTriangle = [(EdgeKey, Vector3<f64>); 3];

/// Marching cubes over the cells `level` owns whose eight corners all hold a
/// value. Vertices are shared between cells through their lattice edge, and
/// triangle normals point toward positive distance.
///
/// Corners on the boundary of a region owned by a coarser level take the
/// coarse cell's trilinear value there, so both sides of a level seam see the
/// same crossings.
pub fn marching_cubes(grid: &HierGrid, level: usize) -> Result<TriMesh, MeshError> {
    if level >= grid.level_count() {
        return Err(MeshError::NoSuchLevel(level));
    }
    let keys = grid.sorted_keys(level);
    let owners: HashMap<Key, Option<usize>> = keys.par_iter().map(|&k| (k, grid.region_owner(level, k))).collect();
    let owner = |k: Key| owners.get(&k).copied().unwrap_or_else(|| grid.region_owner(level, k));
    let corner_value = |q: Key| -> Option<f64> {
        let p = grid.lattice_point(level, q);
        for d in CUBE_CORNERS {
            let cell = [q[0] - d[0], q[1] - d[1], q[2] - d[2]];
            if let Some(up) = owner(cell).filter(|&up| up > level) {
                if let Some(v) = grid.interpolate_in_cell(up, grid.ancestor_at(level, cell, up), &p) {
                    return Some(v);
                }
            }
        }
        grid.sdf(level, q)
    };
    let per_cell: Vec<Vec<KeyedTriangle>> = keys
        .par_iter()
        .map(|&base| {
            if owner(base) != Some(level) {
                return Vec::new();
            }
            let mut vals = [0.0; 8];
            for (i, off) in CUBE_CORNERS.iter().enumerate() {
                match corner_value([base[0] + off[0], base[1] + off[1], base[2] + off[2]]) {
                    Some(v) => vals[i] = v,
                    None => return Vec::new(),
                }
            }
            let tris = polygonise(&vals);
            if tris.is_empty() {
                return Vec::new();
            }
            let vertex = |e: u8| {
                let [a, b] = CUBE_EDGES[e as usize];
                let (ca, cb) = (CUBE_CORNERS[a], CUBE_CORNERS[b]);
                let lo = if ca <= cb { ca } else { cb };
                let axis = (0..3).find(|&k| ca[k] != cb[k]).unwrap() as u8;
                let key = ([base[0] + lo[0], base[1] + lo[1], base[2] + lo[2]], axis);
                let pa = grid.lattice_point(level, [base[0] + ca[0], base[1] + ca[1], base[2] + ca[2]]);
                let pb = grid.lattice_point(level, [base[0] + cb[0], base[1] + cb[1], base[2] + cb[2]]);
                let t = vals[a] / (vals[a] - vals[b]);
                (key, pa + (pb - pa) * t)
            };
            tris.iter().map(|t| t.map(vertex)).collect()
        })
        .collect();
    let mut index: HashMap<EdgeKey, u32> = HashMap::new();
    let mut mesh = TriMesh::default();
    for tri in per_cell.iter().flatten() {
        let ids = tri.map(|(key, p)| {
            *index.entry(key).or_insert_with(|| {
                mesh.vertices.push(p);
                (mesh.vertices.len() - 1) as u32
            })
        });
        mesh.triangles.push(ids);
    }
    Ok(mesh.cleanup())
}
