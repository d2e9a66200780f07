use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use super::TriMesh;

const MIN_FACES: usize = 4;
/// Minimum cosine between a face normal before and after a collapse.
const FLIP_COS: f64 = 0.2;
const BOUNDARY_WEIGHT: f64 = 100.0;

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    cost: f64,
    a: u32,
    b: u32,
    stamp_a: u32,
    stamp_b: u32,
    target: Vector3<f64>,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // min-heap on (cost, a, b)
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then(other.a.cmp(&self.a)).then(other.b.cmp(&self.b))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn plane_quadric(n: &Vector3<f64>, p: &Vector3<f64>, weight: f64) -> Matrix4<f64> {
    let q = Vector4::new(n.x, n.y, n.z, -n.dot(p));
    q * q.transpose() * weight
}

fn quadric_error(q: &Matrix4<f64>, v: &Vector3<f64>) -> f64 {
    let h = Vector4::new(v.x, v.y, v.z, 1.0);
    (h.transpose() * q * h)[0].max(0.0)
}

struct State {
    pos: Vec<Vector3<f64>>,
    quadric: Vec<Matrix4<f64>>,
    stamp: Vec<u32>,
    alive_v: Vec<bool>,
    tris: Vec<[u32; 3]>,
    alive_t: Vec<bool>,
    /// Incident live triangles per vertex.
    vt: Vec<Vec<u32>>,
    boundary_v: Vec<bool>,
}

impl State {
    fn neighbors(&self, v: u32) -> Vec<u32> {
        let mut out: Vec<u32> =
            self.vt[v as usize].iter().flat_map(|&t| self.tris[t as usize]).filter(|&u| u != v).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn edge_faces(&self, a: u32, b: u32) -> Vec<u32> {
        self.vt[a as usize].iter().copied().filter(|&t| self.tris[t as usize].contains(&b)).collect()
    }

    fn candidate(&self, a: u32, b: u32) -> Candidate {
        let (a, b) = (a.min(b), a.max(b));
        let q = self.quadric[a as usize] + self.quadric[b as usize];
        let (pa, pb) = (self.pos[a as usize], self.pos[b as usize]);
        let m: Matrix3<f64> = q.fixed_view::<3, 3>(0, 0).into();
        let rhs = -Vector3::new(q[(0, 3)], q[(1, 3)], q[(2, 3)]);
        let mut best = [pa, pb, (pa + pb) * 0.5]
            .into_iter()
            .map(|p| (quadric_error(&q, &p), p))
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .unwrap();
        if m.determinant().abs() > 1e-12 {
            if let Some(inv) = m.try_inverse() {
                let p = inv * rhs;
                // stay near the edge to avoid runaway solutions on flat areas
                if (p - (pa + pb) * 0.5).norm() <= (pb - pa).norm() {
                    let e = quadric_error(&q, &p);
                    if e < best.0 {
                        best = (e, p);
                    }
                }
            }
        }
        Candidate { cost: best.0, a, b, stamp_a: self.stamp[a as usize], stamp_b: self.stamp[b as usize], target: best.1 }
    }

    fn collapse_ok(&self, c: &Candidate) -> bool {
        let (a, b) = (c.a, c.b);
        let shared = self.edge_faces(a, b);
        if shared.is_empty() || shared.len() > 2 {
            return false;
        }
        let (na, nb) = (self.neighbors(a), self.neighbors(b));
        let common = na.iter().filter(|v| nb.binary_search(v).is_ok()).count();
        if common != shared.len() {
            return false;
        }
        // an interior edge between two boundary vertices would pinch the mesh
        if shared.len() == 2 && self.boundary_v[a as usize] && self.boundary_v[b as usize] {
            return false;
        }
        for v in [a, b] {
            for &t in &self.vt[v as usize] {
                let tri = self.tris[t as usize];
                if tri.contains(&a) && tri.contains(&b) {
                    continue;
                }
                let p = tri.map(|i| self.pos[i as usize]);
                let before = (p[1] - p[0]).cross(&(p[2] - p[0]));
                let q = tri.map(|i| if i == v { c.target } else { self.pos[i as usize] });
                let after = (q[1] - q[0]).cross(&(q[2] - q[0]));
                let (lb, la) = (before.norm(), after.norm());
                if la <= 1e-12 * lb.max(1e-300) || before.dot(&after) < FLIP_COS * lb * la {
                    return false;
                }
            }
        }
        true
    }
}

/// Quadric-error edge collapse until at most `target_faces` remain.
///
/// Candidates are ordered by cost, then by vertex indices, so the result is
/// reproducible. Collapses that would break manifoldness, pinch a boundary
/// or fold a face are skipped; decimation stops early when none is left.
pub fn decimate(mesh: &TriMesh, target_faces: usize) -> TriMesh {
    let target = target_faces.max(MIN_FACES);
    if mesh.triangle_count() <= target {
        return mesh.clone();
    }
    let mesh = mesh.cleanup();
    let nv = mesh.vertices.len();
    let mut st = State {
        pos: mesh.vertices.clone(),
        quadric: vec![Matrix4::zeros(); nv],
        stamp: vec![0; nv],
        alive_v: vec![true; nv],
        tris: mesh.triangles.clone(),
        alive_t: vec![true; mesh.triangles.len()],
        vt: vec![Vec::new(); nv],
        boundary_v: vec![false; nv],
    };
    let mut edge_count: HashMap<(u32, u32), u32> = HashMap::new();
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let n2 = mesh.face_normal(ti);
        let area = 0.5 * n2.norm();
        let n = n2 / n2.norm();
        let q = plane_quadric(&n, &mesh.vertices[t[0] as usize], area);
        for &v in t {
            st.quadric[v as usize] += q;
            st.vt[v as usize].push(ti as u32);
        }
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    // boundary edges get a perpendicular constraint plane
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let n = mesh.face_normal(ti).normalize();
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            if edge_count[&(a.min(b), a.max(b))] != 1 {
                continue;
            }
            let (pa, pb) = (mesh.vertices[a as usize], mesh.vertices[b as usize]);
            let e = pb - pa;
            let side = e.cross(&n).normalize();
            let q = plane_quadric(&side, &pa, BOUNDARY_WEIGHT * e.norm_squared());
            for v in [a, b] {
                st.quadric[v as usize] += q;
                st.boundary_v[v as usize] = true;
            }
        }
    }
    let mut edges: Vec<(u32, u32)> = edge_count.keys().copied().collect();
    edges.sort_unstable();
    let mut heap: BinaryHeap<Candidate> = edges.iter().map(|&(a, b)| st.candidate(a, b)).collect();
    let mut faces = mesh.triangles.len();
    while faces > target {
        let Some(c) = heap.pop() else { break };
        let (a, b) = (c.a, c.b);
        if !st.alive_v[a as usize] || !st.alive_v[b as usize] {
            continue;
        }
        if st.stamp[a as usize] != c.stamp_a || st.stamp[b as usize] != c.stamp_b {
            continue;
        }
        if !st.collapse_ok(&c) {
            continue;
        }
        // keep a, remove b
        for t in st.edge_faces(a, b) {
            st.alive_t[t as usize] = false;
            for v in st.tris[t as usize] {
                st.vt[v as usize].retain(|&x| x != t);
            }
            faces -= 1;
        }
        let moved = std::mem::take(&mut st.vt[b as usize]);
        for &t in &moved {
            for v in st.tris[t as usize].iter_mut() {
                if *v == b {
                    *v = a;
                }
            }
        }
        st.vt[a as usize].extend(moved);
        st.vt[a as usize].sort_unstable();
        st.pos[a as usize] = c.target;
        let qb = st.quadric[b as usize];
        st.quadric[a as usize] += qb;
        st.boundary_v[a as usize] |= st.boundary_v[b as usize];
        st.alive_v[b as usize] = false;
        st.stamp[a as usize] += 1;
        st.stamp[b as usize] += 1;
        for n in st.neighbors(a) {
            st.stamp[n as usize] += 1;
        }
        for n in st.neighbors(a) {
            for m in st.neighbors(n) {
                heap.push(st.candidate(n, m));
            }
        }
    }
    let tris = st.tris.iter().zip(&st.alive_t).filter(|(_, alive)| **alive).map(|(t, _)| *t).collect();
    TriMesh::new(st.pos, tris).compact()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesher::hausdorff;

    /// Subdivided icosahedron projected onto the unit sphere.
    pub(crate) fn icosphere(levels: usize) -> TriMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut v: Vec<Vector3<f64>> = [
            [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
            [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
            [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
        ]
        .iter()
        .map(|p| Vector3::from(*p).normalize())
        .collect();
        let mut f: Vec<[u32; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4], [11, 10, 2],
            [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9], [4, 9, 5],
            [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..levels {
            let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
            let mut next = Vec::with_capacity(f.len() * 4);
            for tri in &f {
                let m = [0, 1, 2].map(|i| {
                    let (a, b) = (tri[i], tri[(i + 1) % 3]);
                    *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                        v.push(((v[a as usize] + v[b as usize]) * 0.5).normalize());
                        (v.len() - 1) as u32
                    })
                });
                next.extend([[tri[0], m[0], m[2]], [tri[1], m[1], m[0]], [tri[2], m[2], m[1]], m]);
            }
            f = next;
        }
        TriMesh::new(v, f)
    }

    #[test]
    fn target_above_count_is_identity() {
        let m = icosphere(1);
        assert_eq!(decimate(&m, 80), m);
        assert_eq!(decimate(&m, 1000), m);
    }

    #[test]
    fn sphere_to_ten_percent() {
        let m = icosphere(5);
        assert_eq!(m.triangle_count(), 20480);
        let d = decimate(&m, 2048);
        assert!(d.triangle_count() <= 2048 && d.triangle_count() > 1800, "{}", d.triangle_count());
        let topo = d.topology();
        assert!(topo.is_closed_manifold());
        assert_eq!(topo.euler, 2);
        assert!(hausdorff(&m, &d) < 0.02);
    }

    #[test]
    fn deterministic() {
        let m = icosphere(3);
        assert_eq!(decimate(&m, 200), decimate(&m, 200));
    }

    #[test]
    fn degenerate_input_does_not_panic() {
        let v = (0..6).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let m = TriMesh::new(v, vec![[0, 1, 2], [2, 3, 4], [3, 4, 5], [0, 2, 4], [1, 3, 5]]);
        let d = decimate(&m, 4);
        assert!(d.triangle_count() <= 5);
        assert!(d.is_valid());
    }

    #[test]
    fn open_patch_keeps_outline() {
        let n = 20;
        let mut v = Vec::new();
        let mut f = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                v.push(Vector3::new(i as f64 / n as f64, j as f64 / n as f64, 0.0));
            }
        }
        for j in 0..n {
            for i in 0..n {
                let a = (j * (n + 1) + i) as u32;
                f.push([a, a + 1, a + n as u32 + 2]);
                f.push([a, a + n as u32 + 2, a + n as u32 + 1]);
            }
        }
        let m = TriMesh::new(v, f);
        let d = decimate(&m, 80);
        assert!(d.triangle_count() <= 80);
        assert!((d.total_area() - 1.0).abs() < 1e-6);
        assert_eq!(d.topology().euler, 1);
    }
}
