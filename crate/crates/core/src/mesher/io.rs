//! ASCII OBJ and binary little-endian PLY.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{MeshError, TriMesh};

fn io_err(path: &Path, source: std::io::Error) -> MeshError {
    MeshError::Io { path: path.display().to_string(), source }
}

fn fmt_err(path: &Path, msg: impl Into<String>) -> MeshError {
    MeshError::Format { path: path.display().to_string(), msg: msg.into() }
}

pub fn obj_string(mesh: &TriMesh) -> String {
    let mut s = String::with_capacity(32 * (mesh.vertices.len() + mesh.triangles.len()));
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<(), MeshError> {
    std::fs::write(path, obj_string(mesh)).map_err(|e| io_err(path, e))
}

/// Reads `v` and triangular `f` lines; face entries may carry `/vt/vn` suffixes.
pub fn read_obj(path: &Path) -> Result<TriMesh, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut mesh = TriMesh::default();
    for (n, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let xyz: Vec<f64> = parts.take(3).map(str::parse).collect::<Result<_, _>>()
                    .map_err(|e| fmt_err(path, format!("line {}: {e}", n + 1)))?;
                if xyz.len() != 3 {
                    return Err(fmt_err(path, format!("line {}: vertex needs 3 coordinates", n + 1)));
                }
                mesh.vertices.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = parts
                    .map(|p| p.split('/').next().unwrap_or("").parse::<u32>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| fmt_err(path, format!("line {}: {e}", n + 1)))?;
                if idx.len() != 3 || idx.contains(&0) {
                    return Err(fmt_err(path, format!("line {}: expected a triangle with 1-based indices", n + 1)));
                }
                mesh.triangles.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            _ => {}
        }
    }
    if !mesh.is_valid() {
        return Err(fmt_err(path, "face index out of range"));
    }
    Ok(mesh)
}

pub fn ply_bytes(mesh: &TriMesh) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    let mut out = header.into_bytes();
    out.reserve(12 * mesh.vertices.len() + 13 * mesh.triangles.len());
    for v in &mesh.vertices {
        for c in [v.x, v.y, v.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    for t in &mesh.triangles {
        out.push(3);
        for &i in t {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}

pub fn write_ply(path: &Path, mesh: &TriMesh) -> Result<(), MeshError> {
    std::fs::write(path, ply_bytes(mesh)).map_err(|e| io_err(path, e))
}

/// Reads the layout [`write_ply`] produces.
pub fn read_ply(path: &Path) -> Result<TriMesh, MeshError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let end = b"end_header\n";
    let hdr_len = bytes
        .windows(end.len())
        .position(|w| w == end)
        .ok_or_else(|| fmt_err(path, "missing end_header"))?
        + end.len();
    let header = std::str::from_utf8(&bytes[..hdr_len]).map_err(|_| fmt_err(path, "header is not UTF-8"))?;
    if !header.starts_with("ply\n") || !header.contains("format binary_little_endian 1.0") {
        return Err(fmt_err(path, "not a binary little-endian PLY"));
    }
    let count = |name: &str| -> Result<usize, MeshError> {
        header
            .lines()
            .find_map(|l| l.strip_prefix(&format!("element {name} ")))
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| fmt_err(path, format!("missing element {name}")))
    };
    let (nv, nf) = (count("vertex")?, count("face")?);
    let mut body = &bytes[hdr_len..];
    let mut take = |n: usize| -> Result<&[u8], MeshError> {
        if body.len() < n {
            return Err(fmt_err(path, "truncated body"));
        }
        let (head, rest) = body.split_at(n);
        body = rest;
        Ok(head)
    };
    let mut mesh = TriMesh::default();
    for _ in 0..nv {
        let b = take(12)?;
        let f = |i: usize| f32::from_le_bytes(b[4 * i..4 * i + 4].try_into().unwrap()) as f64;
        mesh.vertices.push(Vector3::new(f(0), f(1), f(2)));
    }
    for _ in 0..nf {
        if take(1)?[0] != 3 {
            return Err(fmt_err(path, "only triangles are supported"));
        }
        let b = take(12)?;
        let i = |k: usize| i32::from_le_bytes(b[4 * k..4 * k + 4].try_into().unwrap());
        let t = [i(0), i(1), i(2)];
        if t.iter().any(|&x| x < 0 || x as usize >= nv) {
            return Err(fmt_err(path, "face index out of range"));
        }
        mesh.triangles.push(t.map(|x| x as u32));
    }
    Ok(mesh)
}
