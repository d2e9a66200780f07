use nalgebra::Vector3;

use super::MeshError;
use crate::geometry::{DepthMap, Intrinsics, Pose};

/// World points with unit normals facing the camera that saw them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrientedPointSet {
    pub points: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
}

impl OrientedPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, point: Vector3<f64>, normal: Vector3<f64>) {
        self.points.push(point);
        self.normals.push(normal);
    }
}

/// Unprojects every `stride`-th valid pixel and attaches a normal from the
/// central-difference tangents of the unprojected depth. Pixels whose four
/// neighbours are not all valid are skipped.
pub fn depth_to_oriented_points(
    depth: &DepthMap,
    pose: &Pose,
    k: &Intrinsics,
    stride: usize,
) -> Result<OrientedPointSet, MeshError> {
    if stride == 0 {
        return Err(MeshError::BadStride);
    }
    if !depth.matches(k) {
        return Err(MeshError::DimensionMismatch {
            depth_w: depth.width(),
            depth_h: depth.height(),
            k_w: k.width,
            k_h: k.height,
        });
    }
    let (w, h) = (depth.width(), depth.height());
    let cam_point = |c: u32, r: u32| -> Option<Vector3<f64>> {
        let z = depth.valid(c, r)? as f64;
        Some(k.ray_camera(c as f64 + 0.5, r as f64 + 0.5) * z)
    };
    let rt = pose.rotation().transpose();
    let mut out = OrientedPointSet::default();
    for r in (1..h.saturating_sub(1)).step_by(stride) {
        for c in (1..w.saturating_sub(1)).step_by(stride) {
            let Some(p) = cam_point(c, r) else { continue };
            let (Some(l), Some(rr), Some(up), Some(dn)) =
                (cam_point(c - 1, r), cam_point(c + 1, r), cam_point(c, r - 1), cam_point(c, r + 1))
            else {
                continue;
            };
            let mut n = (rr - l).cross(&(dn - up));
            let len = n.norm();
            if !(len > 0.0 && len.is_finite()) {
                continue;
            }
            n /= len;
            if n.dot(&p) > 0.0 {
                n = -n;
            }
            out.push(pose.inverse_transform(&p), rt * n);
        }
    }
    Ok(out)
}
