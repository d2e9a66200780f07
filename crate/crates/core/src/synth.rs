//! Analytic scenes and camera trajectories used as ground truth.
//!
//! Scenes are unions of planes, spheres and axis-aligned boxes, all with
//! closed-form ray intersections, so rendered depth and cross-view
//! correspondences are exact up to floating point.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{project, Camera, DepthMap, Intrinsics, Pose};
use crate::raster::Raster;
use crate::warp::{pixel_from_normalized, CanonicalCoordMap};

const T_MIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("scene has no primitives")]
    EmptyScene,
    #[error("invalid primitive {index}: {reason}")]
    InvalidPrimitive { index: usize, reason: String },
    #[error("pixel ({0}, {1}) does not hit any geometry")]
    Miss(f64, f64),
    #[error("invalid trajectory parameters: {0}")]
    InvalidTrajectory(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Primitive {
    /// Two-sided infinite plane.
    Plane { point: [f64; 3], normal: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
    Box { min: [f64; 3], max: [f64; 3] },
}

fn v3(a: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl Primitive {
    fn validate(&self, index: usize) -> Result<(), SynthError> {
        let bad = |reason: &str| Err(SynthError::InvalidPrimitive { index, reason: reason.into() });
        match self {
            Primitive::Plane { point, normal } => {
                if point.iter().chain(normal).any(|v| !v.is_finite()) {
                    return bad("non-finite plane");
                }
                if v3(normal).norm() < 1e-12 {
                    return bad("plane normal is zero");
                }
            }
            Primitive::Sphere { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) || center.iter().any(|v| !v.is_finite()) {
                    return bad("sphere radius must be positive");
                }
            }
            Primitive::Box { min, max } => {
                if min.iter().zip(max).any(|(a, b)| !(a < b)) {
                    return bad("box min must be below max on every axis");
                }
            }
        }
        Ok(())
    }

    /// Smallest `t > 0` with `origin + t * dir` on the surface.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            Primitive::Plane { point, normal } => {
                let n = v3(normal);
                let denom = n.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = n.dot(&(v3(point) - origin)) / denom;
                (t > T_MIN).then_some(t)
            }
            Primitive::Sphere { center, radius } => {
                let oc = origin - v3(center);
                let a = dir.dot(dir);
                let half_b = oc.dot(dir);
                let c = oc.dot(&oc) - radius * radius;
                let disc = half_b * half_b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                // numerically stable root pair
                let q = if half_b > 0.0 { -half_b - sq } else { -half_b + sq };
                let (mut t0, mut t1) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                if t0 > T_MIN {
                    Some(t0)
                } else if t1 > T_MIN {
                    Some(t1)
                } else {
                    None
                }
            }
            Primitive::Box { min, max } => {
                let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
                for axis in 0..3 {
                    let (o, d) = (origin[axis], dir[axis]);
                    if d.abs() < 1e-300 {
                        if o < min[axis] || o > max[axis] {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((min[axis] - o) / d, (max[axis] - o) / d);
                    t_near = t_near.max(a.min(b));
                    t_far = t_far.min(a.max(b));
                }
                if t_near > t_far || t_far <= T_MIN {
                    None
                } else if t_near > T_MIN {
                    Some(t_near)
                } else {
                    Some(t_far)
                }
            }
        }
    }

    /// Outward unit normal at a surface point (for planes, the stored normal).
    pub fn normal_at(&self, p: &Vector3<f64>) -> Vector3<f64> {
        match self {
            Primitive::Plane { normal, .. } => v3(normal).normalize(),
            Primitive::Sphere { center, .. } => (p - v3(center)).normalize(),
            Primitive::Box { min, max } => {
                let mut best = (f64::INFINITY, Vector3::zeros());
                for axis in 0..3 {
                    for (bound, sign) in [(min[axis], -1.0), (max[axis], 1.0)] {
                        let d = (p[axis] - bound).abs();
                        if d < best.0 {
                            let mut n = Vector3::zeros();
                            n[axis] = sign;
                            best = (d, n);
                        }
                    }
                }
                best.1
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub primitives: Vec<Primitive>,
}

/// Nearest hit of a camera ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Camera-frame depth of the hit.
    pub depth: f64,
    pub point: Vector3<f64>,
    pub primitive: usize,
}

impl AnalyticScene {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self, SynthError> {
        let scene = AnalyticScene { primitives };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.primitives.is_empty() {
            return Err(SynthError::EmptyScene);
        }
        self.primitives.iter().enumerate().try_for_each(|(i, p)| p.validate(i))
    }

    /// Nearest intersection of the ray through image point `(u, v)`.
    pub fn cast(&self, u: f64, v: f64, pose: &Pose, k: &Intrinsics) -> Option<Hit> {
        let origin = pose.center();
        // unit-z camera ray, so the ray parameter is the camera-frame depth
        let dir = pose.rotation().transpose() * k.ray_camera(u, v);
        self.primitives
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.intersect(&origin, &dir).map(|t| (i, t)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(primitive, depth)| Hit { depth, point: origin + dir * depth, primitive })
    }

    /// Depth rendered at pixel centers; misses are `NaN` (invalid).
    pub fn render_depth(&self, pose: &Pose, k: &Intrinsics) -> DepthMap {
        let mut values = Vec::with_capacity(k.width as usize * k.height as usize);
        for row in 0..k.height {
            for col in 0..k.width {
                let d = self.cast(col as f64 + 0.5, row as f64 + 0.5, pose, k).map_or(f32::NAN, |h| h.depth as f32);
                values.push(d);
            }
        }
        DepthMap::new(k.width, k.height, values).expect("sized from intrinsics")
    }

    /// Procedural world-space checkerboard with cells of `cell` scene units.
    /// Misses are black.
    pub fn render_checker(&self, pose: &Pose, k: &Intrinsics, cell: f64) -> Raster<u8> {
        let mut out = Raster::new(k.width, k.height, 3, 0u8);
        for row in 0..k.height {
            for col in 0..k.width {
                if let Some(hit) = self.cast(col as f64 + 0.5, row as f64 + 0.5, pose, k) {
                    let q = hit.point / cell;
                    let parity = (q.x.floor() + q.y.floor() + q.z.floor()) as i64 & 1;
                    let base = if parity == 0 { 200 } else { 60 };
                    let tint = (hit.primitive * 40 % 256) as u8;
                    out.pixel_mut(col, row).copy_from_slice(&[base, base.wrapping_add(tint / 4), 255 - base]);
                }
            }
        }
        out
    }

    /// Where the surface seen at image point `pixel_a` of camera `a` appears in camera `b`.
    pub fn correspondence(&self, a: &Camera, b: &Camera, pixel_a: (f64, f64)) -> Result<Correspondence, SynthError> {
        let hit = self
            .cast(pixel_a.0, pixel_a.1, &a.pose, &a.intrinsics)
            .ok_or(SynthError::Miss(pixel_a.0, pixel_a.1))?;
        let Some((u, v, depth)) = project(&hit.point, &b.pose, &b.intrinsics).visible() else {
            return Ok(Correspondence::OffScreen);
        };
        let kb = &b.intrinsics;
        if !(u >= 0.0 && v >= 0.0 && u < kb.width as f64 && v < kb.height as f64) {
            return Ok(Correspondence::OffScreen);
        }
        match self.cast(u, v, &b.pose, kb) {
            Some(first) if first.depth < depth * (1.0 - 1e-6) => Ok(Correspondence::Occluded),
            _ => Ok(Correspondence::Visible { u, v, depth }),
        }
    }
}

/// Outcome of [`AnalyticScene::correspondence`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correspondence {
    Visible { u: f64, v: f64, depth: f64 },
    Occluded,
    OffScreen,
}

/// Oracle check of a warped correspondence map.
///
/// Each valid target pixel's `(u, v)` is decoded back to a source pixel
/// center, which is traced through the scene into the target camera. The
/// result is the distance in target pixels between that analytic location and
/// the target pixel center, or `None` when the oracle finds the source point
/// occluded, off-screen, or not on any surface.
pub fn correspondence_errors(scene: &AnalyticScene, map: &CanonicalCoordMap, src: &Camera, tgt: &Camera) -> Vec<Option<f64>> {
    let (sw, sh) = (src.intrinsics.width, src.intrinsics.height);
    let mut out = Vec::with_capacity(map.valid_count());
    for row in 0..map.height() {
        for col in 0..map.width() {
            let Some(px) = map.get(col, row) else { continue };
            let su = pixel_from_normalized(px[0] as f64, sw).round() + 0.5;
            let sv = pixel_from_normalized(px[1] as f64, sh).round() + 0.5;
            let err = match scene.correspondence(src, tgt, (su, sv)) {
                Ok(Correspondence::Visible { u, v, .. }) => Some(((u - (col as f64 + 0.5)).powi(2) + (v - (row as f64 + 0.5)).powi(2)).sqrt()),
                _ => None,
            };
            out.push(err);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    Orbit,
    Dolly,
    RevisitLoop,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub cameras: Vec<Camera>,
}

impl Trajectory {
    pub fn custom(cameras: Vec<Camera>) -> Result<Self, SynthError> {
        if cameras.is_empty() {
            return Err(SynthError::InvalidTrajectory("trajectory is empty".into()));
        }
        Ok(Trajectory { kind: TrajectoryKind::Custom, cameras })
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }
}

/// Parameters for [`make_trajectory`]. Angles advance clockwise seen from
/// above; world `+y` is down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectorySpec {
    /// `n` cameras evenly spaced on a horizontal circle, all looking at `center`.
    Orbit {
        center: [f64; 3],
        radius: f64,
        n: usize,
        #[serde(default)]
        height: f64,
    },
    /// Camera centers `start + i * step`, looking along `forward` (default: `step`).
    Dolly {
        start: [f64; 3],
        step: [f64; 3],
        n: usize,
        #[serde(default)]
        forward: Option<[f64; 3]>,
    },
    /// A full circle whose last pose equals the first. `outward` cameras
    /// look away from the center, otherwise at it.
    RevisitLoop {
        center: [f64; 3],
        radius: f64,
        n: usize,
        #[serde(default = "default_true")]
        outward: bool,
    },
}

fn default_true() -> bool {
    true
}

fn circle_point(center: &Vector3<f64>, radius: f64, theta: f64, height: f64) -> Vector3<f64> {
    center + Vector3::new(radius * theta.sin(), height, -radius * theta.cos())
}

pub fn make_trajectory(spec: &TrajectorySpec, k: Intrinsics) -> Result<Trajectory, SynthError> {
    k.validate().map_err(|e| SynthError::InvalidTrajectory(e.to_string()))?;
    let bad = |m: &str| Err(SynthError::InvalidTrajectory(m.into()));
    let cam = |pose: Option<Pose>| {
        pose.map(|p| Camera::new(p, k))
            .ok_or_else(|| SynthError::InvalidTrajectory("degenerate viewing direction".into()))
    };
    match spec {
        TrajectorySpec::Orbit { center, radius, n, height } => {
            if *n == 0 || !(*radius > 0.0) {
                return bad("orbit needs n >= 1 and radius > 0");
            }
            let c = v3(center);
            let cameras = (0..*n)
                .map(|i| {
                    let eye = circle_point(&c, *radius, TAU * i as f64 / *n as f64, *height);
                    cam(Pose::look_at(eye, c, Vector3::y()))
                })
                .collect::<Result<_, _>>()?;
            Ok(Trajectory { kind: TrajectoryKind::Orbit, cameras })
        }
        TrajectorySpec::Dolly { start, step, n, forward } => {
            if *n == 0 {
                return bad("dolly needs n >= 1");
            }
            let (s, st) = (v3(start), v3(step));
            let fwd = forward.map(|f| v3(&f)).unwrap_or(st);
            if fwd.norm() < 1e-12 {
                return bad("dolly needs a nonzero forward direction");
            }
            let cameras =
                (0..*n).map(|i| cam(Pose::looking_along(s + st * i as f64, fwd))).collect::<Result<_, _>>()?;
            Ok(Trajectory { kind: TrajectoryKind::Dolly, cameras })
        }
        TrajectorySpec::RevisitLoop { center, radius, n, outward } => {
            if *n < 2 || !(*radius > 0.0) {
                return bad("revisit loop needs n >= 2 and radius > 0");
            }
            let c = v3(center);
            let steps = (*n - 1) as f64;
            let cameras = (0..*n)
                .map(|i| {
                    // the closing pose reuses angle 0 exactly
                    let theta = if i + 1 == *n { 0.0 } else { TAU * i as f64 / steps };
                    let eye = circle_point(&c, *radius, theta, 0.0);
                    let pose = if *outward {
                        Pose::looking_along(eye, eye - c)
                    } else {
                        Pose::look_at(eye, c, Vector3::y())
                    };
                    cam(pose)
                })
                .collect::<Result<_, _>>()?;
            Ok(Trajectory { kind: TrajectoryKind::RevisitLoop, cameras })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::geometry::unproject_pixel;

    fn k64() -> Intrinsics {
        Intrinsics::new(60.0, 60.0, 32.0, 24.0, 64, 48).unwrap()
    }

    fn plane_z(z: f64) -> Primitive {
        Primitive::Plane { point: [0.0, 0.0, z], normal: [0.0, 0.0, -1.0] }
    }

    #[test]
    fn scene_validation() {
        assert_eq!(AnalyticScene::new(vec![]), Err(SynthError::EmptyScene));
        assert!(AnalyticScene::new(vec![Primitive::Sphere { center: [0.0; 3], radius: 0.0 }]).is_err());
        assert!(AnalyticScene::new(vec![Primitive::Box { min: [0.0; 3], max: [1.0, 0.0, 1.0] }]).is_err());
        let json = r#"{"primitives":[{"type":"sphere","center":[0,0,4],"radius":1},{"type":"box","min":[-1,-1,-1],"max":[1,1,1]}]}"#;
        let scene: AnalyticScene = serde_json::from_str(json).unwrap();
        scene.validate().unwrap();
    }

    #[test]
    fn plane_depth_constant() {
        let scene = AnalyticScene::new(vec![plane_z(2.0)]).unwrap();
        let d = scene.render_depth(&Pose::identity(), &k64());
        assert!(d.values().iter().all(|v| (*v - 2.0).abs() < 1e-6));
    }

    #[test]
    fn sphere_center_depth() {
        let scene = AnalyticScene::new(vec![Primitive::Sphere { center: [0.0, 0.0, 4.0], radius: 1.0 }]).unwrap();
        // odd raster so a pixel center sits on the optical axis
        let k = Intrinsics::new(50.0, 50.0, 32.5, 24.5, 65, 49).unwrap();
        let d = scene.render_depth(&Pose::identity(), &k);
        assert_relative_eq!(d.get(32, 24) as f64, 3.0, epsilon = 1e-6);
        assert!(d.valid(0, 0).is_none());
    }

    #[test]
    fn camera_inside_box_sees_all_faces() {
        let bx = Primitive::Box { min: [-1.0, -1.0, -1.0], max: [1.0, 1.0, 1.0] };
        let scene = AnalyticScene::new(vec![bx]).unwrap();
        let eye = Vector3::new(-0.9, -0.9, -0.9);
        let pose = Pose::look_at(eye, Vector3::new(1.0, 1.0, 1.0), Vector3::new(0.0, 1.0, 0.3)).unwrap();
        let k = Intrinsics::new(12.0, 12.0, 64.0, 64.0, 128, 128).unwrap();
        let mut faces = [false; 6];
        for row in 0..128 {
            for col in 0..128 {
                let (u, v) = (col as f64 + 0.5, row as f64 + 0.5);
                let hit = scene.cast(u, v, &pose, &k).expect("inside a closed box every ray hits");
                // independent slab arithmetic: exit distance along the unit-z ray
                let dir = pose.rotation().transpose() * k.ray_camera(u, v);
                let mut t_exit = f64::INFINITY;
                let mut face = 0;
                for axis in 0..3 {
                    let bound = if dir[axis] > 0.0 { 1.0 } else { -1.0 };
                    let t = (bound - eye[axis]) / dir[axis];
                    if t < t_exit {
                        t_exit = t;
                        face = axis * 2 + usize::from(dir[axis] > 0.0);
                    }
                }
                assert!((hit.depth - t_exit).abs() < 1e-9 * t_exit.max(1.0));
                faces[face] = true;
            }
        }
        assert_eq!(faces, [true; 6]);
    }

    #[test]
    fn correspondence_identity_and_dolly() {
        let scene = AnalyticScene::new(vec![plane_z(2.0)]).unwrap();
        let a = Camera::new(Pose::identity(), k64());
        match scene.correspondence(&a, &a, (10.5, 7.5)).unwrap() {
            Correspondence::Visible { u, v, .. } => {
                assert_relative_eq!(u, 10.5, epsilon = 1e-9);
                assert_relative_eq!(v, 7.5, epsilon = 1e-9);
            }
            other => panic!("{other:?}"),
        }
        // camera moves 1 unit toward the plane: plane depth 2 -> 1, offsets from the
        // principal point scale by 2
        let b = Camera::new(Pose::from_translation(Vector3::new(0.0, 0.0, -1.0)), k64());
        match scene.correspondence(&a, &b, (40.0, 30.0)).unwrap() {
            Correspondence::Visible { u, v, depth } => {
                assert_relative_eq!(u, 32.0 + 2.0 * 8.0, epsilon = 1e-9);
                assert_relative_eq!(v, 24.0 + 2.0 * 6.0, epsilon = 1e-9);
                assert_relative_eq!(depth, 1.0, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let miss_scene = AnalyticScene::new(vec![Primitive::Sphere { center: [0.0, 0.0, 5.0], radius: 0.1 }]).unwrap();
        assert!(matches!(miss_scene.correspondence(&a, &a, (0.5, 0.5)), Err(SynthError::Miss(..))));
    }

    #[test]
    fn sphere_far_side_is_occluded() {
        let scene = AnalyticScene::new(vec![Primitive::Sphere { center: [0.0, 0.0, 4.0], radius: 1.0 }]).unwrap();
        let a = Camera::new(Pose::identity(), k64());
        // b sits behind the sphere looking back toward a
        let b = Camera::new(Pose::look_at(Vector3::new(0.0, 0.0, 8.0), Vector3::new(0.0, 0.0, 4.0), Vector3::y()).unwrap(), k64());
        assert_eq!(scene.correspondence(&a, &b, (32.0, 24.0)).unwrap(), Correspondence::Occluded);
        // a camera off to the side sees a limb point near x = +1 from a, but not one on the -x limb
        let c = Camera::new(Pose::look_at(Vector3::new(6.0, 0.0, 4.0), Vector3::new(0.0, 0.0, 4.0), Vector3::y()).unwrap(), k64());
        let u_left = 32.0 - 60.0 * 0.24;
        assert_eq!(scene.correspondence(&a, &c, (u_left, 24.0)).unwrap(), Correspondence::Occluded);
    }

    #[test]
    fn render_consistent_with_correspondence() {
        let scene = AnalyticScene::new(vec![
            Primitive::Sphere { center: [0.2, 0.1, 4.0], radius: 1.0 },
            Primitive::Box { min: [-3.0, 1.0, 2.0], max: [3.0, 1.5, 9.0] },
            plane_z(9.0),
        ])
        .unwrap();
        let a = Camera::new(Pose::identity(), k64());
        let b = Camera::new(Pose::look_at(Vector3::new(0.7, -0.3, 0.2), Vector3::new(0.0, 0.0, 4.0), Vector3::y()).unwrap(), k64());
        let depth = scene.render_depth(&a.pose, &a.intrinsics);
        let mut checked = 0;
        for row in 0..48 {
            for col in 0..64 {
                let Some(d) = depth.valid(col, row) else { continue };
                let (u, v) = (col as f64 + 0.5, row as f64 + 0.5);
                if let Correspondence::Visible { u: ub, v: vb, .. } = scene.correspondence(&a, &b, (u, v)).unwrap() {
                    // f32 depth storage limits agreement to ~1e-7 relative
                    let w = unproject_pixel(col, row, d as f64, &a.pose, &a.intrinsics).unwrap();
                    let (pu, pv, _) = project(&w, &b.pose, &b.intrinsics).visible().unwrap();
                    assert!((pu - ub).abs() < 1e-3 && (pv - vb).abs() < 1e-3);
                    let exact = scene.cast(u, v, &a.pose, &a.intrinsics).unwrap().point;
                    let (eu, ev, _) = project(&exact, &b.pose, &b.intrinsics).visible().unwrap();
                    assert!((eu - ub).abs() < 1e-6 && (ev - vb).abs() < 1e-6);
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn orbit_quarter_turns() {
        let spec = TrajectorySpec::Orbit { center: [0.0, 0.0, 0.0], radius: 3.0, n: 4, height: 0.0 };
        let traj = make_trajectory(&spec, k64()).unwrap();
        assert_eq!(traj.kind, TrajectoryKind::Orbit);
        let expected = [[0.0, 0.0, -3.0], [3.0, 0.0, 0.0], [0.0, 0.0, 3.0], [-3.0, 0.0, 0.0]];
        for (cam, e) in traj.cameras.iter().zip(expected) {
            assert_relative_eq!(cam.pose.center(), v3(&e), epsilon = 1e-12);
            let p = cam.pose.transform(&Vector3::zeros());
            assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && p.z > 0.0);
        }
    }

    #[test]
    fn revisit_loop_closes() {
        let spec = TrajectorySpec::RevisitLoop { center: [0.0; 3], radius: 2.0, n: 50, outward: true };
        let traj = make_trajectory(&spec, k64()).unwrap();
        let (first, last) = (traj.cameras[0].pose, traj.cameras[49].pose);
        assert!((first.rotation() - last.rotation()).amax() < 1e-6);
        assert!((first.translation() - last.translation()).amax() < 1e-6);
        let mid = traj.cameras[24].pose.center();
        assert!((mid - first.center()).norm() > 3.0);
    }

    #[test]
    fn dolly_translations() {
        let spec = TrajectorySpec::Dolly { start: [0.0, 0.0, 0.0], step: [0.0, 0.0, 1.0], n: 2, forward: None };
        let traj = make_trajectory(&spec, k64()).unwrap();
        let delta = traj.cameras[1].pose.center() - traj.cameras[0].pose.center();
        assert_eq!(delta, Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn invalid_trajectories() {
        let k = k64();
        assert!(make_trajectory(&TrajectorySpec::Orbit { center: [0.0; 3], radius: 1.0, n: 0, height: 0.0 }, k).is_err());
        assert!(make_trajectory(&TrajectorySpec::RevisitLoop { center: [0.0; 3], radius: -1.0, n: 10, outward: true }, k).is_err());
        assert!(make_trajectory(&TrajectorySpec::Dolly { start: [0.0; 3], step: [0.0; 3], n: 3, forward: None }, k).is_err());
        assert!(Trajectory::custom(vec![]).is_err());
    }
}
