//! Pinhole cameras, rigid world-to-camera poses and Plücker ray embeddings.
//!
//! Conventions used throughout the crate:
//!
//! * Camera frame is x right, y down, z forward. Depth is the camera-frame
//!   `z`, not the ray length.
//! * A [`Pose`] maps world points into the camera frame: `x_cam = R x_world + t`.
//! * Raster pixel `(col, row)` samples the continuous image point
//!   `(col + 0.5, row + 0.5)`. Functions taking explicit `(u, v)` coordinates
//!   use them verbatim.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Raster;

const ORTHO_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation not orthonormal (max deviation {0:.3e})")]
    NotOrthonormal(f64),
    #[error("rotation is a reflection (det = {0})")]
    Reflection(f64),
    #[error("non-finite pose entry")]
    NonFinitePose,
    #[error("depth must be positive and finite, got {0}")]
    NonPositiveDepth(f64),
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let k = Intrinsics { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Intrinsics with the principal point at the image center and a
    /// horizontal field of view of `hfov_deg`.
    pub fn from_hfov(hfov_deg: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let f = 0.5 * width as f64 / (0.5 * hfov_deg.to_radians()).tan();
        Self::new(f, f, 0.5 * width as f64, 0.5 * height as f64, width, height)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let all_finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(GeometryError::InvalidIntrinsics("non-finite value".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics("image size must be at least 1x1".into()));
        }
        Ok(())
    }

    /// Same camera on an image downsampled by an integer factor.
    pub fn scaled(&self, factor: u32) -> Intrinsics {
        let s = 1.0 / factor as f64;
        Intrinsics {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            width: (self.width / factor).max(1),
            height: (self.height / factor).max(1),
        }
    }

    /// Viewing direction in the camera frame with unit `z`.
    #[inline]
    pub fn ray_camera(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Rigid world-to-camera transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinitePose);
        }
        let dev = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if dev > ORTHO_TOL {
            return Err(GeometryError::NotOrthonormal(dev));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(GeometryError::Reflection(det));
        }
        Ok(Pose { rotation, translation })
    }

    pub fn identity() -> Self {
        Pose { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Pure translation of the world-to-camera transform (camera center is `-t`).
    pub fn from_translation(t: Vector3<f64>) -> Self {
        Pose { rotation: Matrix3::identity(), translation: t }
    }

    /// Camera at `eye` looking at `target`; `down` hints the image-down direction.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, down: Vector3<f64>) -> Option<Self> {
        let z = (target - eye).try_normalize(1e-12)?;
        let x = down.cross(&z).try_normalize(1e-12)?;
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Some(Pose { rotation, translation: -(rotation * eye) })
    }

    /// Camera at `eye` looking along `forward` with world `+y` as image down.
    pub fn looking_along(eye: Vector3<f64>, forward: Vector3<f64>) -> Option<Self> {
        Self::look_at(eye, eye + forward, Vector3::y())
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    #[inline]
    pub fn transform(&self, p_world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p_world + self.translation
    }

    #[inline]
    pub fn inverse_transform(&self, p_cam: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p_cam - self.translation)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Row-major rotation followed by translation, as stored in camera JSON.
    pub fn to_arrays(&self) -> ([f64; 9], [f64; 3]) {
        let r = &self.rotation;
        (
            [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            [self.translation.x, self.translation.y, self.translation.z],
        )
    }

    pub fn from_arrays(r: &[f64; 9], t: &[f64; 3]) -> Result<Self, GeometryError> {
        Self::new(Matrix3::from_row_slice(r), Vector3::new(t[0], t[1], t[2]))
    }
}

/// Posed pinhole camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub pose: Pose,
    pub intrinsics: Intrinsics,
}

impl Camera {
    pub fn new(pose: Pose, intrinsics: Intrinsics) -> Self {
        Camera { pose, intrinsics }
    }
}

/// Camera JSON object: `{"fx","fy","cx","cy","width","height","R":[9],"t":[3]}`,
/// world-to-camera, rotation row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl From<&Camera> for CameraJson {
    fn from(c: &Camera) -> Self {
        let k = c.intrinsics;
        let (r, t) = c.pose.to_arrays();
        CameraJson { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: k.width, height: k.height, r, t }
    }
}

impl TryFrom<&CameraJson> for Camera {
    type Error = GeometryError;

    fn try_from(j: &CameraJson) -> Result<Self, Self::Error> {
        let intrinsics = Intrinsics::new(j.fx, j.fy, j.cx, j.cy, j.width, j.height)?;
        let pose = Pose::from_arrays(&j.r, &j.t)?;
        Ok(Camera { pose, intrinsics })
    }
}

/// Result of projecting a world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    /// Continuous image coordinates and camera-frame depth.
    Visible { u: f64, v: f64, depth: f64 },
    BehindCamera,
}

impl Projection {
    pub fn visible(self) -> Option<(f64, f64, f64)> {
        match self {
            Projection::Visible { u, v, depth } => Some((u, v, depth)),
            Projection::BehindCamera => None,
        }
    }
}

/// Projects a world point. No frustum clamp: callers check image bounds.
#[inline]
pub fn project(point_world: &Vector3<f64>, pose: &Pose, k: &Intrinsics) -> Projection {
    let p = pose.transform(point_world);
    if p.z <= 0.0 {
        return Projection::BehindCamera;
    }
    Projection::Visible { u: k.fx * p.x / p.z + k.cx, v: k.fy * p.y / p.z + k.cy, depth: p.z }
}

#[inline]
pub fn unproject(
    u: f64,
    v: f64,
    depth: f64,
    pose: &Pose,
    k: &Intrinsics,
) -> Result<Vector3<f64>, GeometryError> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    Ok(unproject_unchecked(u, v, depth, pose, k))
}

/// [`unproject`] for callers that already validated `depth`.
#[inline]
pub(crate) fn unproject_unchecked(u: f64, v: f64, depth: f64, pose: &Pose, k: &Intrinsics) -> Vector3<f64> {
    pose.inverse_transform(&(k.ray_camera(u, v) * depth))
}

/// Unprojects raster pixel `(col, row)` through its center.
#[inline]
pub fn unproject_pixel(
    col: u32,
    row: u32,
    depth: f64,
    pose: &Pose,
    k: &Intrinsics,
) -> Result<Vector3<f64>, GeometryError> {
    unproject(col as f64 + 0.5, row as f64 + 0.5, depth, pose, k)
}

/// Line through a pixel in Plücker coordinates `(d, o × d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluckerRay {
    pub direction: Vector3<f64>,
    pub moment: Vector3<f64>,
}

pub fn plucker_ray(u: f64, v: f64, pose: &Pose, k: &Intrinsics) -> PluckerRay {
    let direction = (pose.rotation.transpose() * k.ray_camera(u, v)).normalize();
    let origin = pose.center();
    PluckerRay { direction, moment: origin.cross(&direction) }
}

/// Per-pixel Plücker embedding `(d_x, d_y, d_z, m_x, m_y, m_z)` sampled at pixel centers.
pub fn plucker_raster(pose: &Pose, k: &Intrinsics) -> Raster<f64> {
    let mut out = Raster::new(k.width, k.height, 6, 0.0);
    for row in 0..k.height {
        for col in 0..k.width {
            let ray = plucker_ray(col as f64 + 0.5, row as f64 + 0.5, pose, k);
            let px = out.pixel_mut(col, row);
            px[..3].copy_from_slice(ray.direction.as_slice());
            px[3..].copy_from_slice(ray.moment.as_slice());
        }
    }
    out
}

/// Row-major `width x height` depth raster. A value is valid iff it is
/// positive and finite.
///
/// Equality is bitwise, so maps holding NaN compare equal to their copies.
#[derive(Debug, Clone)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<f32>,
}

impl PartialEq for DepthMap {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.values.iter().map(|v| v.to_bits()).eq(other.values.iter().map(|v| v.to_bits()))
    }
}

impl DepthMap {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Option<Self> {
        (values.len() == width as usize * height as usize).then_some(DepthMap { width, height, values })
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        DepthMap { width, height, values: vec![value; width as usize * height as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, col: u32, row: u32) -> f32 {
        self.values[row as usize * self.width as usize + col as usize]
    }

    /// Depth at `(col, row)` if valid.
    #[inline]
    pub fn valid(&self, col: u32, row: u32) -> Option<f32> {
        let d = self.get(col, row);
        is_valid_depth(d).then_some(d)
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|d| is_valid_depth(**d)).count()
    }

    pub fn matches(&self, k: &Intrinsics) -> bool {
        self.width == k.width && self.height == k.height
    }

    /// Median of the valid depths.
    pub fn median_valid(&self) -> Option<f64> {
        let mut v: Vec<f32> = self.values.iter().copied().filter(|d| is_valid_depth(*d)).collect();
        if v.is_empty() {
            return None;
        }
        let mid = v.len() / 2;
        let (_, m, _) = v.select_nth_unstable_by(mid, f32::total_cmp);
        Some(*m as f64)
    }
}

#[inline]
pub fn is_valid_depth(d: f32) -> bool {
    d > 0.0 && d.is_finite()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam100() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    #[test]
    fn depth_equality_is_bitwise() {
        let a = DepthMap::new(2, 1, vec![f32::NAN, 1.0]).unwrap();
        assert_eq!(a, a.clone());
        assert_ne!(a, DepthMap::new(2, 1, vec![f32::NAN, 2.0]).unwrap());
        assert_ne!(DepthMap::filled(1, 1, 0.0), DepthMap::filled(1, 1, -0.0));
    }

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let angle = rng.random_range(-3.0..3.0);
        let rot = nalgebra::Rotation3::new(axis.normalize() * angle);
        let t = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        Pose::new(*rot.matrix(), t).unwrap()
    }

    #[test]
    fn project_examples() {
        let k = cam100();
        let id = Pose::identity();
        assert_eq!(project(&Vector3::new(0.0, 0.0, 2.0), &id, &k), Projection::Visible { u: 50.0, v: 50.0, depth: 2.0 });
        assert_eq!(project(&Vector3::new(1.0, 0.0, 2.0), &id, &k), Projection::Visible { u: 100.0, v: 50.0, depth: 2.0 });
        assert_eq!(project(&Vector3::new(0.0, 0.0, -1.0), &id, &k), Projection::BehindCamera);
        assert_eq!(project(&Vector3::new(0.0, 0.0, 0.0), &id, &k), Projection::BehindCamera);
    }

    #[test]
    fn unproject_examples() {
        let k = cam100();
        let p = unproject(50.0, 50.0, 2.0, &Pose::identity(), &k).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 2.0));
        // world-to-camera translation (0,0,-3) puts the camera center at z=+3
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, -3.0));
        let p = unproject(50.0, 50.0, 2.0, &pose, &k).unwrap();
        assert_relative_eq!(p, Vector3::new(0.0, 0.0, 5.0), epsilon = 1e-12);
        assert!(matches!(unproject(1.0, 1.0, 0.0, &pose, &k), Err(GeometryError::NonPositiveDepth(_))));
        assert!(unproject(1.0, 1.0, -2.0, &pose, &k).is_err());
        assert!(unproject(1.0, 1.0, f64::NAN, &pose, &k).is_err());
    }

    #[test]
    fn round_trip_thousand_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = Intrinsics::new(420.0, 410.0, 416.0, 240.0, 832, 480).unwrap();
        let mut max_err: f64 = 0.0;
        for _ in 0..1000 {
            let pose = random_pose(&mut rng);
            let (u, v, d) = (rng.random_range(0.0..832.0), rng.random_range(0.0..480.0), rng.random_range(0.1..50.0));
            let w = unproject(u, v, d, &pose, &k).unwrap();
            let (pu, pv, pd) = project(&w, &pose, &k).visible().unwrap();
            max_err = max_err.max((pu - u).abs() / u.abs().max(1.0));
            max_err = max_err.max((pv - v).abs() / v.abs().max(1.0));
            max_err = max_err.max((pd - d).abs() / d);
        }
        assert!(max_err < 1e-6, "max err {max_err}");
    }

    #[test]
    fn rejects_bad_rotations() {
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(Pose::new(skew, Vector3::zeros()), Err(GeometryError::NotOrthonormal(_))));
        let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(Pose::new(flip, Vector3::zeros()), Err(GeometryError::Reflection(_))));
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0, 1, 1).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 0.0, 0.0, 0, 1).is_err());
        assert!(Intrinsics::new(1.0, f64::INFINITY, 0.0, 0.0, 1, 1).is_err());
    }

    #[test]
    fn plucker_examples() {
        let k = cam100();
        let ray = plucker_ray(50.0, 50.0, &Pose::identity(), &k);
        assert_eq!(ray.direction, Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(ray.moment, Vector3::zeros());
        let ray = plucker_ray(3.0, 91.0, &Pose::identity(), &k);
        assert_eq!(ray.moment, Vector3::zeros());
    }

    #[test]
    fn plucker_line_invariance_under_shift_along_ray() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = cam100();
        for _ in 0..100 {
            let pose = random_pose(&mut rng);
            let (u, v) = (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
            let a = plucker_ray(u, v, &pose, &k);
            // move the camera center along the ray: world-to-camera t' = t - R (s d)
            let s = rng.random_range(-3.0..3.0);
            let t2 = pose.translation() - pose.rotation() * (a.direction * s);
            let shifted = Pose::new(*pose.rotation(), t2).unwrap();
            let b = plucker_ray(u, v, &shifted, &k);
            assert_relative_eq!(a.direction, b.direction, epsilon = 1e-12);
            assert_relative_eq!(a.moment, b.moment, epsilon = 1e-9);
        }
    }

    #[test]
    fn plucker_raster_matches_rays() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = Intrinsics::new(80.0, 90.0, 31.0, 22.5, 64, 48).unwrap();
        let pose = random_pose(&mut rng);
        let r = plucker_raster(&pose, &k);
        for _ in 0..100 {
            let (c, row) = (rng.random_range(0..64), rng.random_range(0..48));
            let ray = plucker_ray(c as f64 + 0.5, row as f64 + 0.5, &pose, &k);
            let px = r.pixel(c, row);
            assert_eq!(&px[..3], ray.direction.as_slice());
            assert_eq!(&px[3..], ray.moment.as_slice());
        }
        for px in r.pixels() {
            let d = Vector3::new(px[0], px[1], px[2]);
            let m = Vector3::new(px[3], px[4], px[5]);
            assert!((d.norm() - 1.0).abs() < 1e-9);
            assert!(d.dot(&m).abs() < 1e-9);
        }
    }

    #[test]
    fn plucker_invariants_many_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let pose = random_pose(&mut rng);
            let f = rng.random_range(50.0..2000.0);
            let k = Intrinsics::new(f, f * rng.random_range(0.8..1.2), 320.0, 240.0, 640, 480).unwrap();
            let ray = plucker_ray(rng.random_range(-100.0..740.0), rng.random_range(-100.0..580.0), &pose, &k);
            assert!((ray.direction.norm() - 1.0).abs() < 1e-9);
            assert!(ray.direction.dot(&ray.moment).abs() < 1e-9);
        }
    }

    #[test]
    fn look_at_points_camera_at_target() {
        let eye = Vector3::new(1.0, -2.0, 3.0);
        let target = Vector3::new(0.0, 0.5, -1.0);
        let pose = Pose::look_at(eye, target, Vector3::y()).unwrap();
        assert_relative_eq!(pose.center(), eye, epsilon = 1e-12);
        let p = pose.transform(&target);
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && p.z > 0.0);
        Pose::new(*pose.rotation(), *pose.translation()).unwrap();
    }

    #[test]
    fn camera_json_round_trip() {
        let k = Intrinsics::new(500.0, 510.0, 320.5, 240.25, 640, 480).unwrap();
        let pose = Pose::look_at(Vector3::new(0.3, 0.1, -2.0), Vector3::zeros(), Vector3::y()).unwrap();
        let cam = Camera::new(pose, k);
        let text = serde_json::to_string(&CameraJson::from(&cam)).unwrap();
        assert!(text.contains("\"R\":["));
        let back: CameraJson = serde_json::from_str(&text).unwrap();
        assert_eq!(Camera::try_from(&back).unwrap(), cam);
    }

    #[test]
    fn median_depth() {
        let d = DepthMap::new(3, 2, vec![1.0, f32::NAN, 3.0, -1.0, 2.0, 0.0]).unwrap();
        assert_eq!(d.valid_count(), 3);
        assert_eq!(d.median_valid(), Some(2.0));
        assert_eq!(DepthMap::filled(2, 2, 0.0).median_valid(), None);
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
                                            angle in -3.1f64..3.1, tx in -10.0f64..10.0, ty in -10.0f64..10.0, tz in -10.0f64..10.0) {
            let axis = Vector3::new(ax, ay, az);
            prop_assume!(axis.norm() > 1e-3);
            let rot = nalgebra::Rotation3::new(axis.normalize() * angle);
            let pose = Pose::new(*rot.matrix(), Vector3::new(tx, ty, tz)).unwrap();
            let id = pose.compose(&pose.inverse());
            prop_assert!((id.rotation() - Matrix3::identity()).amax() < 1e-9);
            prop_assert!(id.translation().amax() < 1e-9);
        }

        #[test]
        fn compose_is_associative(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!((l.rotation() - r.rotation()).amax() < 1e-9);
            prop_assert!((l.translation() - r.translation()).amax() < 1e-9);
        }

        #[test]
        fn project_unproject_identity(seed in 0u64..10_000, u in 0.0f64..640.0, v in 0.0f64..480.0, d in 0.05f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pose = random_pose(&mut rng);
            let k = Intrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480).unwrap();
            let w = unproject(u, v, d, &pose, &k).unwrap();
            let (pu, pv, pd) = project(&w, &pose, &k).visible().unwrap();
            prop_assert!((pu - u).abs() <= 1e-6 * u.abs().max(1.0));
            prop_assert!((pv - v).abs() <= 1e-6 * v.abs().max(1.0));
            prop_assert!((pd - d).abs() <= 1e-6 * d);
        }
    }
}
