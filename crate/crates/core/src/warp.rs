//! Forward warping of canonical coordinate maps and RGB frames.
//!
//! A retrieved frame in slot `j` is tagged with a canonical map whose
//! channels are `(u, v, 2j/n_s - 1)`, with `u, v` spanning `[-1, 1]` across
//! pixel centers. The map is splatted into the target camera using the
//! frame's full-resolution depth, yielding a dense correspondence raster plus
//! the warped depth as a fourth channel.
//!
//! Splatting writes each valid source pixel to the single nearest target
//! pixel. Collisions keep the smallest target depth; candidates within
//! `1e-6 * depth` of that minimum tie, and the smallest source pixel index
//! wins, so the output does not depend on iteration order.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::cache::{CacheError, FrameId, SceneCache};
use crate::geometry::{unproject_unchecked, Camera, DepthMap};
use crate::raster::Raster;

pub const CORRESPONDENCE_MAGIC: &[u8; 4] = b"LYC1";
pub const Z_TIE_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum WarpError {
    #[error("slot {j} out of range for {n_s} slots")]
    SlotOutOfRange { j: usize, n_s: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{got} maps exceed {n_s} slots")]
    TooManyMaps { got: usize, n_s: usize },
    #[error("correspondence file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// Normalized coordinate of pixel center `i` on an axis of `n` pixels.
#[inline]
pub fn normalized_coord(i: u32, n: u32) -> f64 {
    if n <= 1 {
        0.0
    } else {
        2.0 * i as f64 / (n - 1) as f64 - 1.0
    }
}

/// Inverse of [`normalized_coord`], continuous.
#[inline]
pub fn pixel_from_normalized(x: f64, n: u32) -> f64 {
    if n <= 1 {
        0.0
    } else {
        (x + 1.0) * 0.5 * (n - 1) as f64
    }
}

#[inline]
pub fn slot_value(j: usize, n_s: usize) -> f64 {
    2.0 * j as f64 / n_s as f64 - 1.0
}

/// 3-channel `(u, v, slot)` source map for slot `j` of `n_s`.
pub fn canonical_source_map(j: usize, n_s: usize, width: u32, height: u32) -> Result<Raster<f32>, WarpError> {
    if j >= n_s {
        return Err(WarpError::SlotOutOfRange { j, n_s });
    }
    let s = slot_value(j, n_s) as f32;
    let mut map = Raster::new(width, height, 3, 0.0f32);
    for row in 0..height {
        let v = normalized_coord(row, height) as f32;
        for col in 0..width {
            map.pixel_mut(col, row).copy_from_slice(&[normalized_coord(col, width) as f32, v, s]);
        }
    }
    Ok(map)
}

/// Warped correspondence raster: channels `(u, v, slot, depth)` plus validity.
/// Invalid pixels hold zeros in every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalCoordMap {
    pub channels: Raster<f32>,
    pub valid: Vec<bool>,
}

impl CanonicalCoordMap {
    /// All-zero, all-invalid map used for empty slots.
    pub fn padding(width: u32, height: u32) -> Self {
        CanonicalCoordMap {
            channels: Raster::new(width, height, 4, 0.0),
            valid: vec![false; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.channels.width()
    }

    pub fn height(&self) -> u32 {
        self.channels.height()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn is_padding(&self) -> bool {
        self.valid_count() == 0
    }

    /// `(u, v, slot, depth)` at a pixel, if valid.
    pub fn get(&self, col: u32, row: u32) -> Option<[f32; 4]> {
        let i = row as usize * self.width() as usize + col as usize;
        self.valid[i].then(|| self.channels.pixel_at(i).try_into().unwrap())
    }

    /// `(u, v, slot)` mapped from `[-1, 1]` to 8-bit RGB; invalid pixels black.
    pub fn to_rgb8(&self) -> Raster<u8> {
        let mut out = Raster::new(self.width(), self.height(), 3, 0u8);
        let to8 = |x: f32| ((x.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
        for (i, ok) in self.valid.iter().enumerate() {
            if *ok {
                let p = self.channels.pixel_at(i);
                out.pixel_at_mut(i).copy_from_slice(&[to8(p[0]), to8(p[1]), to8(p[2])]);
            }
        }
        out
    }

    /// Little-endian `LYC1` file: magic, u32 width, u32 height, u8 channel
    /// count (5), then planar f32 planes `u, v, slot, depth, validity`.
    pub fn encode(&self) -> Vec<u8> {
        let n = self.valid.len();
        let mut out = Vec::with_capacity(13 + n * 20);
        out.extend_from_slice(CORRESPONDENCE_MAGIC);
        out.extend_from_slice(&self.width().to_le_bytes());
        out.extend_from_slice(&self.height().to_le_bytes());
        out.push(5);
        for c in 0..4 {
            for p in self.channels.pixels() {
                out.extend_from_slice(&p[c].to_le_bytes());
            }
        }
        for v in &self.valid {
            out.extend_from_slice(&(if *v { 1.0f32 } else { 0.0 }).to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WarpError> {
        let fmt = |m: &str| Err(WarpError::Format(m.to_string()));
        if bytes.len() < 13 || &bytes[..4] != CORRESPONDENCE_MAGIC {
            return fmt("bad magic, expected LYC1");
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if bytes[12] != 5 {
            return fmt(&format!("expected 5 channels, found {}", bytes[12]));
        }
        let n = width as usize * height as usize;
        if bytes.len() != 13 + n * 20 {
            return fmt(&format!("truncated: {} bytes for {}x{}", bytes.len(), width, height));
        }
        let plane = |c: usize| {
            bytes[13 + c * n * 4..13 + (c + 1) * n * 4].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        };
        let mut data = vec![0.0f32; n * 4];
        for c in 0..4 {
            for (i, v) in plane(c).enumerate() {
                data[i * 4 + c] = v;
            }
        }
        let valid = plane(4).map(|v| v != 0.0).collect();
        Ok(CanonicalCoordMap { channels: Raster::from_vec(width, height, 4, data).unwrap(), valid })
    }

    pub fn write(&self, path: &Path) -> Result<(), WarpError> {
        fs::write(path, self.encode()).map_err(|source| WarpError::Io { path: path.display().to_string(), source })
    }

    pub fn read(path: &Path) -> Result<Self, WarpError> {
        let bytes = fs::read(path).map_err(|source| WarpError::Io { path: path.display().to_string(), source })?;
        Self::decode(&bytes)
    }
}

/// Per-target-pixel winning source pixel and its target depth.
#[derive(Debug, Clone)]
pub struct Splat {
    pub winner: Vec<Option<u32>>,
    pub depth: Vec<f64>,
}

fn check_depth(depth: &DepthMap, cam: &Camera) -> Result<(), WarpError> {
    if !depth.matches(&cam.intrinsics) {
        return Err(WarpError::DimensionMismatch(format!(
            "depth {}x{} vs source camera {}x{}",
            depth.width(),
            depth.height(),
            cam.intrinsics.width,
            cam.intrinsics.height
        )));
    }
    Ok(())
}

/// Splats every valid source pixel into the target view.
pub fn splat(depth: &DepthMap, src: &Camera, tgt: &Camera) -> Result<Splat, WarpError> {
    check_depth(depth, src)?;
    let (sw, sh) = (depth.width(), depth.height());
    let (tw, th) = (tgt.intrinsics.width, tgt.intrinsics.height);
    let n_tgt = tw as usize * th as usize;

    let targets: Vec<Option<(u32, f64)>> = (0..sw as usize * sh as usize)
        .into_par_iter()
        .map(|i| {
            let (col, row) = ((i % sw as usize) as u32, (i / sw as usize) as u32);
            let z = depth.valid(col, row)?;
            let w = unproject_unchecked(col as f64 + 0.5, row as f64 + 0.5, z as f64, &src.pose, &src.intrinsics);
            let c = tgt.pose.transform(&w);
            if c.z <= 0.0 {
                return None;
            }
            let k = &tgt.intrinsics;
            let (u, v) = (k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy);
            // nearest pixel center (x + 0.5) is floor(u)
            if !(u >= 0.0 && v >= 0.0 && u < tw as f64 && v < th as f64) {
                return None;
            }
            Some(((v as u32) * tw + u as u32, c.z))
        })
        .collect();

    let mut min_depth = vec![f64::INFINITY; n_tgt];
    for (t, z) in targets.iter().flatten() {
        let m = &mut min_depth[*t as usize];
        if *z < *m {
            *m = *z;
        }
    }
    let mut winner = vec![None; n_tgt];
    for (i, entry) in targets.iter().enumerate() {
        if let Some((t, z)) = entry {
            let t = *t as usize;
            if winner[t].is_none() && *z <= min_depth[t] * (1.0 + Z_TIE_EPS) {
                winner[t] = Some(i as u32);
            }
        }
    }
    // report the winner's own depth
    let depth_out = winner
        .iter()
        .enumerate()
        .map(|(t, w)| match w {
            Some(i) => targets[*i as usize].map_or(f64::INFINITY, |(_, z)| z),
            None => min_depth[t],
        })
        .collect();
    Ok(Splat { winner, depth: depth_out })
}

/// Forward-warps a 3-channel canonical source map into the target camera.
pub fn forward_warp_coords(
    src_map: &Raster<f32>,
    depth_src: &DepthMap,
    src: &Camera,
    tgt: &Camera,
) -> Result<CanonicalCoordMap, WarpError> {
    if src_map.channels() != 3 || src_map.width() != depth_src.width() || src_map.height() != depth_src.height() {
        return Err(WarpError::DimensionMismatch(format!(
            "source map {}x{}x{} vs depth {}x{}",
            src_map.width(),
            src_map.height(),
            src_map.channels(),
            depth_src.width(),
            depth_src.height()
        )));
    }
    let s = splat(depth_src, src, tgt)?;
    let (tw, th) = (tgt.intrinsics.width, tgt.intrinsics.height);
    let mut out = CanonicalCoordMap::padding(tw, th);
    for (t, w) in s.winner.iter().enumerate() {
        if let Some(i) = w {
            let px = src_map.pixel_at(*i as usize);
            out.channels.pixel_at_mut(t).copy_from_slice(&[px[0], px[1], px[2], s.depth[t] as f32]);
            out.valid[t] = true;
        }
    }
    Ok(out)
}

/// Target-resolution RGB with a flag for every pixel no source pixel reached.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedImage {
    pub rgb: Raster<u8>,
    pub hole_mask: Vec<bool>,
}

impl WarpedImage {
    pub fn hole_count(&self) -> usize {
        self.hole_mask.iter().filter(|h| **h).count()
    }
}

/// Forward-warps an RGB frame. Holes are flagged and left black.
pub fn forward_warp_rgb(rgb: &Raster<u8>, depth: &DepthMap, src: &Camera, tgt: &Camera) -> Result<WarpedImage, WarpError> {
    if rgb.width() != depth.width() || rgb.height() != depth.height() || rgb.channels() != 3 {
        return Err(WarpError::DimensionMismatch(format!(
            "rgb {}x{}x{} vs depth {}x{}",
            rgb.width(),
            rgb.height(),
            rgb.channels(),
            depth.width(),
            depth.height()
        )));
    }
    let s = splat(depth, src, tgt)?;
    let mut out = Raster::new(tgt.intrinsics.width, tgt.intrinsics.height, 3, 0u8);
    let mut hole_mask = vec![true; s.winner.len()];
    for (t, w) in s.winner.iter().enumerate() {
        if let Some(i) = w {
            out.pixel_at_mut(t).copy_from_slice(rgb.pixel_at(*i as usize));
            hole_mask[t] = false;
        }
    }
    Ok(WarpedImage { rgb: out, hole_mask })
}

/// Pads `maps` with empty slots up to exactly `n_s`, preserving order.
pub fn pad_slots(mut maps: Vec<CanonicalCoordMap>, n_s: usize, width: u32, height: u32) -> Result<Vec<CanonicalCoordMap>, WarpError> {
    if maps.len() > n_s {
        return Err(WarpError::TooManyMaps { got: maps.len(), n_s });
    }
    if let Some(m) = maps.iter().find(|m| m.width() != width || m.height() != height) {
        return Err(WarpError::DimensionMismatch(format!(
            "map {}x{} vs slot size {}x{}",
            m.width(),
            m.height(),
            width,
            height
        )));
    }
    maps.resize_with(n_s, || CanonicalCoordMap::padding(width, height));
    Ok(maps)
}

/// Warps the canonical maps of retrieved frames (slot = position in `frame_ids`)
/// into `target` and pads to `n_s` slots.
pub fn warp_retrieved(
    cache: &SceneCache,
    frame_ids: &[FrameId],
    target: &Camera,
    n_s: usize,
) -> Result<Vec<CanonicalCoordMap>, WarpError> {
    if frame_ids.len() > n_s {
        return Err(WarpError::TooManyMaps { got: frame_ids.len(), n_s });
    }
    let maps = frame_ids
        .iter()
        .enumerate()
        .map(|(j, id)| {
            let f = cache.get_frame(*id)?;
            let k = f.intrinsics();
            let src = canonical_source_map(j, n_s, k.width, k.height)?;
            forward_warp_coords(&src, &f.depth, &f.camera, target)
        })
        .collect::<Result<Vec<_>, _>>()?;
    pad_slots(maps, n_s, target.intrinsics.width, target.intrinsics.height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Intrinsics, Pose};
    use crate::synth::{AnalyticScene, Primitive};
    use nalgebra::Vector3;

    fn k(w: u32, h: u32) -> Intrinsics {
        Intrinsics::new(0.8 * w as f64, 0.8 * w as f64, 0.5 * w as f64, 0.5 * h as f64, w, h).unwrap()
    }

    #[test]
    fn source_map_values() {
        let m = canonical_source_map(0, 5, 7, 5).unwrap();
        assert!(m.pixels().all(|p| p[2] == -1.0));
        assert_eq!(&m.pixel(3, 2)[..2], &[0.0, 0.0]);
        assert_eq!(&m.pixel(0, 0)[..2], &[-1.0, -1.0]);
        assert_eq!(&m.pixel(6, 4)[..2], &[1.0, 1.0]);
        let m = canonical_source_map(4, 5, 4, 4).unwrap();
        assert!(m.pixels().all(|p| p[2] == 0.6f32));
        assert!(matches!(canonical_source_map(5, 5, 4, 4), Err(WarpError::SlotOutOfRange { j: 5, n_s: 5 })));
        let single = canonical_source_map(0, 1, 1, 1).unwrap();
        assert_eq!(single.pixel(0, 0), &[0.0, 0.0, -1.0]);
    }

    #[test]
    fn identity_warp_is_exact() {
        let scene = AnalyticScene::new(vec![
            Primitive::Sphere { center: [0.0, 0.0, 3.0], radius: 1.0 },
        ])
        .unwrap();
        let cam = Camera::new(Pose::look_at(Vector3::new(0.3, 0.2, -0.5), Vector3::new(0.0, 0.0, 3.0), Vector3::y()).unwrap(), k(80, 60));
        let depth = scene.render_depth(&cam.pose, &cam.intrinsics);
        let src = canonical_source_map(2, 5, 80, 60).unwrap();
        let out = forward_warp_coords(&src, &depth, &cam, &cam).unwrap();
        for row in 0..60 {
            for col in 0..80 {
                match (depth.valid(col, row), out.get(col, row)) {
                    (Some(_), Some(px)) => assert_eq!(&px[..3], src.pixel(col, row)),
                    (None, None) => {}
                    other => panic!("validity mismatch at {col},{row}: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn invalid_pixels_carry_sentinel() {
        let cam = Camera::new(Pose::identity(), k(16, 12));
        let depth = DepthMap::filled(16, 12, f32::NAN);
        let src = canonical_source_map(0, 1, 16, 12).unwrap();
        let out = forward_warp_coords(&src, &depth, &cam, &cam).unwrap();
        assert!(out.is_padding());
        assert!(out.channels.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dimension_errors() {
        let cam = Camera::new(Pose::identity(), k(16, 12));
        let depth = DepthMap::filled(16, 12, 1.0);
        let src = canonical_source_map(0, 1, 15, 12).unwrap();
        assert!(matches!(forward_warp_coords(&src, &depth, &cam, &cam), Err(WarpError::DimensionMismatch(_))));
        let wrong_cam = Camera::new(Pose::identity(), k(10, 12));
        let src = canonical_source_map(0, 1, 16, 12).unwrap();
        assert!(forward_warp_coords(&src, &depth, &wrong_cam, &cam).is_err());
        let rgb = Raster::new(16, 11, 3, 0u8);
        assert!(forward_warp_rgb(&rgb, &depth, &cam, &cam).is_err());
    }

    #[test]
    fn rgb_identity_and_turned_away() {
        let scene = AnalyticScene::new(vec![Primitive::Plane { point: [0.0, 0.0, 2.0], normal: [0.0, 0.0, -1.0] }]).unwrap();
        let cam = Camera::new(Pose::identity(), k(40, 30));
        let depth = scene.render_depth(&cam.pose, &cam.intrinsics);
        let rgb = scene.render_checker(&cam.pose, &cam.intrinsics, 0.1);
        let same = forward_warp_rgb(&rgb, &depth, &cam, &cam).unwrap();
        assert_eq!(same.rgb, rgb);
        assert_eq!(same.hole_count(), 0);
        let away = Camera::new(Pose::looking_along(Vector3::zeros(), -Vector3::z()).unwrap(), k(40, 30));
        let out = forward_warp_rgb(&rgb, &depth, &cam, &away).unwrap();
        assert_eq!(out.hole_count(), 40 * 30);
    }

    #[test]
    fn nearer_surface_wins() {
        // two source pixels forced onto one target pixel: a wide source and a narrow target
        let src_cam = Camera::new(Pose::identity(), k(4, 1));
        let depth = DepthMap::new(4, 1, vec![3.0, 2.0, 2.0, 3.0]).unwrap();
        let tgt_cam = Camera::new(Pose::identity(), Intrinsics::new(0.5, 0.5, 0.5, 0.5, 1, 1).unwrap());
        let s = splat(&depth, &src_cam, &tgt_cam).unwrap();
        // pixels 1 and 2 tie at depth 2; the lower source index wins
        assert_eq!(s.winner, vec![Some(1)]);
        assert_eq!(s.depth, vec![2.0]);
    }

    #[test]
    fn padding() {
        assert_eq!(pad_slots(vec![], 5, 8, 6).unwrap().len(), 5);
        let real = CanonicalCoordMap { channels: Raster::new(8, 6, 4, 0.5), valid: vec![true; 48] };
        let out = pad_slots(vec![real.clone(), real.clone()], 5, 8, 6).unwrap();
        assert_eq!(out.iter().map(|m| m.is_padding()).collect::<Vec<_>>(), vec![false, false, true, true, true]);
        assert_eq!(out[0], real);
        let full = pad_slots(vec![real.clone(); 5], 5, 8, 6).unwrap();
        assert!(full.iter().all(|m| *m == real));
        assert!(matches!(pad_slots(vec![real.clone(); 6], 5, 8, 6), Err(WarpError::TooManyMaps { got: 6, n_s: 5 })));
    }

    #[test]
    fn lyc_round_trip() {
        let scene = AnalyticScene::new(vec![Primitive::Sphere { center: [0.0, 0.0, 3.0], radius: 1.0 }]).unwrap();
        let a = Camera::new(Pose::identity(), k(24, 16));
        let b = Camera::new(Pose::look_at(Vector3::new(0.4, 0.0, 0.0), Vector3::new(0.0, 0.0, 3.0), Vector3::y()).unwrap(), k(24, 16));
        let depth = scene.render_depth(&a.pose, &a.intrinsics);
        let m = forward_warp_coords(&canonical_source_map(1, 3, 24, 16).unwrap(), &depth, &a, &b).unwrap();
        assert!(m.valid_count() > 0);
        let bytes = m.encode();
        assert_eq!(bytes.len(), 13 + 24 * 16 * 20);
        assert_eq!(CanonicalCoordMap::decode(&bytes).unwrap(), m);
        assert!(CanonicalCoordMap::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(CanonicalCoordMap::decode(&bad).is_err());
    }
}
