//! Spatial memory for long-horizon camera-controlled scene generation.
//!
//! The crate keeps a per-frame 3D cache of posed depth, retrieves the history
//! frames most visible from a target camera, warps canonical correspondence
//! maps into the target view, plans fixed-budget context layouts for a video
//! generator, and extracts surface meshes from posed depth.

pub mod cache;
pub mod contextpack;
pub mod flowmatch;
pub mod mesher;
pub mod geometry;
pub mod raster;
pub mod report;
pub mod retrieval;
pub mod synth;
pub mod warp;
