//! Recovery of globally consistent 3D arrangements of people and objects
//! from per-image instance masks and precomputed body meshes.
//!
//! The pipeline has two stages. First, each detected object gets a 6-DoF
//! pose fitted against its instance mask with a differentiable silhouette
//! rasterizer and a large bank of rotation restarts ([`optim::fit_object_pose`]).
//! Second, all instances in an image are optimized jointly over per-instance
//! intrinsic scales, rotations, and translations under silhouette, interaction,
//! scale-prior, ordinal-depth, and collision losses
//! ([`optim::optimize_arrangement`]).
//!
//! Module map:
//! - [`geom`]: meshes, the 6D rotation parameterization, cameras, placement.
//! - [`raster`]: soft/hard silhouettes, depth maps, edge maps, distance
//!   transforms, occlusion indicators.
//! - [`losses`]: the individual loss terms and their gradients.
//! - [`interaction`]: per-category interaction detection and part pairs.
//! - [`collide`]: BVH, triangle intersection, winding numbers.
//! - [`optim`]: Adam, rotation sampling, pose fitting, joint optimization,
//!   empirical scale learning.
//! - [`scene`]: scene state, parameter packing, placement Jacobians.
//! - [`assets`]: file formats (configs, meshes, masks), built-in stand-in
//!   meshes, exports, diagnostic renders.

pub mod assets;
pub mod collide;
pub mod error;
pub mod geom;
pub mod interaction;
pub mod losses;
pub mod optim;
pub mod raster;
pub mod scene;

pub use error::{Error, Result};
