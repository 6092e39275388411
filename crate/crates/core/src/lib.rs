#![cfg_attr(not(test), no_std)]

//! # `simpl-core`
//!
//! Allocation-only core of the SIMPL synthetic overhead imagery generator.
//!
//! Everything in this crate is a pure function of its inputs: design
//! parameters go in, sampled scenes, rendered rasters, bounding boxes,
//! dataset patches and detection scores come out. File formats, image
//! codecs and the command line live in the `simpl` crate.

extern crate alloc;

/// Design parameters, validation, estimation from measurements, sweeps.
pub mod config;
/// Patch tiling and rotation augmentation.
pub mod dataset;
/// Ground-plane geometry shared by placement and rasterization.
pub mod geom;
/// Threshold, connected components, tight boxes.
pub mod groundtruth;
/// Triangle meshes, OBJ parsing, footprints and size calibration.
pub mod mesh;
/// AP50 and recall at a false-alarm density.
pub mod metrics;
/// Orthographic RGB and ground-truth rasterization.
pub mod renderer;
/// Seeded property sampling.
pub mod sampler;
/// Virtual world assembly.
pub mod scene;

mod math;

pub use config::DesignConfig;
pub use groundtruth::{Annotation, BBox};
pub use mesh::{Mesh, Pose};
pub use renderer::RasterImage;
pub use scene::Scene;
