//! Voxel-grid radiance fields with appearance decomposition and geometry correction.
//!
//! The field stores, per voxel, an initial density and color (`sigma0`, `c0`), a
//! view-independent color `c_vi`, a view-dependent residue `c_vd` and a blend factor
//! `gamma`. Training fits both the initial and the final (blended, corrected) renders
//! to posed images while spherical-harmonic regularizers pull `c_vi`/`c_vd` toward the
//! low/high-degree parts of `c0`.

// Negated comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod correction;
pub mod dataset;
pub mod error;
pub mod field;
pub mod image;
pub mod linalg;
pub mod metrics;
pub mod plot;
pub mod render;
pub mod scenes;
pub mod sh;
pub mod train;
pub mod vec3;

pub use correction::{correct_density, CorrectionParams};
pub use error::{Error, Result};
pub use field::{RadianceSample, VoxelField};
pub use image::Image;
pub use render::{composite, render_image, render_ray, Camera, DensityProfile, PixelEstimate, Ray};
pub use scenes::{SceneOracle, SceneSpec, Sphere};
pub use sh::{Direction, DirectionSet, ShFit};
pub use vec3::Vec3;
