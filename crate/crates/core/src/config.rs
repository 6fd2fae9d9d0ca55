//! Run configuration (TOML). Every key is optional; unknown keys are rejected.
//!
//! ```toml
//! [scene]      # spheres, light_direction, ambient, background, sigma_solid
//! [dataset]    # n_views, resolution, ring_radius, seed, fov_degrees, ...
//! [field]      # resolution, center, half_extent
//! [train]      # iterations, batch_rays, samples, learning_rate, lambda_vi, ...
//! [train.correction]
//! [train.sh]
//! [render]     # samples, geometry_correction
//! [eval]       # floater_density_threshold
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Bounds, ParamLayout, VoxelField};
use crate::render::{RenderMode, RenderOptions};
use crate::scenes::{DatasetParams, SceneSpec};
use crate::train::TrainConfig;
use crate::vec3::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub resolution: [usize; 3],
    /// Defaults to the scene centroid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 3]>,
    /// Half the side length of the cubic bounds.
    pub half_extent: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig { resolution: [64; 3], center: None, half_extent: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub samples: usize,
    pub geometry_correction: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { samples: 64, geometry_correction: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub floater_density_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { floater_density_threshold: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scene: SceneSpec,
    pub dataset: DatasetParams,
    pub field: FieldConfig,
    pub train: TrainConfig,
    pub render: RenderConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form, written into run directories.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Same seed for dataset jitter and training.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.dataset.seed = seed;
        self.train.seed = seed;
        self
    }

    /// Fresh field; `centroid` is used when no explicit center is configured.
    pub fn init_field(&self, centroid: Vec3) -> Result<VoxelField> {
        let c = &self.field;
        if !(c.half_extent > 0.0) {
            return Err(Error::Config("field.half_extent must be positive".into()));
        }
        let bounds = Bounds::cube(c.center.map_or(centroid, Vec3::from), c.half_extent)?;
        let layout = ParamLayout::new(self.train.sh.l_max, self.train.sh.split_degree)?;
        VoxelField::new(c.resolution, bounds, layout)
    }

    pub fn render_options(&self, mode: RenderMode) -> RenderOptions {
        RenderOptions {
            samples: self.render.samples,
            stratified: false,
            seed: 0,
            correction: self.render.geometry_correction.then_some(self.train.correction),
            mode,
        }
    }
}
