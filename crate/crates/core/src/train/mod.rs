//! Losses, analytic gradients and the optimization loop.

mod adam;
mod batch;
mod decompose;

use std::io::Write;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use batch::{evaluate_batch, BatchEvaluation, FrozenBatch, GradBuffer, RayState, TrainRay};
pub use decompose::{decomposition_losses, DecompositionLosses, Decomposer, RegTarget};

use crate::correction::CorrectionParams;
use crate::error::{Error, Result};
use crate::field::VoxelField;
use crate::render::{mix_seed, pixel_ray, PixelEstimate};
use crate::scenes::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShConfig {
    pub l_max: usize,
    pub split_degree: usize,
    /// Directions used for the per-position fit.
    pub directions: usize,
}

impl Default for ShConfig {
    fn default() -> Self {
        ShConfig { l_max: 3, split_degree: 1, directions: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_rays: usize,
    pub samples: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub lambda_vi: f64,
    pub lambda_vd: f64,
    pub reg_position_fraction: f64,
    pub seed: u64,
    /// Apply geometry correction to the final estimate.
    pub geometry_correction: bool,
    pub correction: CorrectionParams,
    pub sh: ShConfig,
    /// Samples behind the point where both branches' transmittance drops below this
    /// value are left out of the quadrature. Zero keeps every sample.
    pub min_transmittance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            batch_rays: 1024,
            samples: 64,
            learning_rate: 1e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            lambda_vi: 0.01,
            lambda_vd: 0.01,
            reg_position_fraction: 0.125,
            seed: 0,
            geometry_correction: true,
            correction: CorrectionParams::default(),
            sh: ShConfig::default(),
            min_transmittance: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("adam_epsilon", self.adam_epsilon),
            ("reg_position_fraction", self.reg_position_fraction),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.reg_position_fraction > 1.0 {
            return Err(Error::Config("reg_position_fraction must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.lambda_vi >= 0.0 && self.lambda_vd >= 0.0) {
            return Err(Error::Config("regularizer weights must be non-negative".into()));
        }
        if self.batch_rays == 0 || self.samples < 2 {
            return Err(Error::Config("batch_rays must be >= 1 and samples >= 2".into()));
        }
        if !(self.min_transmittance >= 0.0 && self.min_transmittance < 1.0) {
            return Err(Error::Config("min_transmittance must lie in [0, 1)".into()));
        }
        self.correction.validate()?;
        Ok(())
    }

    pub fn correction(&self) -> Option<CorrectionParams> {
        self.geometry_correction.then_some(self.correction)
    }

    pub fn decomposition_enabled(&self) -> bool {
        self.lambda_vi > 0.0 || self.lambda_vd > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_pho_initial: f64,
    pub l_pho_final: f64,
    pub l_vi: f64,
    pub l_vd: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(l_pho_initial: f64, l_pho_final: f64, l_vi: f64, l_vd: f64, lambda_vi: f64, lambda_vd: f64) -> Self {
        LossBreakdown {
            l_pho_initial,
            l_pho_final,
            l_vi,
            l_vd,
            total: l_pho_initial + l_pho_final + lambda_vi * l_vi + lambda_vd * l_vd,
        }
    }
}

/// Sum over rays of squared errors of the initial and final estimates.
pub fn photometric_loss(estimates: &[PixelEstimate], gt: &[[f64; 3]]) -> Result<(f64, f64)> {
    if estimates.len() != gt.len() {
        return Err(Error::invalid(format!(
            "{} estimates for {} ground-truth colors",
            estimates.len(),
            gt.len()
        )));
    }
    let sq = |a: [f64; 3], b: [f64; 3]| (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>();
    Ok(estimates.iter().zip(gt).fold((0.0, 0.0), |(i, f), (e, g)| {
        (i + sq(e.c_initial, *g), f + sq(e.c_final, *g))
    }))
}

/// Loss and dense gradient (indexed like `field.params()`) for one batch.
pub fn gradients(
    field: &VoxelField,
    rays: &[TrainRay],
    positions: &[crate::vec3::Vec3],
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let decomposer = Decomposer::new(field.layout(), &cfg.sh)?;
    let eval = evaluate_batch(field, rays, positions, cfg, &decomposer, None, true)?;
    let mut dense = vec![0.0; field.params().len()];
    eval.grad.expect("gradient requested").scatter_f64(field.stride(), &mut dense);
    Ok((eval.loss, dense))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub field: VoxelField,
    pub log: Vec<LossBreakdown>,
}

/// One training pixel: its clipped ray (if it meets the field) and its color.
#[derive(Debug, Clone, Copy)]
struct PixelRecord {
    ray: Option<crate::render::Ray>,
    target: [f64; 3],
}

/// Optimize `field` against the training views of `dataset`.
///
/// `on_iteration` sees every logged loss as it is produced.
pub fn train(
    dataset: &Dataset,
    mut field: VoxelField,
    cfg: &TrainConfig,
    mut on_iteration: impl FnMut(usize, &LossBreakdown),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.views.is_empty() {
        return Err(Error::invalid("dataset has no views"));
    }
    let train_views: Vec<_> = dataset.train_views().collect();
    if train_views.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let first = &train_views[0].camera;
    if train_views
        .iter()
        .any(|v| (v.camera.width, v.camera.height, v.camera.focal) != (first.width, first.height, first.focal))
    {
        return Err(Error::invalid("training views must share intrinsics"));
    }
    if field.layout().l_max != cfg.sh.l_max || field.layout().split_degree != cfg.sh.split_degree {
        return Err(Error::Config("field SH layout disagrees with the sh config".into()));
    }

    let pixels: Vec<PixelRecord> = train_views
        .iter()
        .flat_map(|v| {
            let cam = v.camera;
            let field = &field;
            (0..cam.width * cam.height).map(move |i| PixelRecord {
                ray: pixel_ray(field, &cam, i % cam.width, i / cam.width),
                target: v.image.pixels()[i],
            })
        })
        .collect();

    let decomposer = Decomposer::new(field.layout(), &cfg.sh)?;
    let mut adam = Adam::new(field.params().len(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
    let mut grad = vec![0f32; field.params().len()];
    let mut touched = Touched::new(field.num_voxels());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let batch_seed: u64 = rng.random();
        let rays: Vec<TrainRay> = (0..cfg.batch_rays)
            .map(|slot| {
                let px = &pixels[rng.random_range(0..pixels.len())];
                TrainRay::new(px.ray.as_ref(), px.target, cfg.samples, true, mix_seed(batch_seed, slot as u64))
            })
            .collect::<Result<_>>()?;
        let positions = if cfg.decomposition_enabled() {
            regularizer_positions(&rays, cfg.reg_position_fraction, &mut rng)
        } else {
            Vec::new()
        };

        let eval = evaluate_batch(&field, &rays, &positions, cfg, &decomposer, None, true)?;
        on_iteration(it, &eval.loss);
        log.push(eval.loss);

        let g = eval.grad.expect("gradient requested");
        g.scatter_f32(field.stride(), &mut grad, &mut touched);
        let stride = field.stride();
        adam.step_sparse(field.params_mut(), &mut grad, touched.voxels(), stride);
        touched.clear();
    }
    Ok(TrainOutcome { field, log })
}

/// Uniform subsample of the batch's quadrature points.
fn regularizer_positions(rays: &[TrainRay], fraction: f64, rng: &mut impl Rng) -> Vec<crate::vec3::Vec3> {
    let total: usize = rays.iter().map(|r| r.t.len()).sum();
    if total == 0 {
        return Vec::new();
    }
    let count = ((total as f64 * fraction).ceil() as usize).clamp(1, total);
    let mut picks = index::sample(rng, total, count).into_vec();
    picks.sort_unstable();
    let mut out = Vec::with_capacity(count);
    let mut ray_idx = 0;
    let mut offset = 0;
    for p in picks {
        while p >= offset + rays[ray_idx].t.len() {
            offset += rays[ray_idx].t.len();
            ray_idx += 1;
        }
        out.push(rays[ray_idx].point(p - offset));
    }
    out
}

/// Voxels that received gradient this iteration, in first-touch order.
pub(crate) struct Touched {
    seen: Vec<bool>,
    list: Vec<u32>,
}

impl Touched {
    fn new(n: usize) -> Self {
        Touched { seen: vec![false; n], list: Vec::new() }
    }

    #[inline]
    pub(crate) fn mark(&mut self, v: u32) {
        if !self.seen[v as usize] {
            self.seen[v as usize] = true;
            self.list.push(v);
        }
    }

    fn voxels(&self) -> &[u32] {
        &self.list
    }

    fn clear(&mut self) {
        for &v in &self.list {
            self.seen[v as usize] = false;
        }
        self.list.clear();
    }
}

pub const LOG_HEADER: &str = "iteration,l_pho_initial,l_pho_final,l_vi,l_vd,total";

pub fn write_log(log: &[LossBreakdown], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for (i, l) in log.iter().enumerate() {
        writeln!(w, "{i},{},{},{},{},{}", l.l_pho_initial, l.l_pho_final, l.l_vi, l.l_vd, l.total)?;
    }
    Ok(())
}
