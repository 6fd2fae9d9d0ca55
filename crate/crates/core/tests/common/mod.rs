//! Helpers shared by the integration tests.
#![allow(dead_code)]

use cleanfield::field::{Bounds, ParamLayout, VoxelField};
use cleanfield::train::{evaluate_batch, Decomposer, TrainConfig, TrainRay};
use cleanfield::{Direction, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Geometry correction written line by line from the pseudocode, 1-based, with the peak
/// indices defaulting to the profile ends when nothing exceeds the threshold.
pub fn literal_correction(sigma0: &[f64], thres: f64, m: usize) -> Vec<f64> {
    let k_len = sigma0.len() as i64;
    let s = |k: i64| sigma0[(k - 1) as usize];
    let mut k_front = 1i64;
    let mut k_back = k_len;
    let mut found = false;
    let mut k = 1;
    while k <= k_len {
        if s(k) > thres {
            k_front = k;
            found = true;
            break;
        }
        k += 1;
    }
    let mut k = k_len;
    while k >= 1 {
        if s(k) > thres {
            k_back = k;
            break;
        }
        k -= 1;
    }
    if !found {
        return sigma0.to_vec();
    }
    let m = m as i64;
    let mut sigma = vec![0.0; sigma0.len()];
    for k in 1..=k_len {
        if k < k_front - m || k > k_back + m {
            sigma[(k - 1) as usize] = 0.0;
        } else {
            sigma[(k - 1) as usize] = s(k);
        }
    }
    sigma
}

/// A field over `[-0.5, 0.5]³` with every raw parameter drawn uniformly from the given
/// per-kind ranges.
pub fn random_field(res: usize, l_max: usize, split: usize, seed: u64) -> VoxelField {
    let layout = ParamLayout::new(l_max, split).unwrap();
    let bounds = Bounds::cube([0.0; 3].into(), 0.5).unwrap();
    let mut f = VoxelField::new([res; 3], bounds, layout).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stride = layout.stride();
    for (i, v) in f.params_mut().iter_mut().enumerate() {
        let o = i % stride;
        *v = match o {
            ParamLayout::DENSITY => rng.random_range(0.5..6.0),
            ParamLayout::GAMMA => rng.random_range(-2.0..2.0),
            o if o < ParamLayout::GAMMA => rng.random_range(-2.0..2.0),
            o if o < ParamLayout::SH_C0 + 3 => rng.random_range(1.0..2.2),
            // small enough that c0 stays strictly inside the clamp range
            _ => rng.random_range(-0.02..0.02),
        };
    }
    f
}

/// Rays through a field over `[-0.5, 0.5]³` from random points on a sphere of radius 1.5
/// toward random points near the center, clipped to the bounds.
pub fn random_rays(field: &VoxelField, n: usize, k: usize, seed: u64) -> Vec<TrainRay> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rays = Vec::with_capacity(n);
    while rays.len() < n {
        let o = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if o.norm() < 0.1 {
            continue;
        }
        let o = o.normalized() * 1.5;
        let target = Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
        let d = Direction::from_vector(target - o).unwrap();
        let Some((near, far)) = field.bounds().intersect(o, d.vec()) else { continue };
        let color = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        rays.push(TrainRay::with_depths(o, d, near, far, k, color));
    }
    rays
}

pub fn random_positions(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vec3::new(rng.random_range(-0.45..0.45), rng.random_range(-0.45..0.45), rng.random_range(-0.45..0.45)))
        .collect()
}

pub struct GradCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    pub fn ok(&self, rel: f64, abs: f64) -> bool {
        let err = (self.analytic - self.numeric).abs();
        err <= abs || err <= rel * self.analytic.abs().max(self.numeric.abs())
    }
}

/// Analytic gradient versus central differences with step `h`, holding correction windows,
/// quadrature cut-offs and regularizer targets at the unperturbed values.
pub fn grad_check(
    field: &VoxelField,
    rays: &[TrainRay],
    positions: &[Vec3],
    cfg: &TrainConfig,
    indices: &[usize],
    h: f64,
) -> Vec<GradCheck> {
    let dec = Decomposer::new(field.layout(), &cfg.sh).unwrap();
    let base = evaluate_batch(field, rays, positions, cfg, &dec, None, true).unwrap();
    let mut dense = vec![0.0; field.params().len()];
    base.grad.as_ref().unwrap().scatter_f64(field.stride(), &mut dense);
    let mut work = field.clone();
    indices
        .iter()
        .map(|&i| {
            let theta = field.params()[i];
            let plus = (theta as f64 + h) as f32;
            let minus = (theta as f64 - h) as f32;
            work.params_mut()[i] = plus;
            let lp = evaluate_batch(&work, rays, positions, cfg, &dec, Some(&base.frozen), false).unwrap().loss.total;
            work.params_mut()[i] = minus;
            let lm = evaluate_batch(&work, rays, positions, cfg, &dec, Some(&base.frozen), false).unwrap().loss.total;
            work.params_mut()[i] = theta;
            GradCheck { index: i, analytic: dense[i], numeric: (lp - lm) / (plus as f64 - minus as f64) }
        })
        .collect()
}

/// Parameter indices of voxels that the batch touches, `per_kind` of each kind
/// (offset range within the voxel block), chosen at random.
pub fn touched_indices(
    field: &VoxelField,
    rays: &[TrainRay],
    positions: &[Vec3],
    cfg: &TrainConfig,
    per_kind: usize,
    seed: u64,
) -> Vec<usize> {
    let dec = Decomposer::new(field.layout(), &cfg.sh).unwrap();
    let eval = evaluate_batch(field, rays, positions, cfg, &dec, None, true).unwrap();
    let mut dense = vec![0.0; field.params().len()];
    eval.grad.unwrap().scatter_f64(field.stride(), &mut dense);
    let stride = field.stride();
    let voxels: Vec<usize> = (0..field.num_voxels())
        .filter(|v| dense[v * stride..(v + 1) * stride].iter().any(|g| *g != 0.0))
        .collect();
    assert!(!voxels.is_empty(), "batch touches no voxel");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (_, offset, width) in field.layout().groups() {
        for _ in 0..per_kind {
            let v = voxels[rng.random_range(0..voxels.len())];
            out.push(v * stride + offset + rng.random_range(0..width));
        }
    }
    out
}
