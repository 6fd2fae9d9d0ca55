//! Ray generation, quadrature, volume compositing and image assembly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::correction::{correct_density, CorrectionParams};
use crate::error::{Error, Result};
use crate::field::{activate, VoxelField};
use crate::image::Image;
use crate::sh::{basis_len, eval_basis_into, Direction, MAX_DEGREE};
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Direction,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Direction, near: f64, far: f64) -> Result<Self> {
        if !(near >= 0.0 && near < far && far.is_finite()) {
            return Err(Error::invalid(format!("ray interval [{near}, {far}] is empty")));
        }
        Ok(Ray { origin, direction, near, far })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction.vec() * t
    }
}

/// Densities sampled along one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub t: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `t[k+1] - t[k]`; the last entry is the bin width `(far - near) / K`.
    pub delta: Vec<f64>,
}

impl DensityProfile {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Build from depths alone; the last step repeats the mean spacing.
    pub fn from_depths(t: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if t.len() != sigma.len() {
            return Err(Error::invalid("depth and density counts differ"));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("depths must be strictly increasing"));
        }
        if sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::invalid("densities must be non-negative"));
        }
        let k = t.len();
        let mut delta: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        if k > 0 {
            let cap = if k > 1 { (t[k - 1] - t[0]) / (k - 1) as f64 } else { 1.0 };
            delta.push(cap);
        }
        Ok(DensityProfile { t, sigma, delta })
    }
}

/// Quadrature depths for `k` bins on `[near, far]`: bin centers, or one uniform draw per
/// bin when `stratified`. Densities are left at zero.
pub fn sample_ray(ray: &Ray, k: usize, stratified: bool, seed: u64) -> Result<DensityProfile> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 samples per ray, got {k}")));
    }
    let mut t = vec![0.0; k];
    let mut delta = vec![0.0; k];
    if stratified {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        fill_depths(ray.near, ray.far, &mut t, &mut delta, || rng.random::<f64>());
    } else {
        fill_depths(ray.near, ray.far, &mut t, &mut delta, || 0.5);
    }
    Ok(DensityProfile { t, sigma: vec![0.0; k], delta })
}

#[inline]
pub(crate) fn fill_depths(
    near: f64,
    far: f64,
    t: &mut [f64],
    delta: &mut [f64],
    mut jitter: impl FnMut() -> f64,
) {
    let k = t.len();
    let bin = (far - near) / k as f64;
    for (i, ti) in t.iter_mut().enumerate() {
        *ti = near + (i as f64 + jitter()) * bin;
    }
    for i in 0..k - 1 {
        delta[i] = t[i + 1] - t[i];
    }
    delta[k - 1] = bin;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub color: [f64; 3],
    pub weights: Vec<f64>,
    /// Transmittance reaching each sample.
    pub transmittance: Vec<f64>,
}

/// Alpha-composite colors front to back: `w_k = T_k (1 - exp(-σ_k δ_k))`.
pub fn composite(sigma: &[f64], colors: &[[f64; 3]], delta: &[f64]) -> Result<Composite> {
    if sigma.len() != colors.len() || sigma.len() != delta.len() {
        return Err(Error::invalid("composite inputs differ in length"));
    }
    if sigma.iter().chain(delta).any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("densities and step sizes must be non-negative"));
    }
    let mut color = [0.0; 3];
    let mut weights = Vec::with_capacity(sigma.len());
    let mut transmittance = Vec::with_capacity(sigma.len());
    let mut optical_depth = 0.0f64;
    for ((&s, &d), c) in sigma.iter().zip(delta).zip(colors) {
        let tk = (-optical_depth).exp();
        let w = tk * -(-s * d).exp_m1();
        transmittance.push(tk);
        weights.push(w);
        for ch in 0..3 {
            color[ch] += w * c[ch];
        }
        optical_depth += s * d;
    }
    Ok(Composite { color, weights, transmittance })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RenderMode {
    #[default]
    Full,
    /// Composite the view-independent color in place of the blended final color.
    ViOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub samples: usize,
    pub stratified: bool,
    pub seed: u64,
    /// `None` disables geometry correction for the final estimate.
    pub correction: Option<CorrectionParams>,
    pub mode: RenderMode,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            samples: 64,
            stratified: false,
            seed: 0,
            correction: Some(CorrectionParams::default()),
            mode: RenderMode::Full,
        }
    }
}

/// Initial and final color estimates for one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelEstimate {
    pub c_initial: [f64; 3],
    pub c_final: [f64; 3],
    /// Compositing weights of the final estimate.
    pub weights: Vec<f64>,
    pub transmittance: Vec<f64>,
}

impl PixelEstimate {
    pub fn black() -> Self {
        PixelEstimate { c_initial: [0.0; 3], c_final: [0.0; 3], weights: vec![], transmittance: vec![] }
    }
}

pub fn render_ray(field: &VoxelField, ray: &Ray, opts: &RenderOptions) -> Result<PixelEstimate> {
    if let Some(c) = &opts.correction {
        c.validate()?;
    }
    let mut profile = sample_ray(ray, opts.samples, opts.stratified, opts.seed)?;
    let layout = field.layout();
    let mut y = [0.0; basis_len(MAX_DEGREE)];
    eval_basis_into(ray.direction.vec(), layout.l_max, &mut y);

    let k = profile.len();
    let mut raw = vec![0.0; field.stride()];
    let mut c0 = Vec::with_capacity(k);
    let mut c_final = Vec::with_capacity(k);
    for i in 0..k {
        let p = ray.at(profile.t[i]);
        let s = match field.locate(p) {
            Some(cell) => {
                field.interpolate_into(&cell, field.stride(), &mut raw);
                activate(&raw, &y, layout)
            }
            None => crate::field::RadianceSample::VACUUM,
        };
        profile.sigma[i] = s.sigma0;
        c0.push(s.c0);
        c_final.push(match opts.mode {
            RenderMode::Full => s.c_final,
            RenderMode::ViOnly => s.c_vi,
        });
    }
    let initial = composite(&profile.sigma, &c0, &profile.delta)?;
    let corrected = match &opts.correction {
        Some(params) => correct_density(&profile, params),
        None => profile,
    };
    let fin = composite(&corrected.sigma, &c_final, &corrected.delta)?;
    Ok(PixelEstimate {
        c_initial: initial.color,
        c_final: fin.color,
        weights: fin.weights,
        transmittance: fin.transmittance,
    })
}

/// Pinhole camera. Camera axes: x right, y down, z forward (viewing direction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera-to-world rotation, row-major; columns are the camera axes in world space.
    pub rotation: [[f64; 3]; 3],
    pub position: Vec3,
}

impl Camera {
    /// Camera at `eye` looking at `target`; principal point at the image center.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, width: usize, height: usize, focal: f64) -> Result<Self> {
        let forward = Direction::from_vector(target - eye)?.vec();
        let right = Direction::from_vector(forward.cross(up))
            .map_err(|_| Error::invalid("look-at up vector is parallel to the view direction"))?
            .vec();
        let down = forward.cross(right);
        let rotation = [
            [right.x, down.x, forward.x],
            [right.y, down.y, forward.y],
            [right.z, down.z, forward.z],
        ];
        Ok(Camera {
            width,
            height,
            focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            rotation,
            position: eye,
        })
    }

    /// Row-major 4×4 camera-to-world matrix.
    pub fn pose_matrix(&self) -> [f64; 16] {
        let r = &self.rotation;
        let p = self.position;
        [
            r[0][0], r[0][1], r[0][2], p.x,
            r[1][0], r[1][1], r[1][2], p.y,
            r[2][0], r[2][1], r[2][2], p.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn from_pose(
        width: usize,
        height: usize,
        focal: f64,
        cx: f64,
        cy: f64,
        pose: &[f64; 16],
    ) -> Result<Self> {
        let rotation = [
            [pose[0], pose[1], pose[2]],
            [pose[4], pose[5], pose[6]],
            [pose[8], pose[9], pose[10]],
        ];
        let cam = Camera {
            width,
            height,
            focal,
            cx,
            cy,
            rotation,
            position: Vec3::new(pose[3], pose[7], pose[11]),
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image resolution must be non-zero"));
        }
        if !(self.focal > 0.0) {
            return Err(Error::invalid(format!("focal length {} must be positive", self.focal)));
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                if (d - e).abs() > 1e-9 {
                    return Err(Error::invalid("camera rotation is not orthonormal"));
                }
            }
        }
        Ok(())
    }

    /// World-space direction through the center of pixel `(px, py)`.
    pub fn pixel_direction(&self, px: usize, py: usize) -> Direction {
        let u = (px as f64 + 0.5 - self.cx) / self.focal;
        let v = (py as f64 + 0.5 - self.cy) / self.focal;
        let r = &self.rotation;
        let d = Vec3::new(
            r[0][0] * u + r[0][1] * v + r[0][2],
            r[1][0] * u + r[1][1] * v + r[1][2],
            r[2][0] * u + r[2][1] * v + r[2][2],
        );
        Direction::from_vector(d).expect("finite pixel direction")
    }

    pub fn forward(&self) -> Vec3 {
        Vec3::new(self.rotation[0][2], self.rotation[1][2], self.rotation[2][2])
    }
}

/// Ray through pixel `(px, py)` clipped to the field bounds; `None` if it misses.
pub fn pixel_ray(field: &VoxelField, camera: &Camera, px: usize, py: usize) -> Option<Ray> {
    let d = camera.pixel_direction(px, py);
    let (near, far) = field.bounds().intersect(camera.position, d.vec())?;
    Ray::new(camera.position, d, near, far).ok()
}

/// Per-pixel seed so stratified renders are reproducible pixel by pixel.
pub(crate) fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn render_image(field: &VoxelField, camera: &Camera, opts: &RenderOptions) -> Result<Image> {
    camera.validate()?;
    let (w, h) = (camera.width, camera.height);
    let pixels = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let Some(ray) = pixel_ray(field, camera, i % w, i / w) else {
                return Ok([0.0; 3]);
            };
            let o = RenderOptions { seed: mix_seed(opts.seed, i as u64), ..opts.clone() };
            Ok(render_ray(field, &ray, &o)?.c_final)
        })
        .collect::<Result<Vec<_>>>()?;
    Image::new(w, h, pixels)
}
