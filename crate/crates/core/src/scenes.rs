//! Analytic ground truth: opaque spheres shaded with ambient + Lambertian + Phong
//! specular terms, plus the ideal density profile along any ray.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::render::{sample_ray, Camera, DensityProfile, Ray};
use crate::sh::Direction;
use crate::vec3::Vec3;

pub const DEFAULT_SIGMA_SOLID: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
    pub albedo: [f64; 3],
    #[serde(default)]
    pub specular_strength: f64,
    #[serde(default = "default_shininess")]
    pub shininess: f64,
}

fn default_shininess() -> f64 {
    64.0
}

impl Sphere {
    pub fn center_vec(&self) -> Vec3 {
        Vec3::from(self.center)
    }

    /// Entry and exit depths of the line `o + t d`, if it crosses the interior.
    pub fn chord(&self, o: Vec3, d: Vec3) -> Option<(f64, f64)> {
        let oc = o - self.center_vec();
        let b = d.dot(oc);
        let c = oc.dot(oc) - self.radius * self.radius;
        let disc = b * b - c;
        if disc <= 0.0 {
            return None;
        }
        let s = disc.sqrt();
        Some((-b - s, -b + s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub spheres: Vec<Sphere>,
    /// Direction toward the light; normalized on use.
    pub light_direction: [f64; 3],
    pub ambient: f64,
    pub background: [f64; 3],
    pub sigma_solid: f64,
}

impl Default for SceneSpec {
    /// One glossy sphere at the origin.
    fn default() -> Self {
        SceneSpec {
            spheres: vec![Sphere {
                center: [0.0, 0.0, 0.0],
                radius: 0.4,
                albedo: [0.75, 0.35, 0.2],
                specular_strength: 0.8,
                shininess: 64.0,
            }],
            light_direction: [0.6, -0.3, 0.75],
            ambient: 0.15,
            background: [0.0, 0.0, 0.0],
            sigma_solid: DEFAULT_SIGMA_SOLID,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneOracle {
    spec: SceneSpec,
    light: Vec3,
}

/// Nearest surface hit along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub sphere: usize,
}

pub fn generate_scene(spec: SceneSpec) -> Result<SceneOracle> {
    SceneOracle::new(spec)
}

impl SceneOracle {
    pub fn new(spec: SceneSpec) -> Result<Self> {
        for (i, s) in spec.spheres.iter().enumerate() {
            if !(s.radius > 0.0) {
                return Err(Error::invalid(format!("sphere {i} has non-positive radius")));
            }
            if !(s.specular_strength >= 0.0 && s.shininess >= 1.0) {
                return Err(Error::invalid(format!("sphere {i} has invalid specular parameters")));
            }
            for (j, t) in spec.spheres.iter().enumerate().skip(i + 1) {
                if (s.center_vec() - t.center_vec()).norm() <= s.radius + t.radius {
                    return Err(Error::invalid(format!("spheres {i} and {j} overlap")));
                }
            }
        }
        if !(0.0..=1.0).contains(&spec.ambient) {
            return Err(Error::invalid("ambient must lie in [0, 1]"));
        }
        if !(spec.sigma_solid > 0.0) {
            return Err(Error::invalid("sigma_solid must be positive"));
        }
        let light = Direction::from_vector(Vec3::from(spec.light_direction))?.vec();
        Ok(SceneOracle { spec, light })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn centroid(&self) -> Vec3 {
        let n = self.spec.spheres.len().max(1) as f64;
        self.spec.spheres.iter().fold(Vec3::ZERO, |acc, s| acc + s.center_vec()) * (1.0 / n)
    }

    pub fn intersect(&self, o: Vec3, d: Direction) -> Option<Hit> {
        let d = d.vec();
        self.spec
            .spheres
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                let (t0, t1) = s.chord(o, d)?;
                let t = if t0 > 1e-9 { t0 } else if t1 > 1e-9 { t1 } else { return None };
                Some(Hit { t, point: o + d * t, sphere: i })
            })
            .min_by(|a, b| a.t.total_cmp(&b.t))
    }

    /// Radiance leaving `point` on sphere `idx` toward the viewer, for a view ray with
    /// direction `d` (pointing away from the eye).
    pub fn shade(&self, idx: usize, point: Vec3, d: Direction) -> [f64; 3] {
        let s = &self.spec.spheres[idx];
        let n = (point - s.center_vec()).normalized();
        let l = self.light;
        let n_dot_l = n.dot(l);
        let r = n * (2.0 * n_dot_l) - l;
        let diffuse = self.spec.ambient + (1.0 - self.spec.ambient) * n_dot_l.max(0.0);
        let spec = if s.specular_strength > 0.0 && n_dot_l > 0.0 {
            s.specular_strength * r.dot(-d.vec()).max(0.0).powf(s.shininess)
        } else {
            0.0
        };
        [0, 1, 2].map(|c| diffuse * s.albedo[c] + spec)
    }

    pub fn trace(&self, o: Vec3, d: Direction) -> [f64; 3] {
        match self.intersect(o, d) {
            Some(hit) => self.shade(hit.sphere, hit.point, d),
            None => self.spec.background,
        }
    }

    pub fn inside(&self, p: Vec3) -> bool {
        self.spec.spheres.iter().any(|s| (p - s.center_vec()).norm() < s.radius)
    }
}

pub fn oracle_render(scene: &SceneOracle, camera: &Camera) -> Result<Image> {
    camera.validate()?;
    let w = camera.width;
    let pixels = (0..w * camera.height)
        .into_par_iter()
        .map(|i| scene.trace(camera.position, camera.pixel_direction(i % w, i / w)))
        .collect();
    Image::new(w, camera.height, pixels)
}

/// Ideal density along `ray` at `k` bin centers: `sigma_solid` inside any sphere, else 0.
pub fn oracle_density(scene: &SceneOracle, ray: &Ray, k: usize) -> Result<DensityProfile> {
    let mut p = sample_ray(ray, k, false, 0)?;
    for (s, &t) in p.sigma.iter_mut().zip(&p.t) {
        if scene.inside(ray.at(t)) {
            *s = scene.spec.sigma_solid;
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetParams {
    pub n_views: usize,
    pub resolution: usize,
    pub ring_radius: f64,
    pub seed: u64,
    /// Horizontal field of view in degrees.
    pub fov_degrees: f64,
    pub elevation_degrees: f64,
    /// Half-width of the uniform elevation jitter.
    pub jitter_degrees: f64,
    /// Every `test_stride`-th view (the last of each group) is held out.
    pub test_stride: usize,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams {
            n_views: 25,
            resolution: 64,
            ring_radius: 2.0,
            seed: 0,
            fov_degrees: 40.0,
            elevation_degrees: 15.0,
            jitter_degrees: 5.0,
            test_stride: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub camera: Camera,
    pub image: Image,
    pub train: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scene: Option<SceneSpec>,
    pub views: Vec<View>,
}

impl Dataset {
    pub fn train_views(&self) -> impl Iterator<Item = &View> {
        self.views.iter().filter(|v| v.train)
    }

    pub fn test_views(&self) -> impl Iterator<Item = (usize, &View)> {
        self.views.iter().enumerate().filter(|(_, v)| !v.train)
    }
}

/// Camera poses on a ring around the scene centroid (z up), before rendering.
pub fn ring_cameras(scene: &SceneOracle, params: &DatasetParams) -> Result<Vec<Camera>> {
    if params.n_views < 2 {
        return Err(Error::invalid("a dataset needs at least 2 views"));
    }
    if params.resolution == 0 || !(params.ring_radius > 0.0) {
        return Err(Error::invalid("dataset resolution and ring radius must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let target = scene.centroid();
    let focal = 0.5 * params.resolution as f64 / (0.5 * params.fov_degrees.to_radians()).tan();
    (0..params.n_views)
        .map(|i| {
            let azimuth = std::f64::consts::TAU * i as f64 / params.n_views as f64;
            let jitter = params.jitter_degrees * (2.0 * rng.random::<f64>() - 1.0);
            let elevation = (params.elevation_degrees + jitter).to_radians();
            let eye = target
                + Vec3::new(
                    elevation.cos() * azimuth.cos(),
                    elevation.cos() * azimuth.sin(),
                    elevation.sin(),
                ) * params.ring_radius;
            Camera::look_at(eye, target, Vec3::new(0.0, 0.0, 1.0), params.resolution, params.resolution, focal)
        })
        .collect()
}

pub fn make_dataset(scene: &SceneOracle, params: &DatasetParams) -> Result<Dataset> {
    let stride = params.test_stride.max(1);
    let views = ring_cameras(scene, params)?
        .into_iter()
        .enumerate()
        .map(|(i, camera)| {
            Ok(View {
                image: oracle_render(scene, &camera)?,
                camera,
                train: stride == 1 || i % stride != stride - 1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { scene: Some(scene.spec.clone()), views })
}
