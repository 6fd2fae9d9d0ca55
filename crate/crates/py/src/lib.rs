//! Python bindings: SH fitting, compositing, density correction, voxel fields, rendering,
//! metrics and the gen/train/eval pipeline.

use std::path::PathBuf;

use cleanfield::commands::{cmd_eval, cmd_gen, cmd_train, EvalReport};
use cleanfield::config::RunConfig;
use cleanfield::field::{Bounds, ParamLayout};
use cleanfield::render::{RenderMode, RenderOptions};
use cleanfield::sh::{eval_sh_basis, fit_sh, sample_directions};
use cleanfield::{checkpoint, metrics, render_image, Camera, CorrectionParams, DensityProfile, Direction, Vec3};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

/// (sigma0, c0, c_vi, c_vd, gamma, c_final)
type Radiance = (f64, [f64; 3], [f64; 3], [f64; 3], f64, [f64; 3]);
/// Per-view (view, psnr, ssim, mae) rows and the floater volume when the scene is known.
type Report = (Vec<(usize, f64, f64, f64)>, Option<f64>);

fn err(e: cleanfield::Error) -> PyErr {
    match e {
        cleanfield::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(format!("{}: {e}", e.category())),
    }
}

fn vec3(v: [f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

fn correction_params(threshold: f64, margin: usize, relative: bool) -> CorrectionParams {
    if relative {
        CorrectionParams { threshold, margin, ..CorrectionParams::default() }
    } else {
        CorrectionParams::absolute(threshold, margin)
    }
}

/// Real SH basis values at a unit direction, degrees 0..=l_max.
#[pyfunction]
fn sh_basis(direction: [f64; 3], l_max: usize) -> PyResult<Vec<f64>> {
    let d = Direction::new(direction[0], direction[1], direction[2]).map_err(err)?;
    Ok(eval_sh_basis(d, l_max).map_err(err)?.values)
}

/// Fibonacci-sphere directions as (x, y, z) tuples.
#[pyfunction]
fn fibonacci_directions(n: usize) -> PyResult<Vec<[f64; 3]>> {
    let dirs = sample_directions(n).map_err(err)?;
    Ok(dirs.iter().map(|d| [d.x(), d.y(), d.z()]).collect())
}

/// Least-squares SH fit of `samples` taken at `n` Fibonacci directions.
/// Returns (coefficients, squared residual).
#[pyfunction]
fn fit_sh_fibonacci(samples: Vec<f64>, l_max: usize) -> PyResult<(Vec<f64>, f64)> {
    let dirs = sample_directions(samples.len()).map_err(err)?;
    let fit = fit_sh(&samples, &dirs, l_max).map_err(err)?;
    Ok((fit.coefficients, fit.residual))
}

/// Alpha compositing. Returns (color, weights, transmittance).
#[pyfunction]
fn composite(sigma: Vec<f64>, colors: Vec<[f64; 3]>, delta: Vec<f64>) -> PyResult<([f64; 3], Vec<f64>, Vec<f64>)> {
    let c = cleanfield::composite(&sigma, &colors, &delta).map_err(err)?;
    Ok((c.color, c.weights, c.transmittance))
}

/// Geometry correction of one density profile; returns the corrected densities.
#[pyfunction]
#[pyo3(signature = (t, sigma, threshold = 0.1, margin = 2, relative = true))]
fn correct_density(t: Vec<f64>, sigma: Vec<f64>, threshold: f64, margin: usize, relative: bool) -> PyResult<Vec<f64>> {
    let params = correction_params(threshold, margin, relative);
    params.validate().map_err(err)?;
    let profile = DensityProfile::from_depths(t, sigma).map_err(err)?;
    Ok(cleanfield::correct_density(&profile, &params).sigma)
}

/// RGB image with channels in [0, 1].
#[pyclass(name = "Image", frozen)]
struct PyImage(cleanfield::Image);

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> PyResult<Self> {
        Ok(PyImage(cleanfield::Image::new(width, height, pixels).map_err(err)?))
    }

    #[staticmethod]
    fn read_ppm(path: PathBuf) -> PyResult<Self> {
        Ok(PyImage(cleanfield::Image::read_ppm(&path).map_err(err)?))
    }

    fn write_ppm(&self, path: PathBuf) -> PyResult<()> {
        self.0.write_ppm(&path).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    /// Row-major pixels.
    fn pixels(&self) -> Vec<[f64; 3]> {
        self.0.pixels().to_vec()
    }

    fn psnr(&self, other: &PyImage) -> PyResult<f64> {
        metrics::psnr(&self.0, &other.0).map_err(err)
    }

    fn ssim(&self, other: &PyImage) -> PyResult<f64> {
        metrics::ssim(&self.0, &other.0).map_err(err)
    }

    fn mae(&self, other: &PyImage) -> PyResult<f64> {
        metrics::mae(&self.0, &other.0).map_err(err)
    }
}

/// Voxel radiance field.
#[pyclass(name = "VoxelField")]
struct PyField(cleanfield::VoxelField);

#[pymethods]
impl PyField {
    /// Freshly initialized field over the cube `center ± half_extent`.
    #[new]
    #[pyo3(signature = (resolution, center = [0.0; 3], half_extent = 0.6, l_max = 3, split_degree = 1))]
    fn new(resolution: [usize; 3], center: [f64; 3], half_extent: f64, l_max: usize, split_degree: usize) -> PyResult<Self> {
        let bounds = Bounds::cube(vec3(center), half_extent).map_err(err)?;
        let layout = ParamLayout::new(l_max, split_degree).map_err(err)?;
        Ok(PyField(cleanfield::VoxelField::new(resolution, bounds, layout).map_err(err)?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyField(checkpoint::load(&path).map_err(err)?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&self.0, &path).map_err(err)
    }

    #[getter]
    fn resolution(&self) -> [usize; 3] {
        self.0.resolution()
    }

    #[getter]
    fn stride(&self) -> usize {
        self.0.stride()
    }

    /// Flat copy of the per-voxel parameter blocks.
    fn params(&self) -> Vec<f32> {
        self.0.params().to_vec()
    }

    fn set_params(&mut self, params: Vec<f32>) -> PyResult<()> {
        let dst = self.0.params_mut();
        if params.len() != dst.len() {
            return Err(PyValueError::new_err(format!("expected {} values, got {}", dst.len(), params.len())));
        }
        dst.copy_from_slice(&params);
        Ok(())
    }

    /// Activated quantities at a point seen along `direction`.
    fn radiance(&self, point: [f64; 3], direction: [f64; 3]) -> PyResult<Radiance> {
        let d = Direction::new(direction[0], direction[1], direction[2]).map_err(err)?;
        let s = self.0.eval_radiance(vec3(point), d);
        Ok((s.sigma0, s.c0, s.c_vi, s.c_vd, s.gamma, s.c_final))
    }

    /// Render from a look-at pinhole camera.
    #[pyo3(signature = (width, height, focal, eye, target, up = [0.0, 0.0, 1.0], samples = 64, correction = true, vi_only = false))]
    #[allow(clippy::too_many_arguments)]
    fn render(
        &self,
        width: usize,
        height: usize,
        focal: f64,
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        samples: usize,
        correction: bool,
        vi_only: bool,
    ) -> PyResult<PyImage> {
        let camera = Camera::look_at(vec3(eye), vec3(target), vec3(up), width, height, focal).map_err(err)?;
        let opts = RenderOptions {
            samples,
            correction: correction.then(CorrectionParams::default),
            mode: if vi_only { RenderMode::ViOnly } else { RenderMode::Full },
            ..RenderOptions::default()
        };
        Ok(PyImage(render_image(&self.0, &camera, &opts).map_err(err)?))
    }
}

fn load_config(config: Option<PathBuf>) -> PyResult<RunConfig> {
    match config {
        Some(p) => RunConfig::load(&p).map_err(err),
        None => Ok(RunConfig::default()),
    }
}

fn report(report: &EvalReport) -> Report {
    (report.views.iter().map(|v| (v.view, v.psnr, v.ssim, v.mae)).collect(), report.floater_volume)
}

/// Generate the synthetic dataset; returns (train views, test views).
#[pyfunction]
#[pyo3(signature = (out, config = None))]
fn generate(out: PathBuf, config: Option<PathBuf>) -> PyResult<(usize, usize)> {
    let ds = cmd_gen(&load_config(config)?, &out).map_err(err)?;
    let train = ds.train_views().count();
    Ok((train, ds.views.len() - train))
}

/// Train and evaluate; returns per-view (view, psnr, ssim, mae) rows and the floater volume.
#[pyfunction]
#[pyo3(signature = (dataset, out, config = None))]
fn train(py: Python<'_>, dataset: PathBuf, out: PathBuf, config: Option<PathBuf>) -> PyResult<Report> {
    let config = load_config(config)?;
    let summary = py.detach(|| cmd_train(&config, &dataset, &out, |_, _| {})).map_err(err)?;
    Ok(report(&summary.report))
}

/// Evaluate a checkpoint on a dataset's held-out views.
#[pyfunction]
#[pyo3(signature = (checkpoint, dataset, config = None))]
fn evaluate(py: Python<'_>, checkpoint: PathBuf, dataset: PathBuf, config: Option<PathBuf>) -> PyResult<Report> {
    let config = load_config(config)?;
    let r = py.detach(|| cmd_eval(&config, &checkpoint, &dataset)).map_err(err)?;
    Ok(report(&r))
}

#[pymodule(name = "cleanfield")]
fn cleanfield_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(sh_basis, m)?)?;
    m.add_function(wrap_pyfunction!(fibonacci_directions, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sh_fibonacci, m)?)?;
    m.add_function(wrap_pyfunction!(composite, m)?)?;
    m.add_function(wrap_pyfunction!(correct_density, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
