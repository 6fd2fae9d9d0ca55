//! The operations behind each subcommand. File outputs are deterministic for a fixed
//! configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::correction::{correct_density, CorrectionParams};
use crate::dataset::{load_dataset, load_manifest, save_dataset};
use crate::error::{Error, Result};
use crate::field::VoxelField;
use crate::image::Image;
use crate::metrics::{floater_volume, mae, psnr, ssim};
use crate::plot::plot_profiles;
use crate::render::{render_image, Camera, DensityProfile, RenderMode};
use crate::scenes::{make_dataset, Dataset, SceneOracle};
use crate::train::{train, write_log, LossBreakdown};
use crate::vec3::Vec3;

pub const CHECKPOINT_FILE: &str = "checkpoint.cfld";
pub const LOG_FILE: &str = "train_log.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Render the configured scene from a ring of cameras and write it to `out`.
pub fn cmd_gen(config: &RunConfig, out: &Path) -> Result<Dataset> {
    let scene = SceneOracle::new(config.scene.clone())?;
    let dataset = make_dataset(&scene, &config.dataset)?;
    save_dataset(&dataset, out)?;
    write_file(&out.join(CONFIG_FILE), config.echo())?;
    Ok(dataset)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub field: VoxelField,
    pub log: Vec<LossBreakdown>,
    pub report: EvalReport,
}

/// Train on the dataset in `dataset_dir` and write the checkpoint, log, config echo and
/// held-out metrics to `out`.
pub fn cmd_train(
    config: &RunConfig,
    dataset_dir: &Path,
    out: &Path,
    progress: impl FnMut(usize, &LossBreakdown),
) -> Result<TrainSummary> {
    config.train.validate()?;
    let dataset = load_dataset(dataset_dir)?;
    // The run ends with an evaluation, so refuse before spending the training time.
    if dataset.test_views().next().is_none() {
        return Err(Error::EmptySplit("test"));
    }
    let centroid = match &dataset.scene {
        Some(spec) => SceneOracle::new(spec.clone())?.centroid(),
        None => Vec3::ZERO,
    };
    let field = config.init_field(centroid)?;
    create_dir(out)?;
    write_file(&out.join(CONFIG_FILE), config.echo())?;
    let outcome = train(&dataset, field, &config.train, progress)?;
    checkpoint::save(&outcome.field, &out.join(CHECKPOINT_FILE))?;
    let mut log = Vec::new();
    write_log(&outcome.log, &mut log).map_err(|e| Error::io(out.join(LOG_FILE), e))?;
    write_file(&out.join(LOG_FILE), log)?;
    let report = evaluate(&outcome.field, &dataset, config)?;
    write_file(&out.join(METRICS_FILE), report.to_csv())?;
    Ok(TrainSummary { field: outcome.field, log: outcome.log, report })
}

/// A free camera for `cmd_render`, either looking at a target or given by a
/// camera-to-world pose (row-major 4x4, OpenCV axes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    #[serde(default)]
    pub pose: Option<Vec<f64>>,
    #[serde(default)]
    pub eye: Option<[f64; 3]>,
    #[serde(default)]
    pub target: Option<[f64; 3]>,
    #[serde(default)]
    pub up: Option<[f64; 3]>,
}

impl CameraSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn camera(&self) -> Result<Camera> {
        match (&self.pose, self.eye, self.target) {
            (Some(pose), None, None) => {
                let pose: [f64; 16] = pose
                    .as_slice()
                    .try_into()
                    .map_err(|_| Error::Config("camera pose needs 16 numbers".into()))?;
                let (cx, cy) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
                Camera::from_pose(self.width, self.height, self.focal, cx, cy, &pose)
            }
            (None, Some(eye), Some(target)) => Camera::look_at(
                eye.into(),
                target.into(),
                self.up.unwrap_or([0.0, 0.0, 1.0]).into(),
                self.width,
                self.height,
                self.focal,
            ),
            _ => Err(Error::Config("camera needs either `pose` or both `eye` and `target`".into())),
        }
    }
}

#[derive(Debug, Clone)]
pub enum CameraSource {
    View { dataset: PathBuf, view: usize },
    Spec(CameraSpec),
}

/// Render a checkpoint to a PPM file.
pub fn cmd_render(
    config: &RunConfig,
    checkpoint_path: &Path,
    source: &CameraSource,
    out: &Path,
    mode: RenderMode,
) -> Result<Image> {
    let field = checkpoint::load(checkpoint_path)?;
    let camera = match source {
        CameraSource::View { dataset, view } => load_manifest(dataset)?.camera(*view)?,
        CameraSource::Spec(spec) => spec.camera()?,
    };
    let image = render_image(&field, &camera, &config.render_options(mode))?;
    image.write_ppm(out)?;
    Ok(image)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewMetrics {
    pub view: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub views: Vec<ViewMetrics>,
    /// Present when the dataset records its scene.
    pub floater_volume: Option<f64>,
}

impl EvalReport {
    /// Metrics of one image pair.
    pub fn compare(view: usize, rendered: &Image, truth: &Image) -> Result<ViewMetrics> {
        Ok(ViewMetrics {
            view,
            psnr: psnr(rendered, truth)?,
            ssim: ssim(rendered, truth)?,
            mae: mae(rendered, truth)?,
        })
    }

    pub fn mean(&self) -> ViewMetrics {
        let n = self.views.len().max(1) as f64;
        let sum = |f: fn(&ViewMetrics) -> f64| self.views.iter().map(f).sum::<f64>() / n;
        ViewMetrics { view: usize::MAX, psnr: sum(|m| m.psnr), ssim: sum(|m| m.ssim), mae: sum(|m| m.mae) }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("view_id,psnr,ssim,mae\n");
        for m in &self.views {
            let _ = writeln!(s, "{},{},{},{}", m.view, m.psnr, m.ssim, m.mae);
        }
        let m = self.mean();
        let _ = writeln!(s, "mean,{},{},{}", m.psnr, m.ssim, m.mae);
        if let Some(f) = self.floater_volume {
            let _ = writeln!(s, "floater_volume,{f}");
        }
        s
    }
}

/// Render every held-out view and compare it with the ground truth.
pub fn evaluate(field: &VoxelField, dataset: &Dataset, config: &RunConfig) -> Result<EvalReport> {
    let opts = config.render_options(RenderMode::Full);
    let views = dataset
        .test_views()
        .map(|(i, v)| EvalReport::compare(i, &render_image(field, &v.camera, &opts)?, &v.image))
        .collect::<Result<Vec<_>>>()?;
    if views.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let floater_volume = match &dataset.scene {
        Some(spec) => {
            let scene = SceneOracle::new(spec.clone())?;
            Some(floater_volume(field, &scene, config.eval.floater_density_threshold))
        }
        None => None,
    };
    Ok(EvalReport { views, floater_volume })
}

pub fn cmd_eval(config: &RunConfig, checkpoint_path: &Path, dataset_dir: &Path) -> Result<EvalReport> {
    let field = checkpoint::load(checkpoint_path)?;
    let dataset = load_dataset(dataset_dir)?;
    evaluate(&field, &dataset, config)
}

/// Parse the profile interchange format: one ray per line, `t:sigma` pairs separated by
/// commas. A blank line is a ray with no samples.
pub fn parse_profiles(text: &str) -> Result<Vec<DensityProfile>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let line_no = i + 1;
            let bad = |what: String| Error::Format(format!("line {line_no}: {what}"));
            let line = line.trim();
            let (mut t, mut sigma) = (Vec::new(), Vec::new());
            if !line.is_empty() {
                for pair in line.split(',') {
                    let (a, b) = pair
                        .trim()
                        .split_once(':')
                        .ok_or_else(|| bad(format!("expected t:sigma, got {pair:?}")))?;
                    let num = |s: &str| {
                        s.trim().parse::<f64>().map_err(|_| bad(format!("not a number: {s:?}")))
                    };
                    t.push(num(a)?);
                    sigma.push(num(b)?);
                }
            }
            DensityProfile::from_depths(t, sigma).map_err(|e| bad(e.to_string()))
        })
        .collect()
}

pub fn format_profiles(profiles: &[DensityProfile]) -> String {
    let mut s = String::new();
    for p in profiles {
        let row: Vec<String> = p.t.iter().zip(&p.sigma).map(|(t, s)| format!("{t}:{s}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Correct every profile in `input`, writing the corrected rows to `out` and a
/// before/after chart to `plot`.
pub fn cmd_correct(
    input: &Path,
    params: &CorrectionParams,
    out: &Path,
    plot: Option<&Path>,
) -> Result<Vec<DensityProfile>> {
    params.validate()?;
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let before = parse_profiles(&text)?;
    let after: Vec<DensityProfile> = before.iter().map(|p| correct_density(p, params)).collect();
    write_file(out, format_profiles(&after))?;
    if let Some(plot) = plot {
        let pairs: Vec<_> = before.into_iter().zip(after.iter().cloned()).collect();
        plot_profiles(&pairs).write_ppm(plot)?;
    }
    Ok(after)
}
