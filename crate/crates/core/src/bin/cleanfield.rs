use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cleanfield::commands::{
    cmd_correct, cmd_eval, cmd_gen, cmd_render, cmd_train, CameraSource, CameraSpec, CHECKPOINT_FILE,
};
use cleanfield::config::RunConfig;
use cleanfield::render::RenderMode;
use cleanfield::{Error, Result};

#[derive(Parser)]
#[command(name = "cleanfield", version, about = "Voxel radiance fields with geometry correction and color decomposition")]
struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the dataset and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 lets the runtime decide).
    #[arg(long, global = true, env = "CLEANFIELD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Ablation {
    /// Train with both decomposition weights set to zero.
    #[arg(long)]
    no_decomposition: bool,
    /// Disable geometry correction in training and rendering.
    #[arg(long)]
    no_correction: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset.
    Gen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a field on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        ablation: Ablation,
        /// Print the loss every this many iterations (0 is silent).
        #[arg(long, default_value_t = 100)]
        log_every: usize,
    },
    /// Render a checkpoint from a dataset view or a camera file.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, requires = "view", conflicts_with = "camera")]
        dataset: Option<PathBuf>,
        #[arg(long, requires = "dataset")]
        view: Option<usize>,
        #[arg(long, required_unless_present = "dataset")]
        camera: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Composite the view-independent color only.
        #[arg(long)]
        vi_only: bool,
        #[arg(long)]
        no_correction: bool,
    },
    /// Score a checkpoint on the held-out views of a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Write the CSV report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_correction: bool,
    },
    /// Apply geometry correction to density profiles (`t:sigma,...` per line).
    Correct {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Before/after chart; defaults to the output path with a `.ppm` extension.
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        margin: Option<usize>,
        /// Treat the threshold as an absolute density instead of a fraction of the peak.
        #[arg(long)]
        absolute: bool,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    Ok(match cli.seed {
        Some(seed) => config.with_seed(seed),
        None => config,
    })
}

fn disable_correction(config: &mut RunConfig) {
    config.train.geometry_correction = false;
    config.render.geometry_correction = false;
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Gen { out } => {
            let ds = cmd_gen(&config, &out)?;
            eprintln!(
                "wrote {} train and {} test views to {}",
                ds.train_views().count(),
                ds.test_views().count(),
                out.display()
            );
        }
        Command::Train { dataset, out, ablation, log_every } => {
            if ablation.no_decomposition {
                config.train.lambda_vi = 0.0;
                config.train.lambda_vd = 0.0;
            }
            if ablation.no_correction {
                disable_correction(&mut config);
            }
            let summary = cmd_train(&config, &dataset, &out, |i, l| {
                if log_every > 0 && i % log_every == 0 {
                    eprintln!("iter {i:>6}  pho_final {:.6}  vi {:.6}  vd {:.6}", l.l_pho_final, l.l_vi, l.l_vd);
                }
            })?;
            print!("{}", summary.report.to_csv());
            eprintln!("checkpoint: {}", out.join(CHECKPOINT_FILE).display());
        }
        Command::Render { checkpoint, dataset, view, camera, out, vi_only, no_correction } => {
            if no_correction {
                disable_correction(&mut config);
            }
            let source = match (dataset, view, camera) {
                (Some(dataset), Some(view), None) => CameraSource::View { dataset, view },
                (None, None, Some(path)) => CameraSource::Spec(CameraSpec::load(&path)?),
                _ => return Err(Error::Config("give either --dataset with --view, or --camera".into())),
            };
            let mode = if vi_only { RenderMode::ViOnly } else { RenderMode::Full };
            cmd_render(&config, &checkpoint, &source, &out, mode)?;
        }
        Command::Eval { checkpoint, dataset, out, no_correction } => {
            if no_correction {
                disable_correction(&mut config);
            }
            let report = cmd_eval(&config, &checkpoint, &dataset)?;
            write_or_print(out.as_deref(), &report.to_csv())?;
        }
        Command::Correct { input, out, plot, threshold, margin, absolute } => {
            let mut params = config.train.correction;
            if let Some(t) = threshold {
                params.threshold = t;
            }
            if let Some(m) = margin {
                params.margin = m;
            }
            if absolute {
                params.relative = false;
            }
            let plot = plot.unwrap_or_else(|| out.with_extension("ppm"));
            cmd_correct(&input, &params, &out, Some(&plot))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.category(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
