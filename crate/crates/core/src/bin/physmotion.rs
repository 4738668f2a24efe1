use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use physmotion::body::build_default_humanoid;
use physmotion::metrics::{MetricsReport, METRIC_FEET};
use physmotion::objective::LossWeights;
use physmotion::pipeline::config::Config;
use physmotion::pipeline::observation::ObservationSequence;
use physmotion::pipeline::refine::{refine, RefinedMotion};
use physmotion::pipeline::synthetic::{generate_synthetic, Scene, SynthConfig};
use physmotion::{metrics, Error, Result};

#[derive(Parser)]
#[command(name = "physmotion", version, about = "Physics-based refinement of noisy humanoid motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refine an observation sequence and export motion and contact forces.
    Refine(RefineArgs),
    /// Compare a refined motion with a reference motion.
    Eval(EvalArgs),
    /// Generate a synthetic observation sequence and its ground truth.
    Synth(SynthArgs),
    /// Print the default configuration as JSON.
    DumpConfig,
}

#[derive(Args)]
struct ConfigArgs {
    /// Full configuration file (weights, optimizer, pipeline).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Loss weights file; replaces the weights of `--config`.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Skip the physics stage.
    #[arg(long)]
    no_physics: bool,
    /// Frames per spline knot interval.
    #[arg(long)]
    subsample: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => at(p, Config::load(p))?,
            None => Config::default(),
        };
        if let Some(p) = &self.weights {
            let text = at(p, std::fs::read_to_string(p).map_err(Error::from))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            cfg.weights = serde_path_to_error::deserialize::<_, LossWeights>(de)
                .map_err(|e| Error::validation(format!("weights.{}", e.path()), e.inner().to_string()))?;
        }
        if self.no_physics {
            cfg.pipeline.enable_physics = false;
        }
        if let Some(s) = self.subsample {
            cfg.pipeline.subsample = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RefineArgs {
    /// Observation sequence (JSON).
    input: PathBuf,
    /// Output motion, `.json` or `.csv`.
    #[arg(short, long)]
    output: PathBuf,
    /// Write the optimizer trace (CSV) here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Override the observation frame rate [Hz].
    #[arg(long)]
    fps: Option<f64>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Refined motion (JSON).
    prediction: PathBuf,
    /// Reference motion (JSON), for example the truth written by `synth`.
    reference: PathBuf,
    /// Keep every n-th frame before evaluating.
    #[arg(long, default_value_t = 1)]
    downsample: usize,
    /// Frame rate the velocity metrics refer to; defaults to the reference's.
    #[arg(long)]
    fps: Option<f64>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "standing_sway")]
    scene: Scene,
    /// Clip length [s].
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    fps: Option<f64>,
    /// Scene generator settings (JSON).
    #[arg(long)]
    synth_config: Option<PathBuf>,
    /// Write observations without noise or bias.
    #[arg(long)]
    clean: bool,
    /// Observation sequence output (JSON).
    #[arg(short, long)]
    output: PathBuf,
    /// Ground-truth motion output (JSON).
    #[arg(long)]
    truth: Option<PathBuf>,
}

fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn run_refine(args: &RefineArgs) -> Result<ExitCode> {
    let cfg = args.config.resolve()?;
    let mut obs = at(&args.input, ObservationSequence::load(&args.input))?;
    if let Some(fps) = args.fps {
        obs.fps = fps;
        obs.validate()?;
    }
    let report = refine(&obs, &build_default_humanoid(), &cfg)?;
    let mut motion = report.motion.clone();
    if let Some(path) = &args.trace {
        report.write_trace(std::io::BufWriter::new(std::fs::File::create(path)?))?;
        motion.trace = Some(path.display().to_string());
    }
    motion.export(&args.output)?;
    if motion.pose_guard_triggered {
        log::warn!("physics stage degraded the pose fit; kept the kinematic result for some chunks");
    }
    if motion.optimizer_failed {
        eprintln!("line search failed; wrote the best iterate to {}", args.output.display());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run_eval(args: &EvalArgs) -> Result<ExitCode> {
    let pred = at(&args.prediction, RefinedMotion::load(&args.prediction))?;
    let reference = at(&args.reference, RefinedMotion::load(&args.reference))?;
    if pred.joint_names != reference.joint_names {
        return Err(Error::validation("joint_names", "prediction and reference use different skeletons"));
    }
    let subset = |m: &RefinedMotion| -> Vec<_> { m.joint_positions().iter().map(|f| metrics::metric_subset(f)).collect() };
    let fps = args.fps.unwrap_or(reference.fps);
    let report = MetricsReport::evaluate_downsampled(&subset(&pred), &subset(&reference), &METRIC_FEET, fps, args.downsample)?;
    if args.json {
        println!("{}", report.to_json()?);
    } else {
        println!("{report}");
    }
    Ok(ExitCode::SUCCESS)
}

fn run_synth(args: &SynthArgs) -> Result<ExitCode> {
    let mut cfg = match &args.synth_config {
        Some(p) => {
            let text = at(p, std::fs::read_to_string(p).map_err(Error::from))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize::<_, SynthConfig>(de).map_err(|e| Error::validation(e.path().to_string(), e.inner().to_string()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(fps) = args.fps {
        cfg.fps = fps;
    }
    let skel = build_default_humanoid();
    let scene = generate_synthetic(args.scene, args.duration, args.seed, &cfg)?;
    let obs = if args.clean { &scene.clean } else { &scene.noisy };
    obs.save(&args.output)?;
    if let Some(path) = &args.truth {
        std::fs::write(path, scene.truth.to_motion(&skel).to_json()?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Refine(a) => run_refine(a),
        Command::Eval(a) => run_eval(a),
        Command::Synth(a) => run_synth(a),
        Command::DumpConfig => Config::default().to_json().map(|s| {
            println!("{s}");
            ExitCode::SUCCESS
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(e.exit_code() as u8)
    })
}
