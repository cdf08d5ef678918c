//! `l2e`: calibrate, evaluate, overlay, synthesize and run studies from the
//! command line.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use l2e_core::calibrate::{calibrate_with_observer, CalibrationConfig};
use l2e_core::experiment::{self, SeedNoise};
use l2e_core::io::{self, MapOptions, ResultDocument, SceneManifest};
use l2e_core::mi::score_scenes;
use l2e_core::synth::{self, SynthConfig, TextureModel};
use l2e_core::{Bandwidth, Bounds, Error, ExtrinsicParams, Intrinsics, Method, MiConfig, OptimizeOptions, ScenePair};

mod overlay;

#[derive(Parser, Debug)]
#[command(name = "l2e", version, about = "Event camera to lidar extrinsic calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the extrinsics from a scene manifest.
    Calibrate(CalibrateArgs),
    /// Print per-scene MI at fixed extrinsics.
    Evaluate(EvaluateArgs),
    /// Render a scene's event map with the lidar points overlaid (PPM).
    Project(ProjectArgs),
    /// Repeatability and scaling studies.
    Experiment(ExperimentArgs),
    /// Write a synthetic dataset with known extrinsics.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SceneArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Event-map smoothing, pixels.
    #[arg(long, default_value_t = l2e_core::event_map::DEFAULT_SIGMA)]
    sigma: f64,
    /// `auto` or fixed `<L>,<E>` bandwidths in bins.
    #[arg(long, default_value = "auto", value_parser = parse_bandwidth)]
    bandwidth: Bandwidth,
    /// Use a random subset of this many scenes.
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
}

#[derive(Args, Debug)]
struct SearchArgs {
    /// Starting extrinsics `x,y,z,v1,v2,v3` (meters, axis-angle radians).
    #[arg(long, default_value = "0,0,0,0,0,0", value_parser = parse_theta, allow_hyphen_values = true)]
    seed: [f64; 6],
    /// Half-width of the translation box around the seed, meters.
    #[arg(long, default_value_t = 0.5)]
    bounds_trans: f64,
    /// Half-width of the rotation box around the seed, radians.
    #[arg(long, default_value_t = 0.5)]
    bounds_rot: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Slsqp)]
    method: MethodArg,
    #[arg(long, default_value_t = OptimizeOptions::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = OptimizeOptions::default().max_iter)]
    max_iter: usize,
    /// Finite-difference step for every component.
    #[arg(long, default_value_t = OptimizeOptions::default().gradient_step[0])]
    gradient_step: f64,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    scenes: SceneArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    scenes: SceneArgs,
    #[arg(long, value_parser = parse_theta, allow_hyphen_values = true)]
    theta: [f64; 6],
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[command(flatten)]
    scenes: SceneArgs,
    #[arg(long, value_parser = parse_theta, allow_hyphen_values = true)]
    theta: [f64; 6],
    #[arg(long)]
    scene: String,
    /// Output image path.
    #[arg(long, default_value = "overlay.ppm")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    #[value(alias = "sequential-quadratic")]
    Slsqp,
    #[value(name = "l-bfgs-b", alias = "quasi-newton-bounded")]
    Lbfgsb,
    #[value(alias = "pattern-search")]
    Powell,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Slsqp => Method::SequentialQuadratic,
            MethodArg::Lbfgsb => Method::QuasiNewtonBounded,
            MethodArg::Powell => Method::PatternSearch,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    NoiseRobustness,
    SceneScaling,
    SceneCountVariance,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[command(flatten)]
    scenes: SceneArgs,
    /// Reference extrinsics the seeds are drawn around (and timed at).
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, value_enum)]
    kind: Kind,
    /// Calibrations for noise-robustness; repeats per size for
    /// scene-count-variance; timing repetitions for scene-scaling.
    #[arg(long)]
    runs: Option<usize>,
    /// Uniform seed noise half-width, meters.
    #[arg(long, default_value_t = 0.1)]
    noise_trans: f64,
    /// Uniform seed noise half-width, radians.
    #[arg(long, default_value_t = 0.1)]
    noise_rot: f64,
    /// Scene counts to study, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Evaluate scenes on all workers.
    #[arg(long)]
    parallel: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TextureArg {
    PlanarChecker,
    RandomIntensity,
    SmoothField,
}

impl From<TextureArg> for TextureModel {
    fn from(t: TextureArg) -> Self {
        match t {
            TextureArg::PlanarChecker => TextureModel::PlanarChecker,
            TextureArg::RandomIntensity => TextureModel::RandomIntensity,
            TextureArg::SmoothField => TextureModel::SmoothField,
        }
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    scenes: usize,
    #[arg(long, default_value_t = 10_000)]
    points: usize,
    #[arg(long, value_enum, default_value_t = TextureArg::SmoothField)]
    texture: TextureArg,
    /// Ground-truth extrinsics `x,y,z,v1,v2,v3`; a fixed default otherwise.
    #[arg(long, value_parser = parse_theta, allow_hyphen_values = true)]
    theta: Option<[f64; 6]>,
    /// Spurious events per pixel.
    #[arg(long)]
    noise_rate: Option<f64>,
    /// Mean events per full-intensity return.
    #[arg(long)]
    activity: Option<f64>,
    /// No spurious events and exact (rounded mean) deposits.
    #[arg(long)]
    noiseless: bool,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_theta(s: &str) -> Result<[f64; 6], String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number")))
        .collect::<Result<_, _>>()?;
    let theta: [f64; 6] = values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 6 comma-separated values, got {}", v.len()))?;
    ExtrinsicParams::new(theta).map_err(|e| e.to_string())?;
    Ok(theta)
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth, String> {
    if s == "auto" {
        return Ok(Bandwidth::Auto);
    }
    let (l, e) = s
        .split_once(',')
        .ok_or_else(|| "expected `auto` or `<L>,<E>`".to_string())?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .ok()
            .filter(|b| *b >= 0.0 && b.is_finite())
            .ok_or_else(|| format!("`{v}` is not a non-negative bandwidth"))
    };
    Ok(Bandwidth::Fixed {
        intensity: parse(l)?,
        activity: parse(e)?,
    })
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("L2E_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let outcome = match cli.command {
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Project(a) => cmd_project(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(args: &SceneArgs) -> CliResult<(Intrinsics, Vec<ScenePair>)> {
    if !(args.sigma >= 0.0) {
        return Err(Failure::usage("--sigma must be non-negative"));
    }
    let manifest = SceneManifest::load(&args.manifest).map_err(|e| Failure::usage(e.to_string()))?;
    if manifest.scenes.is_empty() {
        return Err(Failure::usage(format!(
            "{} lists no scenes",
            args.manifest.display()
        )));
    }
    let options = MapOptions {
        sigma: args.sigma,
        ..MapOptions::default()
    };
    let (k, pairs) = io::load_scenes(&manifest, &options)?;
    let pairs = match args.scenes {
        Some(n) if n != pairs.len() => experiment::subsample(&pairs, n, args.rng_seed)
            .map_err(|e| Failure::usage(e.to_string()))?,
        _ => pairs,
    };
    Ok((k, pairs))
}

fn mi_config(args: &SceneArgs) -> MiConfig {
    MiConfig {
        bandwidth: args.bandwidth,
        ..MiConfig::default()
    }
}

fn calibration_config(scenes: &SceneArgs, search: &SearchArgs) -> CliResult<CalibrationConfig> {
    if !(search.gradient_step > 0.0) {
        return Err(Failure::usage("--gradient-step must be positive"));
    }
    Ok(CalibrationConfig {
        mi: mi_config(scenes),
        optimize: OptimizeOptions {
            method: search.method.into(),
            tol: search.tol,
            max_iter: search.max_iter,
            gradient_step: [search.gradient_step; 6],
            ..OptimizeOptions::default()
        },
    })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", dir.display()),
    })
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

fn theta_text(theta: &[f64; 6]) -> String {
    theta.map(io::format_f64).join(",")
}

fn cmd_calibrate(a: CalibrateArgs) -> CliResult<()> {
    let (k, pairs) = load(&a.scenes)?;
    let config = calibration_config(&a.scenes, &a.search)?;
    let seed = ExtrinsicParams::new(a.search.seed)?;
    let bounds = Bounds::around(&seed, a.search.bounds_trans, a.search.bounds_rot)?;
    create_dir(&a.out)?;
    let log_path = a.out.join("calibration.log");
    let mut log = String::new();
    let _ = writeln!(
        log,
        "scenes {} method {} seed {}",
        pairs.len(),
        config.optimize.method,
        theta_text(&a.search.seed)
    );
    eprint!("{log}");
    let result = calibrate_with_observer(&pairs, &k, &seed, &bounds, &config, |r| {
        let line = format!(
            "iter {:4}  evals {:6}  mi {:.12}  theta {}\n",
            r.iteration,
            r.evaluations,
            r.best_value,
            theta_text(&r.theta)
        );
        eprint!("{line}");
        log += &line;
    })?;
    let _ = writeln!(
        log,
        "done: mi {} iterations {} evaluations {} converged {} wall_time_s {:.3}",
        io::format_f64(result.objective_value),
        result.iterations,
        result.objective_evaluations,
        result.converged,
        result.wall_time
    );
    write_file(&log_path, &log)?;
    let result_path = a.out.join("result.txt");
    io::write_result(&result_path, &ResultDocument::from(&result))?;
    println!("theta {}", theta_text(&result.theta_hat.to_array()));
    println!("mi {}", io::format_f64(result.objective_value));
    println!("result written to {}", result_path.display());
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult<()> {
    let (k, pairs) = load(&a.scenes)?;
    let theta = ExtrinsicParams::new(a.theta)?;
    let scores = score_scenes(&pairs, &theta, &k, &mi_config(&a.scenes));
    let mut out = std::io::stdout().lock();
    let mut table = String::from("scene_id,n,mi\n");
    for (pair, s) in pairs.iter().zip(&scores) {
        let _ = writeln!(table, "{},{},{}", pair.scene_id(), s.n, io::format_f64(s.mi));
    }
    let mean = scores.iter().map(|s| s.mi).sum::<f64>() / scores.len() as f64;
    let _ = writeln!(table, "mean,,{}", io::format_f64(mean));
    out.write_all(table.as_bytes()).map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })
}

fn cmd_project(a: ProjectArgs) -> CliResult<()> {
    let (k, pairs) = load(&a.scenes)?;
    let theta = ExtrinsicParams::new(a.theta)?;
    let pair = pairs
        .iter()
        .find(|p| p.scene_id() == a.scene)
        .ok_or_else(|| Failure::usage(format!("unknown scene `{}`", a.scene)))?;
    let image = overlay::render(pair, &theta, &k);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    std::fs::write(&a.out, image.to_ppm()).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", a.out.display()),
    })?;
    println!("{} points overlaid; image written to {}", image.overlaid, a.out.display());
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> CliResult<()> {
    let (k, pairs) = load(&a.scenes)?;
    let mut config = calibration_config(&a.scenes, &a.search)?;
    // sequential by default so timings are not skewed by scheduling
    config.mi.parallel = a.parallel;
    let reference = ExtrinsicParams::new(a.search.seed)?;
    let noise = SeedNoise {
        translation: a.noise_trans,
        rotation: a.noise_rot,
        bounds_translation: a.search.bounds_trans,
        bounds_rotation: a.search.bounds_rot,
    };
    create_dir(&a.out)?;
    let (name, csv, summary) = match a.kind {
        Kind::NoiseRobustness => {
            let r = experiment::noise_robustness(
                &pairs,
                &k,
                &reference,
                a.runs.unwrap_or(40),
                &noise,
                &config,
                a.scenes.rng_seed,
            )?;
            ("noise_robustness", r.to_csv(), r.summary())
        }
        Kind::SceneScaling => {
            let sizes = a.sizes.unwrap_or_else(|| vec![5, 10, 20, 40]);
            let r = experiment::scene_scaling(&pairs, &k, &reference, &sizes, a.runs.unwrap_or(5), &config)?;
            ("scene_scaling", r.to_csv(), r.summary())
        }
        Kind::SceneCountVariance => {
            let sizes = a.sizes.unwrap_or_else(|| vec![5, 20, 40]);
            let r = experiment::scene_count_variance(
                &pairs,
                &k,
                &reference,
                &sizes,
                a.runs.unwrap_or(10),
                &noise,
                &config,
                a.scenes.rng_seed,
            )?;
            ("scene_count_variance", r.to_csv(), r.summary())
        }
    };
    write_file(&a.out.join(format!("{name}.csv")), &csv)?;
    write_file(&a.out.join(format!("{name}.txt")), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    let defaults = SynthConfig::default();
    let cfg = SynthConfig {
        ground_truth: match a.theta {
            Some(t) => ExtrinsicParams::new(t)?,
            None => defaults.ground_truth,
        },
        points_per_scene: a.points,
        scene_count: a.scenes,
        texture: a.texture.into(),
        event_noise_rate: a.noise_rate.unwrap_or(defaults.event_noise_rate),
        activity_per_hit: a.activity.unwrap_or(defaults.activity_per_hit),
        poisson: !a.noiseless,
        rng_seed: a.rng_seed,
        ..defaults
    };
    let cfg = if a.noiseless {
        SynthConfig {
            event_noise_rate: 0.0,
            ..cfg
        }
    } else {
        cfg
    };
    cfg.validate()?;
    let manifest = synth::write_dataset(&cfg, &a.out)?;
    println!("ground truth {}", theta_text(&cfg.ground_truth.to_array()));
    println!("manifest written to {}", manifest.display());
    Ok(())
}
