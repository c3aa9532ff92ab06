//! Command-line entry points: generate synthetic datasets, train the
//! joint model, evaluate checkpoints, render views, and run the
//! breaking-point and encoding-ablation harnesses.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error,
//! 3 numerical divergence.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use ntf4::checkpoint::checkpoint_dtype;
use ntf4::data::{
    dataset_fingerprint, generate_synthetic, load_dataset, mini_preset, perturb_cameras,
    read_focals, two_group_preset, DataError, SceneDataset,
};
use ntf4::geometry::read_trajectory;
use ntf4::posenet::PoseEncoderKind;
use ntf4::scalar::Dtype;
use ntf4::training::{
    breaking_point_run, encoding_ablation, TrainConfig, TrainError, Trainer,
};
use ntf4::Scalar;

#[derive(Parser)]
#[command(name = "ntf4", version, about = "Joint NeRF and camera-parameter training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with exact camera ground truth.
    Generate(GenerateArgs),
    /// Train the joint model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint against a dataset.
    Eval(EvalArgs),
    /// Render dataset views from a checkpoint as PNGs.
    Render(RenderArgs),
    /// Breaking-point analysis: retrain on every k-th image.
    BreakingPoint(BreakingPointArgs),
    /// Compare Gaussian vs positional pose encoders over several seeds.
    Ablate(AblateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    TwoGroup,
    Mini,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Gaussian,
    Positional,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum FreezeArg {
    Pose,
    Focal,
    Field,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Heldout,
    All,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "two-group")]
    preset: PresetArg,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of training cameras (preset default when omitted).
    #[arg(long)]
    cameras: Option<usize>,
    /// Number of heldout cameras.
    #[arg(long)]
    heldout: Option<usize>,
    /// Attach an initial-guess copy of the cameras with rotations
    /// perturbed by up to this many degrees.
    #[arg(long, default_value_t = 0.0)]
    perturb_rot: f64,
    /// Translation perturbation as a fraction of the scene extent.
    #[arg(long, default_value_t = 0.0)]
    perturb_trans: f64,
    /// Focal perturbation: focals scaled by exactly 1 +/- this fraction.
    #[arg(long, default_value_t = 0.0)]
    perturb_focal: f64,
}

#[derive(Args)]
struct ConfigOverrides {
    /// TOML file with a full training configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rays: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    field_width: Option<usize>,
    #[arg(long, value_enum)]
    pose_encoding: Option<EncodingArg>,
    #[arg(long)]
    pose_bands: Option<usize>,
    #[arg(long)]
    pose_sigma: Option<f64>,
    #[arg(long)]
    pose_hidden: Option<usize>,
    #[arg(long)]
    ssim_warmup: Option<u64>,
    #[arg(long)]
    ssim_weight: Option<f64>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Disable stratified jitter along rays.
    #[arg(long)]
    no_jitter: bool,
    /// Freeze a parameter group (repeatable).
    #[arg(long, value_enum)]
    freeze: Vec<FreezeArg>,
    /// Freeze cameras for the first N epochs while the field forms.
    #[arg(long)]
    camera_delay: Option<u64>,
    /// Take one accumulated camera step per epoch instead of per image.
    #[arg(long)]
    camera_accumulate: bool,
    /// Base learning rate of the field schedule.
    #[arg(long)]
    field_lr: Option<f64>,
    /// Base learning rate of the pose schedule.
    #[arg(long)]
    pose_lr: Option<f64>,
    /// Base learning rate of the focal schedule.
    #[arg(long)]
    focal_lr: Option<f64>,
    #[arg(long)]
    pretrain_steps: Option<u64>,
    #[arg(long)]
    pretrain_lr: Option<f64>,
    /// Use the desk-scale profile as the base configuration.
    #[arg(long)]
    desk: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "f32")]
    precision: PrecisionArg,
    /// Trajectory file to pretrain the pose network from.
    #[arg(long)]
    init_poses: Option<PathBuf>,
    /// `group_id f_x f_y` file to initialize the focal bank from.
    #[arg(long)]
    init_focals: Option<PathBuf>,
    /// Initialize cameras from the dataset's initial-guess sidecars.
    #[arg(long)]
    init_from_guess: bool,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config of the training run (defaults to config.toml next to the
    /// checkpoint).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, value_enum, default_value = "all")]
    split: SplitArg,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BreakingPointArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated list of image-skip factors.
    #[arg(long, default_value = "2,3,4,5", value_delimiter = ',')]
    skips: Vec<usize>,
    #[arg(long)]
    init_from_guess: bool,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

enum CliError {
    Usage(String),
    Data(String),
    Divergence(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Divergence(m) => m,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NumericalDivergence { .. } => CliError::Divergence(e.to_string()),
            TrainError::Data(_) | TrainError::Checkpoint(_) => CliError::Data(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Precondition(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path too
            let _ = e.print();
            let code = if e.use_stderr() { 1 } else { 0 };
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Render(args) => cmd_render(args),
        Command::BreakingPoint(args) => cmd_breaking_point(args),
        Command::Ablate(args) => cmd_ablate(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message());
        std::process::exit(e.code());
    }
}

/// Seed resolution: flag, then the NTF4_SEED environment variable, then 0.
fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("NTF4_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|e| CliError::Usage(format!("NTF4_SEED={v:?} is not a u64: {e}"))),
        Err(_) => Ok(0),
    }
}

fn resolve_config(overrides: &ConfigOverrides) -> Result<TrainConfig, CliError> {
    let mut cfg = if let Some(path) = &overrides.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
    } else if overrides.desk {
        TrainConfig::desk()
    } else {
        TrainConfig::default()
    };
    if overrides.config.is_some() && overrides.desk {
        return Err(CliError::Usage(
            "--desk conflicts with --config; pick one base configuration".into(),
        ));
    }
    if let Some(v) = overrides.epochs {
        cfg.epochs = v;
    }
    cfg.seed = resolve_seed(overrides.seed)?;
    if let Some(v) = overrides.rays {
        cfg.rays_per_image = v;
    }
    if let Some(v) = overrides.samples {
        cfg.samples_per_ray = v;
    }
    if let Some(v) = overrides.field_width {
        cfg.field.width = v;
    }
    if let Some(v) = overrides.pose_encoding {
        cfg.pose.encoder = match v {
            EncodingArg::Gaussian => PoseEncoderKind::Gaussian,
            EncodingArg::Positional => PoseEncoderKind::Positional,
        };
    }
    if let Some(v) = overrides.pose_bands {
        cfg.pose.bands = v;
    }
    if let Some(v) = overrides.pose_sigma {
        cfg.pose.sigma = v;
    }
    if let Some(v) = overrides.pose_hidden {
        cfg.pose.hidden = v;
    }
    if let Some(v) = overrides.ssim_warmup {
        cfg.ssim_warmup_epochs = v;
    }
    if let Some(v) = overrides.ssim_weight {
        cfg.ssim_weight = v;
    }
    if let Some(v) = overrides.patch_size {
        cfg.patch_size = v;
    }
    if let Some(v) = overrides.eval_every {
        cfg.eval_every = v;
    }
    if let Some(v) = overrides.checkpoint_every {
        cfg.checkpoint_every = v;
    }
    if overrides.no_jitter {
        cfg.jitter = false;
    }
    for f in &overrides.freeze {
        match f {
            FreezeArg::Pose => cfg.freeze_pose = true,
            FreezeArg::Focal => cfg.freeze_focal = true,
            FreezeArg::Field => cfg.freeze_field = true,
        }
    }
    if let Some(v) = overrides.camera_delay {
        cfg.camera_delay_epochs = v;
    }
    if overrides.camera_accumulate {
        cfg.camera_accumulate = true;
    }
    if let Some(v) = overrides.field_lr {
        cfg.field_lr.base = v;
    }
    if let Some(v) = overrides.pose_lr {
        cfg.pose_lr.base = v;
    }
    if let Some(v) = overrides.focal_lr {
        cfg.focal_lr.base = v;
    }
    if let Some(v) = overrides.pretrain_steps {
        cfg.pretrain_steps = v;
    }
    if let Some(v) = overrides.pretrain_lr {
        cfg.pretrain_lr = v;
    }
    Ok(cfg)
}

#[derive(serde::Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    dataset_hash: String,
    out_dir: String,
    config: &'a TrainConfig,
}

fn write_manifest(
    command: &str,
    data_dir: &Path,
    out_dir: &Path,
    cfg: &TrainConfig,
) -> Result<(), CliError> {
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        dataset_hash: dataset_fingerprint(data_dir)?,
        out_dir: out_dir.display().to_string(),
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Usage(format!("serializing manifest: {e}")))?;
    std::fs::write(out_dir.join("manifest.json"), json)
        .map_err(|e| CliError::Data(format!("writing manifest: {e}")))?;
    Ok(())
}

fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Usage(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, json).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed)?;
    let (scene, mut layout) = match args.preset {
        PresetArg::TwoGroup => two_group_preset(),
        PresetArg::Mini => mini_preset(),
    };
    if let Some(c) = args.cameras {
        layout.n_train = c;
    }
    if let Some(h) = args.heldout {
        layout.n_heldout = h;
    }
    let mut dataset = generate_synthetic(&scene, &layout, seed)?;
    if args.perturb_rot > 0.0 || args.perturb_trans > 0.0 || args.perturb_focal > 0.0 {
        dataset = perturb_cameras(
            &dataset,
            args.perturb_rot,
            args.perturb_trans,
            args.perturb_focal,
            seed ^ 0x70e5,
        )?;
    }
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    dataset.save(&args.out)?;
    println!(
        "generated {} images ({} heldout) in {} group(s) at {}",
        dataset.images.len(),
        dataset.heldout_indices().len(),
        dataset.groups.len(),
        args.out.display()
    );
    Ok(())
}

/// Initial cameras resolved from CLI flags, in image order.
fn resolve_init(
    args: &TrainArgs,
    dataset: &SceneDataset,
) -> Result<(Option<Vec<ntf4::Pose>>, Option<Vec<(f64, f64)>>), CliError> {
    let mut poses = None;
    let mut focals = None;
    if let Some(path) = &args.init_poses {
        let entries = read_trajectory(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let ordered: Result<Vec<ntf4::Pose>, CliError> = dataset
            .images
            .iter()
            .map(|img| {
                entries
                    .iter()
                    .find(|(id, _)| *id == img.id)
                    .map(|(_, p)| *p)
                    .ok_or_else(|| {
                        CliError::Data(format!(
                            "{}: no pose for image id {}",
                            path.display(),
                            img.id
                        ))
                    })
            })
            .collect();
        poses = Some(ordered?);
    }
    if let Some(path) = &args.init_focals {
        focals = Some(read_focals(path, dataset.groups.len())?);
    }
    Ok((poses, focals))
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    match args.precision {
        PrecisionArg::F32 => run_train::<f32>(args),
        PrecisionArg::F64 => run_train::<f64>(args),
    }
}

fn run_train<T: Scalar>(args: TrainArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.data)?;
    let mut cfg = resolve_config(&args.overrides)?;
    if args.init_from_guess {
        cfg.init_from_dataset = true;
    }
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    cfg.diagnostic_dir = Some(args.out.clone());
    write_manifest("train", &args.data, &args.out, &cfg)?;
    let config_toml = toml::to_string_pretty(&cfg)
        .map_err(|e| CliError::Usage(format!("serializing config: {e}")))?;
    std::fs::write(args.out.join("config.toml"), config_toml)
        .map_err(|e| CliError::Data(format!("writing config.toml: {e}")))?;

    let (init_poses, init_focals) = resolve_init(&args, &dataset)?;
    let mut trainer: Trainer<T> = if init_poses.is_some() || init_focals.is_some() {
        if cfg.init_from_dataset {
            return Err(CliError::Usage(
                "--init-from-guess conflicts with explicit --init-poses/--init-focals".into(),
            ));
        }
        Trainer::with_external_init(dataset, cfg.clone(), init_poses, init_focals)?
    } else {
        Trainer::new(dataset, cfg.clone())?
    };
    if let Some(report) = &trainer.pretrain_report {
        write_json(&args.out.join("pretrain.json"), report)?;
        eprintln!(
            "pretraining: {} steps, mean rotation residual {:.4} deg, converged: {}",
            report.steps_run, report.mean_rot_deg, report.converged
        );
    }

    let reports_path = args.out.join("reports.jsonl");
    let mut reports_file = std::fs::File::create(&reports_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", reports_path.display())))?;
    for _ in 0..cfg.epochs {
        let report = trainer.train_epoch().map_err(CliError::from)?;
        let line = serde_json::to_string(&report)
            .map_err(|e| CliError::Usage(format!("serializing report: {e}")))?;
        writeln!(reports_file, "{line}")
            .map_err(|e| CliError::Data(format!("writing reports: {e}")))?;
        if report.epoch % 100 == 0 || report.epoch + 1 == cfg.epochs {
            eprintln!(
                "epoch {:>6}  loss {:.6}  psnr {:.2}{}",
                report.epoch,
                report.loss,
                report.psnr,
                report
                    .rot_err
                    .map(|r| format!("  rot_err {r:.3} deg"))
                    .unwrap_or_default()
            );
        }
        if cfg.checkpoint_every > 0 && trainer.epoch % cfg.checkpoint_every == 0 {
            trainer
                .save_checkpoint(&args.out.join(format!("checkpoint_ep{:06}.ntf4", trainer.epoch)))?;
        }
        if cfg.eval_every > 0 && trainer.epoch % cfg.eval_every == 0 {
            let metrics = trainer.evaluate();
            write_json(
                &args.out.join(format!("metrics_ep{:06}.json", trainer.epoch)),
                &metrics,
            )?;
        }
    }
    trainer.save_checkpoint(&args.out.join("checkpoint.ntf4"))?;
    let metrics = trainer.evaluate();
    write_json(&args.out.join("metrics.json"), &metrics)?;
    eprintln!(
        "final: split {} mean psnr {:.2} dB, mean ssim {:.4}",
        metrics.split, metrics.mean_psnr, metrics.mean_ssim
    );
    Ok(())
}

fn load_run(
    checkpoint: &Path,
    data: &Path,
    config: &Option<PathBuf>,
) -> Result<(SceneDataset, TrainConfig, Dtype), CliError> {
    let dataset = load_dataset(data)?;
    let config_path = config.clone().unwrap_or_else(|| {
        checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join("config.toml")
    });
    let text = std::fs::read_to_string(&config_path).map_err(|e| {
        CliError::Usage(format!(
            "{}: {e} (pass --config for checkpoints outside a run directory)",
            config_path.display()
        ))
    })?;
    let cfg: TrainConfig = toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", config_path.display())))?;
    let dtype =
        checkpoint_dtype(checkpoint).map_err(|e| CliError::Data(e.to_string()))?;
    Ok((dataset, cfg, dtype))
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let (dataset, cfg, dtype) = load_run(&args.checkpoint, &args.data, &args.config)?;
    let metrics = match dtype {
        Dtype::F32 => Trainer::<f32>::resume(dataset, cfg, &args.checkpoint)?.evaluate(),
        Dtype::F64 => Trainer::<f64>::resume(dataset, cfg, &args.checkpoint)?.evaluate(),
    };
    match &args.out {
        Some(path) => write_json(path, &metrics)?,
        None => println!(
            "{}",
            serde_json::to_string_pretty(&metrics)
                .map_err(|e| CliError::Usage(format!("serializing metrics: {e}")))?
        ),
    }
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<(), CliError> {
    let (dataset, cfg, dtype) = load_run(&args.checkpoint, &args.data, &args.config)?;
    match dtype {
        Dtype::F32 => run_render::<f32>(args, dataset, cfg),
        Dtype::F64 => run_render::<f64>(args, dataset, cfg),
    }
}

#[derive(serde::Serialize)]
struct RenderedView {
    id: u64,
    file: String,
    heldout: bool,
    /// PSNR against the dataset image, when rendered at full resolution.
    #[serde(skip_serializing_if = "Option::is_none")]
    psnr: Option<f64>,
}

fn run_render<T: Scalar>(
    args: RenderArgs,
    dataset: SceneDataset,
    cfg: TrainConfig,
) -> Result<(), CliError> {
    let trainer: Trainer<T> = Trainer::resume(dataset, cfg, &args.checkpoint)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    let indices: Vec<usize> = (0..trainer.dataset.images.len())
        .filter(|&i| match args.split {
            SplitArg::Train => !trainer.dataset.images[i].heldout,
            SplitArg::Heldout => trainer.dataset.images[i].heldout,
            SplitArg::All => true,
        })
        .collect();
    if indices.is_empty() {
        return Err(CliError::Usage("no images in the requested split".into()));
    }
    let mut report = Vec::with_capacity(indices.len());
    for idx in indices {
        let image = &trainer.dataset.images[idx];
        let rendered = trainer.render_view(idx, args.stride)?;
        let file = format!("render_{:03}.png", image.id);
        rendered.save_png(&args.out.join(&file))?;
        let psnr = (args.stride == 1)
            .then(|| ntf4::metrics::psnr_images(&rendered, &image.pixels));
        report.push(RenderedView {
            id: image.id,
            file,
            heldout: image.heldout,
            psnr,
        });
    }
    write_json(&args.out.join("render_report.json"), &report)?;
    for view in &report {
        match view.psnr {
            Some(p) => println!("{}  psnr {:.2} dB", view.file, p),
            None => println!("{}", view.file),
        }
    }
    Ok(())
}

fn cmd_breaking_point(args: BreakingPointArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.data)?;
    let mut cfg = resolve_config(&args.overrides)?;
    if args.init_from_guess {
        cfg.init_from_dataset = true;
    }
    if args.skips.is_empty() {
        return Err(CliError::Usage("need at least one skip factor".into()));
    }
    let table = breaking_point_run::<f32>(&dataset, &args.skips, &cfg)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Data(format!("{}: {e}", parent.display())))?;
        }
    }
    write_json(&args.out, &table)?;
    println!("skip  images  rot_err(deg)  trans_err  success");
    for row in &table.rows {
        println!(
            "{:>4}  {:>6}  {:>12.3}  {:>9.4}  {}",
            row.skip, row.n_images, row.mean_rot_deg, row.mean_trans, row.success
        );
    }
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.data)?;
    let cfg = resolve_config(&args.overrides)?;
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let report = encoding_ablation::<f32>(&dataset, &cfg, &seeds)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Data(format!("{}: {e}", parent.display())))?;
        }
    }
    write_json(&args.out, &report)?;
    println!(
        "gaussian median rot err: {:.3} deg over {} runs",
        report.gaussian_median,
        report.gaussian_rot_errs.len()
    );
    println!(
        "positional median rot err: {:.3} deg over {} runs",
        report.positional_median,
        report.positional_rot_errs.len()
    );
    Ok(())
}
