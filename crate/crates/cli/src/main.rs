use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use naide_core::denoise::{
    adaptive_loss_and_grad, affine_csv, denoise_with_map, supervised_loss_and_grad,
};
use naide_core::eval::{evaluate_suite, evaluate_suite_with, list_images};
use naide_core::gradcheck::gradient_check_sampled;
use naide_core::io::encode_ngf;
use naide_core::noise::derive_seed;
use naide_core::training::TrainReport;
use naide_core::{
    adaptive_train_from_scratch, add_gaussian_noise, fine_tune, load_image,
    make_supervised_dataset, save_image, train_supervised, verify_lemma_monte_carlo, Activation,
    Checkpoint, GrayImage, MlpWeights, NaideError, NoiseSpec, StopRule, TrainConfig,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "naide", version, about = "Neural affine image denoiser")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Add Gaussian noise to a clean image; writes NGF plus a PGM preview.
    Corrupt(CorruptArgs),
    /// Supervised training on clean images, or adaptive training on one noisy image.
    Train(TrainArgs),
    /// Fine-tune a checkpoint on a single noisy image.
    Finetune(FinetuneArgs),
    /// Denoise a noisy image with a checkpoint.
    Denoise(DenoiseArgs),
    /// Corrupt, denoise and score every clean image in a directory.
    Eval(EvalArgs),
    /// Monte-Carlo check that the estimated loss is unbiased.
    CheckLemma(LemmaArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
}

/// Overrides layered on top of defaults and `--config`.
#[derive(Args, Default)]
struct Overrides {
    /// JSON file with TrainConfig keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Noise level in 8-bit units.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    activation: Option<Activation>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial learning rate of the phase being run.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stop: Option<StopRule>,
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output NGF path; the preview goes next to it with a .pgm extension.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("data").required(true).args(["clean", "noisy"]))]
struct TrainArgs {
    /// Clean training images or directories of them (supervised).
    #[arg(long, num_args = 1..)]
    clean: Vec<PathBuf>,
    /// A single noisy image (adaptive training from scratch).
    #[arg(long)]
    noisy: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    noisy: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    noisy: PathBuf,
    /// Reconstruction path (.ngf or .pgm).
    #[arg(long)]
    output: PathBuf,
    /// Write per-pixel slope and intercept as CSV.
    #[arg(long)]
    dump_affine: Option<PathBuf>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("model").required(true).args(["checkpoint", "identity"]))]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Score the noisy input itself instead of a network.
    #[arg(long)]
    identity: bool,
    #[arg(long)]
    clean_dir: PathBuf,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Metric CSV path.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct LemmaArgs {
    #[arg(long, default_value_t = 0.5)]
    x: f64,
    #[arg(long, default_value_t = 0.8)]
    a: f64,
    #[arg(long, default_value_t = 0.1)]
    b: f64,
    /// 8-bit units; 25.5 is 0.1 on the unit scale.
    #[arg(long, default_value_t = 25.5)]
    sigma: f64,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Objective {
    Supervised,
    Adaptive,
    Both,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_delimiter = ',', default_value = "8,16,16,2")]
    dims: Vec<usize>,
    #[arg(long, default_value = "positive")]
    activation: Activation,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "both")]
    objective: Objective,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Noise level for the adaptive objective, 8-bit units.
    #[arg(long, default_value_t = 25.0)]
    sigma: f64,
    /// Check at most this many parameters (0 = all).
    #[arg(long, default_value_t = 0)]
    max_params: usize,
}

/// A check that ran but did not pass.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<CheckFailed>() {
            return EXIT_NUMERIC;
        }
        if let Some(e) = cause.downcast_ref::<NaideError>() {
            return match e {
                NaideError::Config(_) => EXIT_USAGE,
                NaideError::NonFinite(_) | NaideError::Training { .. } => EXIT_NUMERIC,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

/// The error chain joined with ": ", skipping causes already quoted by
/// their parent message.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Corrupt(a) => corrupt(a),
        Command::Train(a) => train(a),
        Command::Finetune(a) => finetune(a),
        Command::Denoise(a) => denoise(a),
        Command::Eval(a) => eval(a),
        Command::CheckLemma(a) => check_lemma(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("{}: no such file", path.display());
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Defaults, then `base` (e.g. a checkpoint's config), then `--config`, then flags.
fn effective_config(base: TrainConfig, o: &Overrides, finetune: bool) -> Result<TrainConfig> {
    let mut value = serde_json::to_value(&base)?;
    if let Some(path) = &o.config {
        require_file(path)?;
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| NaideError::Config(format!("{}: {e}", path.display())))?;
        let Some(map) = file.as_object() else {
            return Err(
                NaideError::Config(format!("{}: expected a JSON object", path.display())).into(),
            );
        };
        for (key, v) in map {
            value[key] = v.clone();
        }
    }
    let mut c: TrainConfig =
        serde_json::from_value(value).map_err(|e| NaideError::Config(e.to_string()))?;
    if let Some(v) = o.sigma {
        c.sigma_255 = v;
    }
    if let Some(v) = o.k {
        c.k = v;
    }
    if let Some(v) = o.activation {
        c.activation = v;
    }
    if let Some(v) = &o.hidden {
        c.hidden = v.clone();
    }
    if let Some(v) = o.epochs {
        c.epochs = v;
    }
    if let Some(v) = o.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = o.lr {
        if finetune {
            c.lr0_finetune = v;
        } else {
            c.lr0_supervised = v;
        }
    }
    if let Some(v) = o.seed {
        c.seed = v;
    }
    if let Some(v) = o.stop {
        c.stop_rule = v;
    }
    c.validate()?;
    Ok(c)
}

fn config_json(c: &TrainConfig) -> String {
    serde_json::to_string_pretty(c).expect("config serializes") + "\n"
}

fn write_reports(dir: &Path, report: &TrainReport) -> Result<()> {
    write(&dir.join("report.csv"), report.to_csv(false))?;
    write(&dir.join("timing.csv"), report.to_csv(true))
}

fn corrupt(a: CorruptArgs) -> Result<()> {
    require_file(&a.input)?;
    let spec = NoiseSpec::new(a.sigma)?;
    let clean = load_image(&a.input)?
        .into_clean()
        .with_context(|| format!("{} is not a clean image", a.input.display()))?;
    let preview = a.output.with_extension("pgm");
    if preview == a.output {
        return Err(NaideError::Config(
            "--output is the NGF path; the .pgm preview is derived from it".into(),
        )
        .into());
    }
    let noisy = add_gaussian_noise(&clean, spec, a.seed);
    write(&a.output, encode_ngf(&noisy))?;
    save_image(&noisy, &preview)?;
    println!("wrote {} and {}", a.output.display(), preview.display());
    Ok(())
}

fn collect_clean(paths: &[PathBuf]) -> Result<Vec<(PathBuf, GrayImage)>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            files.extend(list_images(p)?);
        } else {
            require_file(p)?;
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(NaideError::Config("no clean training images found".into()).into());
    }
    files
        .into_iter()
        .map(|f| {
            let img = load_image(&f)?
                .into_clean()
                .with_context(|| format!("{} is not a clean image", f.display()))?;
            Ok((f, img))
        })
        .collect()
}

fn train(a: TrainArgs) -> Result<()> {
    let config = effective_config(TrainConfig::default(), &a.overrides, false)?;
    let spec = config.noise_spec()?;
    let (weights, report) = if let Some(noisy_path) = &a.noisy {
        require_file(noisy_path)?;
        let noisy = load_image(noisy_path)?.into_noisy();
        info!("adaptive training from scratch on {}", noisy_path.display());
        adaptive_train_from_scratch(&noisy, spec, &config)?
    } else {
        let images = collect_clean(&a.clean)?;
        info!("supervised training on {} images", images.len());
        let clean: Vec<GrayImage> = images.into_iter().map(|(_, img)| img).collect();
        let dataset = make_supervised_dataset(&clean, spec, config.k, config.seed)?;
        train_supervised(&dataset, &config)?
    };
    create_dir(&a.out)?;
    Checkpoint::new(weights, config.clone()).save(a.out.join("checkpoint.json"))?;
    write_reports(&a.out, &report)?;
    write(&a.out.join("config.json"), config_json(&config))?;
    println!(
        "epochs {} objective {:.6e} -> {:.6e}",
        report.epochs.len(),
        report.initial_objective,
        report.final_objective()
    );
    println!("checkpoint {}", a.out.join("checkpoint.json").display());
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    require_file(path)?;
    Ok(Checkpoint::load(path)?)
}

fn finetune(a: FinetuneArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    if a.overrides.sigma.is_none() && a.overrides.config.is_none() {
        warn!(
            "no --sigma given; using the checkpoint's training noise level {}",
            ckpt.config.sigma_255
        );
    }
    let config = effective_config(ckpt.config.clone(), &a.overrides, true)?;
    if config.dims() != ckpt.weights.dims() {
        return Err(NaideError::Config(format!(
            "checkpoint network {:?} does not match k = {} / hidden {:?}",
            ckpt.weights.dims(),
            config.k,
            config.hidden
        ))
        .into());
    }
    require_file(&a.noisy)?;
    let noisy = load_image(&a.noisy)?.into_noisy();
    let spec = config.noise_spec()?;
    let out = fine_tune(&ckpt.weights, &noisy, spec, &config)?;
    create_dir(&a.out)?;
    Checkpoint::new(out.weights, config.clone()).save(a.out.join("checkpoint.json"))?;
    Checkpoint::new(out.best_weights, config.clone()).save(a.out.join("best.json"))?;
    write_reports(&a.out, &out.report)?;
    write(&a.out.join("config.json"), config_json(&config))?;
    println!(
        "epochs {} objective {:.6e} -> {:.6e} threshold {:.6e}",
        out.report.epochs.len(),
        out.report.initial_objective,
        out.report.final_objective(),
        spec.variance_norm()
    );
    println!("best epoch {}", out.best_epoch);
    println!("stop reason {}", out.report.stop_reason);
    Ok(())
}

fn denoise(a: DenoiseArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    require_file(&a.noisy)?;
    let noisy = load_image(&a.noisy)?.into_noisy();
    let (recon, map) = denoise_with_map(&ckpt.weights, &noisy, ckpt.config.k)?;
    save_image(&recon, &a.output)?;
    if let Some(path) = &a.dump_affine {
        write(path, affine_csv(noisy.width(), &map))?;
    }
    println!("wrote {}", a.output.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let spec = NoiseSpec::new(a.sigma)?;
    if !a.clean_dir.is_dir() {
        bail!("{}: no such directory", a.clean_dir.display());
    }
    let report = match &a.checkpoint {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            evaluate_suite(&a.clean_dir, &ckpt.weights, spec, ckpt.config.k, a.seed)?
        }
        None => evaluate_suite_with(&a.clean_dir, spec, a.seed, |noisy| Ok(noisy.clone()))?,
    };
    for m in &report.per_image {
        println!("{} {:.4} dB", m.image, m.psnr_db);
    }
    println!(
        "mean {:.4} dB std {:.4} dB over {} images",
        report.mean_psnr_db,
        report.std_psnr_db,
        report.per_image.len()
    );
    if let Some(path) = &a.output {
        write(path, report.to_csv())?;
    }
    Ok(())
}

fn check_lemma(a: LemmaArgs) -> Result<()> {
    let spec = NoiseSpec::new(a.sigma)?;
    if a.samples < 2 {
        return Err(NaideError::Config("need at least 2 samples".into()).into());
    }
    if a.samples < 1000 {
        eprintln!(
            "warning: {} samples is underpowered; use at least 1000 for a meaningful check",
            a.samples
        );
    }
    let check = verify_lemma_monte_carlo(a.x, a.a, a.b, spec, a.samples, a.seed);
    println!("empirical mean  {:.9}", check.empirical_mean);
    println!("standard error  {:.3e}", check.standard_error);
    println!("closed form     {:.9}", check.closed_form);
    println!("deviation       {:.2} standard errors", check.z_score());
    if check.within(4.0) {
        println!("PASS");
        Ok(())
    } else {
        Err(CheckFailed(format!(
            "deviation {:.2} exceeds 4 standard errors",
            check.z_score()
        ))
        .into())
    }
}

fn unit(seed: u64, i: u64) -> f64 {
    (derive_seed(seed, i) >> 11) as f64 / (1u64 << 53) as f64
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    if a.batch == 0 {
        return Err(NaideError::Config("batch must be at least 1".into()).into());
    }
    let weights = MlpWeights::init(&a.dims, a.activation, a.seed)?;
    let width = weights.input_width();
    let data_seed = derive_seed(a.seed, 1);
    let ctx = ndarray::Array2::from_shape_fn((a.batch, width), |(r, c)| {
        unit(data_seed, (r * width + c) as u64) - 0.5
    });
    let offset = (a.batch * width) as u64;
    let x: Vec<f64> = (0..a.batch as u64)
        .map(|i| unit(data_seed, offset + i))
        .collect();
    let z: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| v + 0.2 * (unit(data_seed, offset + a.batch as u64 + i as u64) - 0.5))
        .collect();
    let var = NoiseSpec::new(a.sigma)?.variance_norm();
    let max_params = if a.max_params == 0 {
        usize::MAX
    } else {
        a.max_params
    };

    let mut worst = 0.0f64;
    if matches!(a.objective, Objective::Supervised | Objective::Both) {
        let e = gradient_check_sampled(
            &weights,
            |w| supervised_loss_and_grad(w, ctx.view(), &z, &x),
            a.eps,
            max_params,
            a.seed,
        )?;
        println!("supervised max relative error {e:.3e}");
        worst = worst.max(e);
    }
    if matches!(a.objective, Objective::Adaptive | Objective::Both) {
        let e = gradient_check_sampled(
            &weights,
            |w| adaptive_loss_and_grad(w, ctx.view(), &z, var),
            a.eps,
            max_params,
            a.seed,
        )?;
        println!("adaptive max relative error {e:.3e}");
        worst = worst.max(e);
    }
    if !worst.is_finite() {
        bail!(CheckFailed(
            "gradient check produced a non-finite error".into()
        ));
    }
    if worst > a.tol {
        return Err(anyhow!(CheckFailed(format!(
            "max relative error {worst:.3e} exceeds tolerance {:.1e}",
            a.tol
        ))));
    }
    println!("PASS (tolerance {:.1e})", a.tol);
    Ok(())
}
