//! `binformer` command line: train, infer, eval and compare.
//!
//! Every subcommand accepts `--config FILE`, a flat `key = value` file whose
//! keys are long flag names. Flags given on the command line win over the
//! file, unknown keys are rejected, and the effective settings are echoed to
//! stderr before the command runs.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::data::{augment, leave_one_out, load_gt, load_image, save_binary, save_continuous, tile, AugmentSpec, Direction, Manifest};
use crate::error::{Error, Result};
use crate::eval::{
    binarize_page, evaluate_baseline, evaluate_model, evaluate_pair, format_table, Baseline, MetricsReport,
    ReportFormat, ReportRow,
};
use crate::model::ModelConfig;
use crate::train::{load_params, TrainConfig, TrainSample, Trainer, LOSS_LOG_HEADER};

/// Method label of the model row in comparison tables.
pub const MODEL_LABEL: &str = "T2T-BinFormer";

#[derive(Debug, Parser)]
#[command(name = "binformer", version, about = "Document image binarization with a tokens-to-token vision transformer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a year-wise split of a manifest and write a checkpoint.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Binarize one page with a trained checkpoint.
    #[command(args_override_self = true)]
    Infer(InferArgs),
    /// Score a binary prediction against its ground truth as CSV.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Tabulate mean metrics of the baselines (and optionally the model) on one year.
    #[command(args_override_self = true)]
    Compare(CompareArgs),
}

fn parse_direction(s: &str) -> std::result::Result<Direction, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<ReportFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// key = value settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tab-separated `year  degraded  gt` listing.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Year selected for the split.
    #[arg(long)]
    pub hold_year: String,
    /// Whether the selected year is the test set or the training set.
    #[arg(long, default_value = "test-on-one", value_parser = parse_direction)]
    pub direction: Direction,
    #[arg(long, default_value = "toy", value_parser = ["paper", "toy"])]
    pub preset: String,
    /// Tile side fed to the network; defaults to the preset's.
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Optimizer steps to run; defaults to `epochs` full passes.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long, default_value_t = 200)]
    pub epochs: u64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1.5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.05)]
    pub weight_decay: f64,
    /// Adds flipped and randomly cropped copies of every training tile.
    #[arg(long)]
    pub augment: bool,
    /// Checkpoint to write; defaults to `<out-dir>/model.ckpt`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Continue from a saved checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Directory for the checkpoint and `loss.csv`.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Degraded page (PNG, PGM or PPM).
    #[arg(long)]
    pub input: PathBuf,
    /// Receives `<stem>_binary.png` and `<stem>_continuous.png`.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Binary prediction; dark pixels are text.
    #[arg(long)]
    pub pred: PathBuf,
    /// Binary ground truth.
    #[arg(long)]
    pub gt: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Year whose pages are scored.
    #[arg(long, alias = "hold-year")]
    pub year: String,
    /// Adds a model row when given.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: ReportFormat,
    /// Also writes the table to `<out-dir>/comparison.{csv,md}`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(clap::Error),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `key = value` lines; `#` starts a comment line.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected `key = value`", i + 1)))?;
        out.push((key.trim().replace('_', "-"), value.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    args.iter().enumerate().find_map(|(i, a)| {
        let s = a.to_str()?;
        if s == "--config" {
            args.get(i + 1).map(PathBuf::from)
        } else {
            s.strip_prefix("--config=").map(PathBuf::from)
        }
    })
}

/// Splices config-file settings in front of the explicit flags so the
/// explicit ones override them.
fn merged_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let Some(sub_name) = args.get(1).and_then(|s| s.to_str()).map(str::to_string) else {
        return Ok(args);
    };
    let cmd = Cli::command();
    let Some(sub) = cmd.find_subcommand(&sub_name) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
    let mut from_file = Vec::new();
    for (key, value) in parse_config_file(&text)? {
        let known = sub
            .get_arguments()
            .any(|a| a.get_long() == Some(key.as_str()) && key != "config");
        if !known {
            return Err(Error::Config(format!(
                "unknown key `{key}` in {} for `{sub_name}`",
                path.display()
            )));
        }
        from_file.push(OsString::from(format!("--{key}")));
        from_file.push(OsString::from(value));
    }
    let mut out = args[..2].to_vec();
    out.extend(from_file);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}

fn echo_effective(matches: &clap::ArgMatches) {
    if let Some((name, sub)) = matches.subcommand() {
        eprintln!("# effective {name} settings");
        for id in sub.ids() {
            if let Ok(Some(raw)) = sub.try_get_raw(id.as_str()) {
                let values: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
                eprintln!("{} = {}", id.as_str().replace('_', "-"), values.join(" "));
            }
        }
    }
}

/// Parses `args` (program name first) and runs the selected command.
pub fn run<I, T>(args: I) -> std::result::Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = merged_args(args)?;
    let matches = Cli::command().try_get_matches_from(args).map_err(CliError::Usage)?;
    let cli = Cli::from_arg_matches(&matches).map_err(CliError::Usage)?;
    echo_effective(&matches);
    match cli.command {
        Command::Train(a) => cmd_train(&a)?,
        Command::Infer(a) => cmd_infer(&a)?,
        Command::Eval(a) => cmd_eval(&a)?,
        Command::Compare(a) => cmd_compare(&a)?,
    }
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let manifest = Manifest::load(&a.manifest)?;
    let split = leave_one_out(&manifest.by_year(), &a.hold_year, a.direction)?;
    if split.train.is_empty() {
        return Err(Error::EmptyDataset(format!("no training pages for split around {}", a.hold_year)));
    }
    let mut model = ModelConfig::preset(&a.preset)?;
    if let Some(size) = a.image_size {
        model = model.with_image_size(size);
    }
    model.validate()?;

    let mut samples = Vec::new();
    for entry in &split.train {
        for t in tile(&entry.load()?, model.image_size)?.tiles {
            let variants = if a.augment {
                let spec = AugmentSpec {
                    crop_size: AugmentSpec::default().crop_size.min(model.image_size * 3 / 4).max(1),
                    seed: a.seed.wrapping_add(samples.len() as u64),
                    ..AugmentSpec::default()
                };
                augment(&t, &spec)?
            } else {
                vec![t]
            };
            for v in variants {
                samples.push(TrainSample::new(v.degraded, &v.gt, &model)?);
            }
        }
    }

    let mut trainer = match &a.resume {
        Some(path) => Trainer::load(path, Some(&model))?,
        None => Trainer::new(
            &model,
            TrainConfig {
                lr: a.lr,
                weight_decay: a.weight_decay,
                batch_size: a.batch_size,
                epochs: a.epochs as usize,
                seed: a.seed,
                ..TrainConfig::default()
            },
        )?,
    };
    let per_epoch = trainer.steps_per_epoch(samples.len()) as u64;
    let total = a.steps.unwrap_or(a.epochs * per_epoch);
    eprintln!(
        "training on {} tiles from {} pages ({} held out), {total} steps",
        samples.len(),
        split.train.len(),
        split.test.len()
    );

    fs::create_dir_all(&a.out_dir).map_err(|e| io_error(&a.out_dir, e))?;
    let log_path = a.out_dir.join("loss.csv");
    let mut log = String::new();
    if a.resume.is_some() && log_path.exists() {
        log = fs::read_to_string(&log_path).map_err(|e| io_error(&log_path, e))?;
    } else {
        log.push_str(LOSS_LOG_HEADER);
        log.push('\n');
    }
    let started = Instant::now();
    for _ in 0..total {
        let report = trainer.train_step(&samples)?;
        log.push_str(&report.csv_row());
        log.push('\n');
        if report.step % 10 == 0 || report.step == 1 {
            eprintln!(
                "step {} loss {:.6} grad_norm {:.4} ({} ms, {:.1} s total)",
                report.step,
                report.loss,
                report.grad_norm,
                report.wall_ms,
                started.elapsed().as_secs_f64()
            );
        }
    }
    fs::write(&log_path, log).map_err(|e| io_error(&log_path, e))?;
    let ckpt = a.checkpoint.clone().unwrap_or_else(|| a.out_dir.join("model.ckpt"));
    trainer.save(&ckpt)?;
    println!("{}", ckpt.display());
    Ok(())
}

pub fn cmd_infer(a: &InferArgs) -> Result<()> {
    let params = load_params(&a.checkpoint, None)?;
    let image = load_image(&a.input)?;
    let out = binarize_page(&params, &image)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| io_error(&a.out_dir, e))?;
    let stem = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("page");
    let binary = a.out_dir.join(format!("{stem}_binary.png"));
    let continuous = a.out_dir.join(format!("{stem}_continuous.png"));
    save_binary(&binary, &out.binary)?;
    save_continuous(&continuous, &out.continuous)?;
    println!("{}\n{}", binary.display(), continuous.display());
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let pred = load_gt(&a.pred)?;
    let gt = load_gt(&a.gt)?;
    if pred.dims() != gt.dims() {
        let dims = |t: &crate::tensor::Tensor| (t.dims()[0], t.dims()[1]);
        return Err(Error::DimensionMismatch {
            left: a.pred.display().to_string(),
            left_dims: dims(&pred),
            right: a.gt.display().to_string(),
            right_dims: dims(&gt),
        });
    }
    let report = evaluate_pair(&pred, &gt)?;
    println!("{}\n{}", MetricsReport::CSV_HEADER, report.csv_row());
    Ok(())
}

pub fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let manifest = Manifest::load(&a.manifest)?;
    let entries = manifest.year(&a.year)?;
    if entries.is_empty() {
        return Err(Error::EmptyDataset(format!("year {} has no pages", a.year)));
    }
    let pages = entries.iter().map(|e| e.load()).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for b in Baseline::ALL {
        let model = if b == Baseline::Otsu { "Global threshold" } else { "Local threshold" };
        rows.push(ReportRow::new(b.name(), model, evaluate_baseline(b, &pages)?));
    }
    if let Some(path) = &a.checkpoint {
        let params = load_params(path, None)?;
        rows.push(ReportRow::new(MODEL_LABEL, "Transformer", evaluate_model(&params, &pages)?));
    }
    let table = format_table(&rows, a.format);
    print!("{table}");
    std::io::stdout().flush().map_err(|e| io_error(Path::new("<stdout>"), e))?;
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let ext = match a.format {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        };
        let path = dir.join(format!("comparison.{ext}"));
        fs::write(&path, table).map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}
