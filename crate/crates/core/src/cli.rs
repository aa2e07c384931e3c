//! Command-line front end. Every command prints a JSON document on stdout
//! that echoes its resolved configuration; failures print a JSON error on
//! stderr and exit 1, flag errors exit 2.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::data::format::write_json;
use crate::data::{gen_synthetic, load_dataset, save_dataset, validate_dataset_dir, AugmentationConfig, SynthConfig};
use crate::error::{Result, TrustError};
use crate::pseudolabel::{
    generate_pseudo_labels, load_pseudo_labels, pseudo_label_accuracy, save_pseudo_labels, train_text_classifier,
    TextClassifierConfig, PSEUDO_LABELS_FILE,
};
use crate::trainer::{ablate, evaluate, prepare_supervision, train, LossToggles, TrainConfig, VisionModel, ABLATION_ROWS};
use crate::uncertainty::{load_weights, save_weights, score_dataset, weight_histogram, ReliabilityWeights};

pub const WEIGHTS_FILE: &str = "weights.emb";
pub const WEIGHTS_REPORT_FILE: &str = "weights_report.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const MODEL_DIR: &str = "model";

#[derive(Parser, Debug)]
#[command(name = "trust", version, about = "Embedding-space domain adaptation with caption supervision")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic source/target pair into OUT/source and OUT/target.
    GenSynth(GenSynthArgs),
    /// Train the caption classifier on source and pseudo-label the target set.
    Pseudolabel(PseudolabelArgs),
    /// Score target samples by CLIP image-caption agreement.
    Weights(WeightsArgs),
    /// Train the vision model.
    Train(TrainArgs),
    /// Accuracy of a saved model on a labelled dataset.
    Eval(EvalArgs),
    /// Run the five-row ablation and print the table.
    Ablate(AblateArgs),
    /// Check a dataset directory against the on-disk format.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct SeedArg {
    /// Run seed (falls back to TRUST_SEED, then 0).
    #[arg(long, env = "TRUST_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long = "per-class")]
    per_class: Option<usize>,
    #[arg(long)]
    dim_image: Option<usize>,
    #[arg(long)]
    dim_caption: Option<usize>,
    #[arg(long)]
    dim_clip: Option<usize>,
    #[arg(long)]
    shift_angle: Option<f64>,
    #[arg(long)]
    shift_offset: Option<f64>,
    #[arg(long)]
    noise_image: Option<f64>,
    #[arg(long)]
    noise_caption: Option<f64>,
    #[arg(long)]
    noise_clip: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args, Debug)]
struct PseudolabelArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Output directory for the pseudo-label files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    text_epochs: Option<usize>,
    #[arg(long)]
    text_lr: Option<f64>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args, Debug)]
struct WeightsArgs {
    #[arg(long)]
    target: PathBuf,
    /// Output directory for the weight file and histogram report.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    scoring_batch_size: Option<usize>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Variant {
    None,
    Hard,
    Soft,
    Uncertainty,
    Full,
}

impl Variant {
    fn toggles(self) -> LossToggles {
        let name = match self {
            Variant::None => "none",
            Variant::Hard => "hard_ctr",
            Variant::Soft => "soft_ctr",
            Variant::Uncertainty => "uncertainty",
            Variant::Full => "full",
        };
        ABLATION_ROWS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).expect("every variant is a row")
    }
}

#[derive(Args, Debug)]
struct TrainFlags {
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    scoring_batch_size: Option<usize>,
    #[arg(long)]
    sigma_weak: Option<f64>,
    #[arg(long)]
    sigma_strong: Option<f64>,
    #[arg(long)]
    dropout_strong: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    text_epochs: Option<usize>,
    #[arg(long)]
    text_lr: Option<f64>,
    #[command(flatten)]
    seed: SeedArg,
}

impl TrainFlags {
    fn resolve(&self, toggles: LossToggles) -> TrainConfig {
        let d = TrainConfig::default();
        let aug = AugmentationConfig::default();
        let text = TextClassifierConfig::default();
        TrainConfig {
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            epochs: self.epochs.unwrap_or(d.epochs),
            lr: self.lr.unwrap_or(d.lr),
            tau: self.tau.unwrap_or(d.tau),
            gamma: self.gamma.unwrap_or(d.gamma),
            scoring_batch_size: self.scoring_batch_size.unwrap_or(d.scoring_batch_size),
            augmentation: AugmentationConfig {
                sigma_weak: self.sigma_weak.unwrap_or(aug.sigma_weak),
                sigma_strong: self.sigma_strong.unwrap_or(aug.sigma_strong),
                dropout_strong: self.dropout_strong.unwrap_or(aug.dropout_strong),
            },
            seed: self.seed.seed,
            toggles,
            hidden: self.hidden.unwrap_or(d.hidden),
            feature_dim: self.feature_dim.unwrap_or(d.feature_dim),
            text_classifier: TextClassifierConfig {
                epochs: self.text_epochs.unwrap_or(text.epochs),
                lr: self.text_lr.unwrap_or(text.lr),
                seed: self.seed.seed,
            },
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Directory holding pseudo_labels.lbl.
    #[arg(long)]
    pseudo: Option<PathBuf>,
    /// Weight file written by `weights`.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Output directory for the checkpoint and report.
    #[arg(long)]
    out: PathBuf,
    /// Compute missing pseudo-labels and weights (pseudolabel, then weights).
    #[arg(long)]
    auto: bool,
    #[arg(long, value_enum, default_value_t = Variant::Full)]
    variant: Variant,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint directory.
    #[arg(long)]
    model: PathBuf,
    /// Labelled dataset directory.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    dir: PathBuf,
}

/// Runs one command with `argv[0]` as the program name; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{}", to_pretty(&out));
            0
        }
        Err(e) => {
            let body = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{body}");
            1
        }
    }
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize")
}

fn dispatch(cmd: Command) -> Result<Value> {
    match cmd {
        Command::GenSynth(a) => gen_synth(a),
        Command::Pseudolabel(a) => pseudolabel(a),
        Command::Weights(a) => weights(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Validate(a) => Ok(serde_json::to_value(validate_dataset_dir(&a.dir)?)?),
    }
}

fn gen_synth(a: GenSynthArgs) -> Result<Value> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        classes: a.classes.unwrap_or(d.classes),
        n_per_class: a.per_class.unwrap_or(d.n_per_class),
        dim_image: a.dim_image.unwrap_or(d.dim_image),
        dim_caption: a.dim_caption.unwrap_or(d.dim_caption),
        dim_clip: a.dim_clip.unwrap_or(d.dim_clip),
        shift_angle: a.shift_angle.unwrap_or(d.shift_angle),
        shift_offset: a.shift_offset.unwrap_or(d.shift_offset),
        noise_image: a.noise_image.unwrap_or(d.noise_image),
        noise_caption: a.noise_caption.unwrap_or(d.noise_caption),
        noise_clip: a.noise_clip.unwrap_or(d.noise_clip),
        rho: a.rho.unwrap_or(d.rho),
        seed: a.seed.seed,
    };
    let (source, target) = gen_synthetic(&cfg)?;
    let (sdir, tdir) = (a.out.join("source"), a.out.join("target"));
    save_dataset(&source, &sdir)?;
    save_dataset(&target, &tdir)?;
    Ok(json!({
        "config": cfg,
        "source": sdir,
        "target": tdir,
        "corrupted": target.corrupted_mask().map(|m| m.iter().filter(|&&c| c).count()),
    }))
}

fn pseudolabel(a: PseudolabelArgs) -> Result<Value> {
    let d = TextClassifierConfig::default();
    let cfg = TextClassifierConfig {
        epochs: a.text_epochs.unwrap_or(d.epochs),
        lr: a.text_lr.unwrap_or(d.lr),
        seed: a.seed.seed,
    };
    let source = load_dataset(&a.source)?;
    let target = load_dataset(&a.target)?;
    let fit = train_text_classifier(&source, &cfg)?;
    let pseudo = generate_pseudo_labels(&fit.classifier, target.unlabeled())?;
    save_pseudo_labels(&a.out, &pseudo)?;
    let accuracy = target.labels().map(|t| pseudo_label_accuracy(&pseudo.labels, t)).transpose()?;
    let report = json!({
        "config": cfg,
        "n": pseudo.labels.len(),
        "final_text_loss": fit.loss_history.last(),
        "pseudo_label_accuracy": accuracy,
        "labels_file": a.out.join(PSEUDO_LABELS_FILE),
    });
    write_json(&a.out.join("pseudolabel_report.json"), &report)?;
    Ok(report)
}

fn weights(a: WeightsArgs) -> Result<Value> {
    let d = TrainConfig::default();
    let gamma = a.gamma.unwrap_or(d.gamma);
    let batch = a.scoring_batch_size.unwrap_or(d.scoring_batch_size);
    let target = load_dataset(&a.target)?;
    let w = score_dataset(target.unlabeled(), batch.min(target.len()), gamma, a.seed.seed)?;
    std::fs::create_dir_all(&a.out).map_err(|e| TrustError::io(&a.out, e))?;
    save_weights(&a.out.join(WEIGHTS_FILE), &w)?;
    let hist = weight_histogram(&w, target.corrupted_mask())?;
    let report = json!({
        "config": {"gamma": gamma, "scoring_batch_size": batch, "seed": a.seed.seed},
        "histogram": hist,
        "weights_file": a.out.join(WEIGHTS_FILE),
    });
    write_json(&a.out.join(WEIGHTS_REPORT_FILE), &report)?;
    Ok(report)
}

fn train_cmd(a: TrainArgs) -> Result<Value> {
    let cfg = a.flags.resolve(a.variant.toggles());
    cfg.validate()?;
    let source = load_dataset(&a.source)?;
    let target = load_dataset(&a.target)?;
    let (pseudo, w) = match (&a.pseudo, &a.weights, a.auto) {
        (Some(p), Some(w), _) => (load_pseudo_labels(p)?, load_weights(w)?),
        (p, w, true) => {
            let (auto_p, auto_w) = prepare_supervision(&source, &target, &cfg)?;
            let pseudo = match p {
                Some(dir) => load_pseudo_labels(dir)?,
                None => auto_p,
            };
            let weights = match w {
                Some(file) => load_weights(file)?,
                None => auto_w,
            };
            (pseudo, weights)
        }
        _ => {
            return Err(TrustError::Config(
                "train needs --pseudo and --weights, or --auto to compute them".into(),
            ))
        }
    };
    let w = if cfg.toggles.use_uncertainty { w } else { ReliabilityWeights::ones(target.len()) };
    let (model, report) = train(&source, &target, &pseudo, &w, &cfg)?;
    model.save(&a.out.join(MODEL_DIR))?;
    write_json(&a.out.join(TRAIN_REPORT_FILE), &report)?;
    Ok(serde_json::to_value(&report)?)
}

fn eval(a: EvalArgs) -> Result<Value> {
    let model = VisionModel::load(&a.model)?;
    let data = load_dataset(&a.data)?;
    let accuracy = evaluate(&model, &data)?;
    Ok(json!({"model": a.model, "data": a.data, "n": data.len(), "accuracy": accuracy}))
}

fn ablate_cmd(a: AblateArgs) -> Result<Value> {
    let cfg = a.flags.resolve(LossToggles::FULL);
    let source = load_dataset(&a.source)?;
    let target = load_dataset(&a.target)?;
    let report = ablate(&source, &target, &cfg)?;
    if let Some(out) = &a.out {
        write_report(out, &report)?;
    }
    Ok(serde_json::to_value(&report)?)
}

fn write_report<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| TrustError::io(parent, e))?;
    }
    write_json(path, v)
}
