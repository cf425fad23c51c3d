//! `swflow` — train, evaluate, OoD-score and sample normalizing flows on 2-D
//! toy data.
//!
//! Every run is fully determined by its flags: rerunning a command with the
//! same flags produces byte-identical outputs. `train` writes a resolved
//! `manifest.txt` (line-oriented `key = value`) next to its checkpoint and
//! metrics CSV; the other commands derive every auxiliary seed from `--seed`
//! the same way the trainer does, so `eval` right after `train` reproduces
//! the final training report.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use swflow_core::checkpoint;
use swflow_core::datasets::{self, DatasetKind, DatasetSpec, Standardizer};
use swflow_core::fmt::fmt_f64;
use swflow_core::metrics::{
    eval_auroc, full_report, histogram, log_likelihoods, write_histogram_csv, write_scores_csv,
    MetricsReport, ReportMeta,
};
use swflow_core::objectives::{LossSpec, LossVariant};
use swflow_core::rng::{derive_seed, normal_matrix, stream, stream_rng, tag};
use swflow_core::sw::{DirectionSeed, SWConfig};
use swflow_core::train::{append_metrics_row, train, TrainConfig};

#[derive(Parser)]
#[command(name = "swflow", version, about = "Normalizing flows with hybrid likelihood / sliced-Wasserstein training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a flow and write checkpoint, metrics CSV and run manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint: NLL, SW, cumulant norms.
    Eval(EvalArgs),
    /// Score out-of-distribution sets by log-likelihood AUROC.
    Ood(OodArgs),
    /// Draw samples from a checkpoint into a CSV.
    Sample(SampleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Mle,
    Sw,
    HybridData,
    HybridLatent,
}

impl ObjectiveArg {
    fn variant(self) -> LossVariant {
        match self {
            ObjectiveArg::Mle => LossVariant::MleOnly,
            ObjectiveArg::Sw => LossVariant::SwOnly,
            ObjectiveArg::HybridData => LossVariant::HybridDataSpace,
            ObjectiveArg::HybridLatent => LossVariant::HybridLatentSpace,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DatasetArg {
    Circles,
    Moons,
    Blobs,
}

impl DatasetArg {
    fn kind(self) -> DatasetKind {
        match self {
            DatasetArg::Circles => DatasetKind::Circles,
            DatasetArg::Moons => DatasetKind::Moons,
            DatasetArg::Blobs => DatasetKind::Blobs,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training objective.
    #[arg(long, value_enum, default_value = "hybrid-latent")]
    objective: ObjectiveArg,
    /// Weight of the MLE term in hybrid objectives (must be ≥ 0).
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Training dataset.
    #[arg(long, value_enum)]
    dataset: DatasetArg,
    /// Seed controlling every random stream of the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of optimizer steps.
    #[arg(long, default_value_t = TrainConfig::default().steps)]
    steps: u64,
    /// Adam learning rate.
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
    /// Batch size (data batch and generated batch).
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch: usize,
    /// Projection count J of the training SW loss.
    #[arg(long = "sw-proj", default_value_t = SWConfig::default().projections)]
    sw_proj: usize,
    /// Transport exponent p (1 or 2).
    #[arg(long = "sw-p", default_value_t = 2)]
    sw_p: u32,
    /// Output directory for checkpoint.swnf, metrics.csv and manifest.txt.
    #[arg(long = "out-dir", default_value = "swflow-run")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long, default_value = "swflow-run/checkpoint.swnf")]
    checkpoint: PathBuf,
    /// Dataset the checkpoint was trained on.
    #[arg(long, value_enum)]
    dataset: DatasetArg,
    /// Seed of the training run (reproduces its held-out split and
    /// evaluation streams).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Projection count of the SW metric.
    #[arg(long = "sw-proj", default_value_t = 2_048)]
    sw_proj: usize,
    /// Where report.csv is written.
    #[arg(long = "out-dir", default_value = "swflow-eval")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct OodArgs {
    /// Checkpoint to score with.
    #[arg(long, default_value = "swflow-run/checkpoint.swnf")]
    checkpoint: PathBuf,
    /// In-distribution dataset (the training one).
    #[arg(long = "in-dataset", value_enum)]
    in_dataset: DatasetArg,
    /// Out-of-distribution dataset; repeatable.
    #[arg(long = "ood-dataset", value_enum, required = true)]
    ood_dataset: Vec<DatasetArg>,
    /// Seed of the training run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples scored per dataset.
    #[arg(long, default_value_t = 1_000)]
    n: usize,
    /// Where score CSVs, histogram.csv and auroc.csv are written.
    #[arg(long = "out-dir", default_value = "swflow-ood")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    /// Checkpoint to sample from.
    #[arg(long, default_value = "swflow-run/checkpoint.swnf")]
    checkpoint: PathBuf,
    /// Number of samples.
    #[arg(long, default_value_t = 1_000)]
    n: usize,
    /// Seed for the latent draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long, default_value = "samples.csv")]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ood(args) => cmd_ood(args),
        Command::Sample(args) => cmd_sample(args),
    };
    if let Err(err) = result {
        eprintln!("error: {:#}", err);
        std::process::exit(1);
    }
}

/// Training-set size shared by all commands that rebuild the training
/// distribution from a seed.
const TRAIN_SAMPLES: usize = 50_000;

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    if !(args.alpha >= 0.0 && args.alpha.is_finite()) {
        bail!("--alpha must be ≥ 0 and finite, got {}", args.alpha);
    }
    if !(args.sw_p == 1 || args.sw_p == 2) {
        bail!("--sw-p must be 1 or 2, got {}", args.sw_p);
    }
    let mut loss = LossSpec::new(args.objective.variant());
    loss.alpha = args.alpha;
    loss.sw = SWConfig {
        projections: args.sw_proj,
        exponent: args.sw_p,
        seed_policy: DirectionSeed::FreshPerCall,
    };
    let defaults = TrainConfig::default();
    Ok(TrainConfig {
        loss,
        learning_rate: args.lr,
        batch_size: args.batch,
        steps: args.steps,
        seed: args.seed,
        dataset: DatasetSpec::new(args.dataset.kind(), TRAIN_SAMPLES, args.seed),
        checkpoint_path: Some(args.out_dir.join("checkpoint.swnf")),
        metrics_path: Some(args.out_dir.join("metrics.csv")),
        verbose: true,
        ..defaults
    })
}

fn manifest_text(cfg: &TrainConfig, objective: &str, out_dir: &Path) -> String {
    let mut lines = vec![
        ("command", "train".to_string()),
        ("objective", objective.to_string()),
        ("alpha", fmt_f64(cfg.loss.alpha)),
        ("dataset", cfg.dataset.kind.name().to_string()),
        ("train_samples", cfg.dataset.n_samples.to_string()),
        ("noise_std", fmt_f64(cfg.dataset.noise_std)),
        ("standardize", cfg.dataset.standardize.to_string()),
        ("seed", cfg.seed.to_string()),
        ("steps", cfg.steps.to_string()),
        ("learning_rate", fmt_f64(cfg.learning_rate)),
        ("batch_size", cfg.batch_size.to_string()),
        ("sw_projections", cfg.loss.sw.projections.to_string()),
        ("sw_exponent", cfg.loss.sw.exponent.to_string()),
        (
            "hidden",
            cfg.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","),
        ),
        ("coupling_layers", cfg.n_coupling_layers.to_string()),
        ("eval_every", cfg.eval_every.to_string()),
        ("eval_samples", cfg.eval_samples.to_string()),
        ("eval_sw_projections", cfg.eval_sw_projections.to_string()),
        ("out_dir", out_dir.display().to_string()),
        ("checkpoint", "checkpoint.swnf".to_string()),
        ("metrics", "metrics.csv".to_string()),
    ];
    let mut text = String::new();
    for (k, v) in lines.drain(..) {
        text.push_str(k);
        text.push_str(" = ");
        text.push_str(&v);
        text.push('\n');
    }
    text
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = train_config(&args)?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;

    // Fresh metrics file so reruns are byte-identical.
    let metrics_path = cfg.metrics_path.clone().expect("set above");
    let _ = fs::remove_file(&metrics_path);

    let manifest_path = args.out_dir.join("manifest.txt");
    let manifest = manifest_text(&cfg, args.objective.variant().name(), &args.out_dir);
    fs::write(&manifest_path, &manifest)?;

    match train(&cfg) {
        Ok(outcome) => {
            fs::write(&manifest_path, format!("{}status = completed\n", manifest))?;
            let last = outcome.reports.last().expect("at least one report");
            println!("final: {}", last.csv_row());
            println!("checkpoint: {}", args.out_dir.join("checkpoint.swnf").display());
            println!("metrics:    {}", metrics_path.display());
            Ok(())
        }
        Err(err) => {
            fs::write(&manifest_path, format!("{}status = failed: {}\n", manifest, err))?;
            Err(err).context("training failed")
        }
    }
}

/// Rebuilds the training standardizer exactly as the trainer fit it.
fn training_standardizer(kind: DatasetKind, seed: u64) -> Result<Standardizer> {
    let spec = DatasetSpec::new(kind, TRAIN_SAMPLES, seed);
    let raw = datasets::generate_raw(&spec)?;
    Ok(Standardizer::fit(&raw))
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let model = checkpoint::load(&args.checkpoint)
        .with_context(|| format!("cannot load {}", args.checkpoint.display()))?;
    let defaults = TrainConfig::default();

    let kind = args.dataset.kind();
    let standardizer = training_standardizer(kind, args.seed)?;
    let eval_spec = DatasetSpec {
        n_samples: defaults.eval_samples,
        seed: derive_seed(args.seed, tag::EVAL_DATA),
        standardize: false,
        ..DatasetSpec::new(kind, TRAIN_SAMPLES, args.seed)
    };
    let eval_set = standardizer.transform(&datasets::generate_raw(&eval_spec)?);

    let sw_cfg = SWConfig {
        projections: args.sw_proj,
        exponent: 2,
        seed_policy: DirectionSeed::FreshPerCall,
    };
    let meta = ReportMeta {
        step: 0,
        seed: args.seed,
        dataset: kind.name().to_string(),
        train_loss: None,
    };
    let report = full_report(&model, &eval_set, &sw_cfg, args.seed, meta, None)?;

    fs::create_dir_all(&args.out_dir)?;
    let report_path = args.out_dir.join("report.csv");
    let _ = fs::remove_file(&report_path);
    append_metrics_row(&report_path, &report)?;

    print!("{}", report.text_report());
    println!("{}", MetricsReport::csv_header());
    println!("{}", report.csv_row());
    println!("report: {}", report_path.display());
    Ok(())
}

fn cmd_ood(args: OodArgs) -> Result<()> {
    if args.n == 0 {
        bail!("--n must be positive");
    }
    let model = checkpoint::load(&args.checkpoint)
        .with_context(|| format!("cannot load {}", args.checkpoint.display()))?;
    let in_kind = args.in_dataset.kind();
    let standardizer = training_standardizer(in_kind, args.seed)?;

    // Held-out in-distribution sample, standardized with training statistics.
    let in_spec = DatasetSpec {
        n_samples: args.n,
        seed: derive_seed(args.seed, tag::OOD_IN),
        standardize: false,
        ..DatasetSpec::new(in_kind, TRAIN_SAMPLES, args.seed)
    };
    let in_set = standardizer.transform(&datasets::generate_raw(&in_spec)?);
    let scores_in = log_likelihoods(&model, &in_set)?;

    fs::create_dir_all(&args.out_dir)?;
    write_scores_csv(&scores_in, &args.out_dir.join(format!("loglik_in_{}.csv", in_kind.name())))?;

    let mut series = vec![(format!("in_{}", in_kind.name()), scores_in.clone())];
    let mut auroc_rows = String::from("dataset,auroc\n");
    for (idx, ood) in args.ood_dataset.iter().enumerate() {
        let kind = ood.kind();
        let spec = DatasetSpec {
            n_samples: args.n,
            seed: derive_seed(args.seed, tag::OOD_IN ^ (idx as u64 + 1)),
            standardize: false,
            ..DatasetSpec::new(kind, TRAIN_SAMPLES, args.seed)
        };
        let ood_set = standardizer.transform(&datasets::generate_raw(&spec)?);
        let scores_out = log_likelihoods(&model, &ood_set)?;
        let auroc = eval_auroc(&scores_in, &scores_out)?;
        println!("auroc {} = {:.4}", kind.name(), auroc);
        auroc_rows.push_str(&format!("{},{}\n", kind.name(), fmt_f64(auroc)));
        write_scores_csv(&scores_out, &args.out_dir.join(format!("loglik_{}.csv", kind.name())))?;
        series.push((kind.name().to_string(), scores_out));
    }
    fs::write(args.out_dir.join("auroc.csv"), auroc_rows)?;

    let hist = histogram(&series, 50)?;
    write_histogram_csv(&hist, &args.out_dir.join("histogram.csv"))?;
    println!("outputs: {}", args.out_dir.display());
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> Result<()> {
    if args.n == 0 {
        bail!("--n must be positive");
    }
    let model = checkpoint::load(&args.checkpoint)
        .with_context(|| format!("cannot load {}", args.checkpoint.display()))?;
    let z = normal_matrix(&mut stream_rng(args.seed, stream::SAMPLE), args.n, model.dim());
    let x = model.inverse(&z)?;
    datasets::write_csv(&x, &args.out)?;
    println!("wrote {} samples to {}", args.n, args.out.display());
    Ok(())
}
