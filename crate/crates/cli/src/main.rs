//! Command line driver for the transfer-learning pipeline.
//!
//! Subcommands mirror the pipeline stages: `gen` writes dataset splits,
//! `pretrain` fits a source surrogate, `transfer` adapts it to a target
//! domain by one of the three methods, `eval` scores a checkpoint, and
//! `report` aggregates stored runs into CSV tables or SVG panels.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use pott_core::experiment::{
    adapt, build_model, content_hash, panels_for, persist_run, pretrain_base, Method, Provenance,
    ResultRecord, SingleRun, TransferConfig,
};
use pott_core::io;
use pott_core::model::train_supervised;
use pott_core::pde::datagen::{generate, GenSpec};

#[derive(Parser)]
#[command(name = "pott", version, about = "Physics-preserving transport for operator transfer learning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate train/val/test splits for one equation subdomain
    Gen {
        /// JSON generation spec (equation, subdomain, sizes, seed)
        #[arg(long)]
        spec: PathBuf,
        /// Output directory; gets train/, val/, test/ subdirectories
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a surrogate from scratch on a dataset directory
    Pretrain {
        /// Dataset directory produced by gen
        #[arg(long)]
        data: PathBuf,
        /// Architecture tag: fno1d or deeponet
        #[arg(long)]
        model: String,
        /// Checkpoint file to write
        #[arg(long)]
        out: PathBuf,
        /// Training epochs
        #[arg(long, default_value_t = 40)]
        epochs: usize,
        /// Initialization and batching seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Adapt a pretrained checkpoint to a target dataset
    Transfer {
        /// Adaptation method: pott, finetune, or srctgt
        #[arg(long)]
        method: String,
        /// Source dataset directory
        #[arg(long)]
        src: PathBuf,
        /// Target dataset directory
        #[arg(long)]
        tgt: PathBuf,
        /// Pretrained source checkpoint
        #[arg(long)]
        ckpt: PathBuf,
        /// JSON transfer configuration (transport and training knobs)
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the run artifacts
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a dataset and print the rMSE
    Eval {
        /// Checkpoint file
        #[arg(long)]
        ckpt: PathBuf,
        /// Dataset directory (a split root uses its test split)
        #[arg(long)]
        data: PathBuf,
    },
    /// Aggregate stored runs into a CSV table or SVG panels
    Report {
        /// Directory containing run artifact directories
        #[arg(long)]
        runs: PathBuf,
        /// Output file; .csv or .svg decides the format
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_provenance(dir: &Path) -> Result<()> {
    let stamp = serde_json::to_string_pretty(&Provenance::current())?;
    fs::write(dir.join("provenance.json"), stamp)?;
    Ok(())
}

fn cmd_gen(spec_path: &Path, out: &Path) -> Result<()> {
    let raw = fs::read_to_string(spec_path)
        .with_context(|| format!("reading spec {}", spec_path.display()))?;
    let spec: GenSpec = serde_json::from_str(&raw)
        .with_context(|| format!("parsing spec {}", spec_path.display()))?;
    let splits = generate(&spec)?;
    fs::create_dir_all(out)?;
    io::save_dataset(&out.join("train"), &splits.train)?;
    io::save_dataset(&out.join("val"), &splits.val)?;
    io::save_dataset(&out.join("test"), &splits.test)?;
    fs::write(
        out.join("gen_spec.json"),
        serde_json::to_string_pretty(&spec.resolve())?,
    )?;
    write_provenance(out)?;
    println!(
        "wrote {} train / {} val / {} test pairs to {}",
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        out.display()
    );
    Ok(())
}

fn cmd_pretrain(data: &Path, tag: &str, out: &Path, epochs: usize, seed: u64) -> Result<()> {
    let splits = io::load_splits(data)?;
    let mut model = build_model(tag, splits.train.k_domain(), splits.train.u_domain(), seed)?;
    model.fit_standardizer(&splits.train);
    let mut cfg = pretrain_base(seed);
    cfg.epochs = epochs;
    cfg.batch = cfg.batch.min(splits.train.len());
    let report = train_supervised(&mut model, &splits.train, &splits.val, &cfg, None)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    io::save_model(out, &model)?;
    println!(
        "pretrained {} for {} epochs, best val rMSE {:.6} at epoch {}",
        tag, epochs, report.best_val, report.best_epoch
    );
    Ok(())
}

fn cmd_transfer(
    method_tag: &str,
    src: &Path,
    tgt: &Path,
    ckpt: &Path,
    config: &Path,
    out: &Path,
) -> Result<()> {
    let method: Method = method_tag.parse().map_err(anyhow::Error::msg)?;
    let raw = fs::read_to_string(config)
        .with_context(|| format!("reading config {}", config.display()))?;
    let knobs: TransferConfig =
        serde_json::from_str(&raw).with_context(|| format!("parsing config {}", config.display()))?;
    knobs.pott.validate()?;
    let g_src = io::load_model(ckpt)?;
    let src_splits = io::load_splits(src)?;
    let tgt_splits = io::load_splits(tgt)?;

    let start = std::time::Instant::now();
    let outcome = adapt(
        method,
        &g_src,
        &src_splits.train,
        &tgt_splits.train,
        &tgt_splits.val,
        &knobs.pott,
        &knobs.transfer,
        knobs.seed,
    )?;
    let rmse = outcome.model.dataset_rmse(&tgt_splits.test);
    let panels = panels_for(&outcome.model, &tgt_splits.test);
    let record = ResultRecord {
        config_hash: content_hash(raw.as_bytes()),
        task: format!(
            "{} {}->{}",
            tgt_splits.train.family, src_splits.train.domain_id, tgt_splits.train.domain_id
        ),
        method,
        n_target: tgt_splits.train.len(),
        seed: knobs.seed,
        rmse,
        pretrain_val: Vec::new(),
        transfer_loss: outcome.report.loss_trace,
        transfer_val: outcome.report.val_trace,
        dual_objective: outcome.dual_objective,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    record.check()?;
    let run = SingleRun {
        record,
        model: outcome.model,
        panels,
        pushforward: outcome.pushforward,
    };
    persist_run(out, &run)?;
    fs::write(out.join("transfer_config.json"), raw)?;
    write_provenance(out)?;
    println!(
        "{} transfer done, target test rMSE {:.6}, artifacts in {}",
        method.id(),
        run.record.rmse,
        out.display()
    );
    Ok(())
}

fn cmd_eval(ckpt: &Path, data: &Path) -> Result<()> {
    let model = io::load_model(ckpt)?;
    let dataset = io::load_dataset(&io::dataset_root_split(data, "test"))?;
    println!("{:.6}", model.dataset_rmse(&dataset));
    Ok(())
}

fn cmd_report(runs: &Path, out: &Path) -> Result<()> {
    let ext = out
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let body = match ext.as_deref() {
        Some("csv") => pott_core::experiment::csv_report(runs)?,
        Some("svg") => pott_core::experiment::svg_report(runs)?,
        _ => bail!(
            "cannot tell the report format from {}; use a .csv or .svg output path",
            out.display()
        ),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, &body)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.cmd {
        Cmd::Gen { spec, out } => cmd_gen(spec, out),
        Cmd::Pretrain {
            data,
            model,
            out,
            epochs,
            seed,
        } => cmd_pretrain(data, model, out, *epochs, *seed),
        Cmd::Transfer {
            method,
            src,
            tgt,
            ckpt,
            config,
            out,
        } => cmd_transfer(method, src, tgt, ckpt, config, out),
        Cmd::Eval { ckpt, data } => cmd_eval(ckpt, data),
        Cmd::Report { runs, out } => cmd_report(runs, out),
    }
}
