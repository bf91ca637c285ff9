use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use deepads_core::data::netpbm::{read_pgm, read_ppm, write_pgm, GrayImage};
use deepads_core::data::{
    gen_synthetic, load_dataset, resize_image, write_dataset, MASK_THRESHOLD,
};
use deepads_core::metrics::{
    auc, binarize, compute_metrics, confusion, default_thresholds, roc_csv, roc_svg, roc_sweep,
};
use deepads_core::optim::train;
use deepads_core::{
    write_atomic, AdamState, ConfusionCounts, DeepAdsModel, Error, Tensor, TrainConfig,
};

/// Encoder-decoder segmentation of advert candidate regions.
#[derive(Parser)]
#[command(name = "deepads", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a dataset directory and write a checkpoint.
    Train(TrainArgs),
    /// Write the heat-map and thresholded mask for one image.
    Infer(InferArgs),
    /// Print segmentation metrics for a directory of heat-maps.
    Eval(EvalArgs),
    /// Sweep thresholds, write the ROC curve and print its AUC.
    Roc(RocArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    epochs: usize,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pos_weight: f64,
    /// Input size as HxW.
    #[arg(long, default_value = "200x200", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    heatmap: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of heat-map PGMs.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of mask PGMs, or a dataset root containing `masks/`.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct RocArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value = "200x200", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let dim = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((dim(h)?, dim(w)?))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        pos_weight: a.pos_weight,
        shuffle: true,
    };
    cfg.validate()?;
    let mut model = DeepAdsModel::init(a.seed, a.size)?;
    let dataset = load_dataset(&a.data, a.size)?;
    if !dataset.unmatched.is_empty() {
        eprintln!(
            "warning: skipping unpaired stems: {}",
            dataset.unmatched.join(", ")
        );
    }
    let mut state = AdamState::for_model(&model).with_lr(a.lr);
    train(
        &mut model,
        &dataset.samples,
        &cfg,
        &mut state,
        |epoch, loss| {
            println!("epoch,{epoch},loss,{loss}");
        },
    )?;
    model.save(&a.out)?;
    Ok(())
}

fn cmd_infer(a: InferArgs) -> Result<()> {
    let model = DeepAdsModel::load(&a.ckpt)?;
    let image = read_ppm(&a.input)?.to_tensor();
    let heat = model.predict(&resize_image(&image, model.input_hw())?)?;
    write_pgm(&a.heatmap, &GrayImage::from_unit_tensor(&heat)?)?;
    write_pgm(
        &a.mask,
        &GrayImage::from_unit_tensor(&binarize(&heat, a.threshold))?,
    )?;
    Ok(())
}

/// `<stem>.pgm` files directly under `dir`, keyed by stem.
fn pgm_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "pgm") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_owned(), path.clone());
            }
        }
    }
    Ok(out)
}

/// Heat-maps scaled to [0, 1] paired with binary truth masks, in stem order.
fn load_pairs(pred: &Path, truth: &Path) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    let masks_dir = truth.join("masks");
    let truth_dir = if masks_dir.is_dir() {
        masks_dir.as_path()
    } else {
        truth
    };
    let preds = pgm_stems(pred)?;
    let truths = pgm_stems(truth_dir)?;
    let (mut heats, mut masks) = (Vec::new(), Vec::new());
    for (stem, path) in &preds {
        let Some(tpath) = truths.get(stem) else {
            continue;
        };
        let heat = read_pgm(path)?;
        let mask = read_pgm(tpath)?;
        if (heat.width, heat.height) != (mask.width, mask.height) {
            bail!(
                "{stem}: prediction is {}x{} but truth is {}x{}",
                heat.height,
                heat.width,
                mask.height,
                mask.width
            );
        }
        heats.push(heat.to_tensor());
        masks.push(mask.to_mask(MASK_THRESHOLD));
    }
    if heats.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no stems shared by {} and {}",
            pred.display(),
            truth_dir.display()
        ))
        .into());
    }
    Ok((heats, masks))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (heats, masks) = load_pairs(&a.pred, &a.truth)?;
    let mut total = ConfusionCounts::default();
    for (h, m) in heats.iter().zip(&masks) {
        total.merge(&confusion(&binarize(h, a.threshold), m)?);
    }
    print!("{}", compute_metrics(&total)?.to_csv());
    Ok(())
}

fn cmd_roc(a: RocArgs) -> Result<()> {
    let (heats, masks) = load_pairs(&a.pred, &a.truth)?;
    let points = roc_sweep(&heats, &masks, &default_thresholds())?;
    write_atomic(&a.out, roc_csv(&points).as_bytes())?;
    if let Some(svg) = &a.svg {
        write_atomic(svg, roc_svg(&points).as_bytes())?;
    }
    println!("auc,{:.6}", auc(&points)?);
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    write_dataset(&a.out, &gen_synthetic(a.count, a.size, a.seed)?)?;
    Ok(())
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Train(a) => cmd_train(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Roc(a) => cmd_roc(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
