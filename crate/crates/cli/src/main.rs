use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndr_core::ablation::{run_ablation, Arm};
use ndr_core::checkpoint::Checkpoint;
use ndr_core::config::RunConfig;
use ndr_core::export::inspect_ndr;
use ndr_core::metrics::{affinity_separation, evaluate};
use ndr_core::synth::{load_dataset, make_dataset, make_samples, Image, Sample, MANIFEST_FILE};
use ndr_core::train::{init_run, load_model, Trainer, CHECKPOINT_FILE};
use ndr_core::{Execution, NdrError};

#[derive(Parser)]
#[command(name = "ndr", version, about = "All-in-one image restoration with a learnable degradation dictionary")]
struct Cli {
    /// Print failures as a JSON object on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    /// Run without the thread pool.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired dataset.
    Synth(SynthArgs),
    /// Train both networks jointly.
    Train(TrainArgs),
    /// Score restorations (or the degraded inputs) against clean images.
    Eval(EvalArgs),
    /// Restore a single image.
    Infer(InferArgs),
    /// Dump the dictionary and per-scale query tensors for one image.
    InspectNdr(InspectArgs),
    /// Train and score module and loss-weight ablations.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of pairs.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory; synthesized in memory from the config if absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Alternate the two loss terms every N steps.
    #[arg(long)]
    alt_steps: Option<u64>,
    /// Continue from this checkpoint (its stored config wins over --config).
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Without a checkpoint the degraded inputs themselves are scored.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Directory for metrics.csv / metrics.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also report dictionary-affinity separation between kinds.
    #[arg(long)]
    affinity: bool,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Edge-pad inputs whose size the network cannot take, then crop back.
    #[arg(long)]
    pad: bool,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    pad: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated arms: full, no_dq, no_di, no_cp, lambda, lambda=<w>.
    #[arg(long, default_value = "full,no_dq,no_di,no_cp,lambda")]
    variants: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = classify(&e);
            if cli.json_errors {
                let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
                let msg = serde_json::json!({ "error": kind, "message": chain.join(": ") });
                eprintln!("{msg}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(code)
        }
    }
}

fn classify(e: &anyhow::Error) -> (&'static str, u8) {
    match e.chain().find_map(|c| c.downcast_ref::<NdrError>()) {
        Some(NdrError::Config(_)) | Some(NdrError::Json(_)) => ("config", 2),
        Some(NdrError::IncompatibleCheckpoint(_)) => ("checkpoint", 3),
        Some(NdrError::NonFiniteLoss { .. }) | Some(NdrError::NonFiniteGradient { .. }) | Some(NdrError::NonFinite { .. }) => {
            ("non_finite", 4)
        }
        Some(NdrError::Io { .. }) | Some(NdrError::Image { .. }) => ("io", 5),
        Some(_) => ("invalid", 1),
        None => ("error", 1),
    }
}

fn run(command: Command, exec: Execution) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a, exec),
        Command::Train(a) => train(a, exec),
        Command::Eval(a) => eval(a, exec),
        Command::Infer(a) => infer(a),
        Command::InspectNdr(a) => inspect(a),
        Command::Ablate(a) => ablate(a, exec),
    }
}

fn load_config(path: Option<&Path>) -> Result<(RunConfig, Option<String>)> {
    match path {
        Some(p) => {
            let (cfg, text) = RunConfig::load(p)?;
            Ok((cfg, Some(text)))
        }
        None => Ok((RunConfig::default(), None)),
    }
}

fn synth(a: SynthArgs, exec: Execution) -> Result<()> {
    let (cfg, _) = load_config(a.config.as_deref())?;
    let mut ds = cfg.dataset;
    if let Some(s) = a.seed {
        ds.seed = s;
    }
    if let Some(n) = a.n {
        ds.n = n;
    }
    if let Some(s) = a.size {
        ds.size = s;
    }
    let entries = make_dataset(&ds, &a.out, exec)?;
    println!("wrote {} pairs to {}", entries.len(), a.out.display());
    Ok(())
}

fn dataset_for(cfg: &RunConfig, dir: Option<&Path>, exec: Execution) -> Result<Vec<Sample>> {
    let dir = dir.unwrap_or(&cfg.paths.dataset);
    if dir.join(MANIFEST_FILE).exists() {
        Ok(load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))?)
    } else {
        eprintln!("no dataset at {}, synthesizing {} pairs in memory", dir.display(), cfg.dataset.n);
        Ok(make_samples(&cfg.dataset, exec)?)
    }
}

fn train(a: TrainArgs, exec: Execution) -> Result<()> {
    let (mut trainer, base_cfg) = if let Some(ckpt_path) = &a.resume {
        let ckpt = Checkpoint::load(ckpt_path)?;
        let (cfg, _) = load_model(&ckpt)?;
        let samples = dataset_for(&cfg, a.data.as_deref(), exec)?;
        let t = Trainer::from_checkpoint(&ckpt, &samples, exec)?;
        (t, cfg)
    } else {
        let (mut cfg, text) = load_config(a.config.as_deref())?;
        if let Some(s) = a.seed {
            cfg.train.seed = s;
        }
        if let Some(l) = a.lambda {
            cfg.train.lambda = l;
        }
        if let Some(k) = a.alt_steps {
            cfg.train.alt_steps = k;
        }
        cfg.validate()?;
        let samples = dataset_for(&cfg, a.data.as_deref(), exec)?;
        let mut t = Trainer::new(cfg.clone(), &samples, exec)?;
        t.config_source = text;
        (t, cfg)
    };
    if let Some(s) = a.steps {
        trainer.config.train.steps = s;
    }
    let out = a.out.unwrap_or_else(|| base_cfg.paths.run.clone());
    let until = trainer.config.train.steps;
    if trainer.step == 0 && until == 0 {
        init_run(&trainer, &out)?;
        println!("wrote initial checkpoint to {}", out.join(CHECKPOINT_FILE).display());
        return Ok(());
    }
    if trainer.step >= until {
        bail!("checkpoint is already at step {} (target {until}); pass a larger --steps", trainer.step);
    }
    let outcome = trainer.run(until, Some(&out))?;
    if let Some(last) = outcome.history.last() {
        println!(
            "step {} loss {:.6} (x {:.6}, y {:.6})",
            last.step, last.losses.total, last.losses.x_recon, last.losses.y_recon
        );
    }
    if let Some((step, report)) = outcome.evals.last() {
        println!("held-out at step {step}: psnr {:.3} dB, ssim {:.4}", report.mean_psnr, report.mean_ssim);
    }
    println!("checkpoint: {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}

fn eval(a: EvalArgs, exec: Execution) -> Result<()> {
    let samples = load_dataset(&a.data).with_context(|| format!("loading dataset {}", a.data.display()))?;
    let net = match &a.ckpt {
        Some(p) => Some(load_model(&Checkpoint::load(p)?)?.1),
        None => None,
    };
    let report = evaluate(net.as_ref(), &samples, exec)?;
    for (kind, s) in &report.by_kind {
        println!("{kind:<10} n={:<4} psnr {:.3} dB  ssim {:.4}", s.count, s.psnr, s.ssim);
    }
    println!("{:<10} n={:<4} psnr {:.3} dB  ssim {:.4}", "mean", report.samples.len(), report.mean_psnr, report.mean_ssim);
    if let Some(out) = &a.out {
        report.write(out)?;
    }
    if a.affinity {
        let net = net.as_ref().context("--affinity needs --ckpt")?;
        let rep = affinity_separation(net, &samples, exec)?;
        let s = rep.separation;
        println!("affinity d_intra {:.6e} d_inter {:.6e} rho {:.4}{}", s.d_intra, s.d_inter, s.rho, if s.capped { " (capped)" } else { "" });
        if let Some(out) = &a.out {
            std::fs::write(out.join("affinity.json"), serde_json::to_string_pretty(&rep)? + "\n")?;
        }
    }
    Ok(())
}

/// Pads to a size the network accepts when `pad` is set.
fn prepare(net: &ndr_core::model::NdrNetworks, img: &Image, pad: bool) -> Result<Image> {
    let cfg = &net.config;
    if cfg.check_input(img.height(), img.width()).is_ok() {
        return Ok(img.clone());
    }
    if !pad {
        cfg.check_input(img.height(), img.width()).context("pass --pad to edge-pad the input")?;
    }
    let m = cfg.size_multiple();
    let min = (cfg.rank + 1) * m;
    let fit = |n: usize| n.max(min).div_ceil(m) * m;
    Ok(img.pad_to(fit(img.height()), fit(img.width())))
}

fn infer(a: InferArgs) -> Result<()> {
    let (_, net) = load_model(&Checkpoint::load(&a.ckpt)?)?;
    let img = Image::load(&a.input)?;
    let padded = prepare(&net, &img, a.pad)?;
    let restored = net.restore_image(&padded)?.crop(0, 0, img.height(), img.width())?;
    restored.save(&a.output)?;
    println!("wrote {}", a.output.display());
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<()> {
    let (_, net) = load_model(&Checkpoint::load(&a.ckpt)?)?;
    let img = prepare(&net, &Image::load(&a.input)?, a.pad)?;
    let items = inspect_ndr(&net, &img, &a.out)?;
    for t in &items {
        println!("{} {:?}", t.name, t.shape);
    }
    Ok(())
}

fn ablate(a: AblateArgs, exec: Execution) -> Result<()> {
    let arms = Arm::parse_list(&a.variants)?;
    let (mut cfg, _) = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(s) = a.steps {
        cfg.train.steps = s;
    }
    let samples = dataset_for(&cfg, a.data.as_deref(), exec)?;
    let report = run_ablation(&cfg, &samples, &arms, exec)?;
    let out = a.out.unwrap_or_else(|| cfg.paths.run.join("ablation"));
    report.write(&out)?;
    print!("{}", report.to_csv());
    Ok(())
}
