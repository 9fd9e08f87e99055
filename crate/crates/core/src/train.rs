//! Bidirectional training: the restoration network maps `x -> y_hat` while
//! the degradation network maps `y -> x'` using the restorer's degradation
//! maps, and one optimizer steps on `||x - x'|| + lambda * ||y - y_hat||`.

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{NdrError, Result};
use crate::exec::Execution;
use crate::graph::Graph;
use crate::metrics::{evaluate, MetricReport};
use crate::model::NdrNetworks;
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::synth::dataset::splitmix64;
use crate::synth::{DegradationKind, Image, Sample};

pub const METRICS_HEADER: &str = "step,loss_total,loss_xrecon,loss_yrecon,psnr_eval,ssim_eval";
pub const CHECKPOINT_FILE: &str = "checkpoint.ndrc";
pub const CRASH_FILE: &str = "crash.ndrc";
pub const METRICS_FILE: &str = "metrics.csv";

/// Which loss terms drive an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    Joint,
    /// Only `||x - x'||`.
    DegradeOnly,
    /// Only `lambda * ||y - y_hat||`.
    RestoreOnly,
}

/// Loss values of a single sample or a batch mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub x_recon: f64,
    pub y_recon: f64,
    pub total: f64,
}

/// One training pair: degraded `x` and clean `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub x: Image,
    pub y: Image,
}

/// Loss and parameter gradients for one pair.
pub fn sample_gradients(net: &NdrNetworks, pair: &Pair, lambda: f64, mode: StepMode) -> Result<(Losses, Vec<Vec<f64>>)> {
    let mut g = Graph::new();
    let p = net.params.bind(&mut g)?;
    let x = g.constant(&pair.x.to_tensor())?;
    let y = g.constant(&pair.y.to_tensor())?;
    let out = net.restore.forward(&mut g, &p, x)?;
    let u_list: Vec<_> = out.scales.iter().map(|s| s.u).collect();
    let x_hat = net.degrade.forward(&mut g, &p, y, &u_list)?;
    let lx = g.mse(x, x_hat)?;
    let ly = g.mse(y, out.restored)?;
    let losses = Losses { x_recon: g.item(lx), y_recon: g.item(ly), total: g.item(lx) + lambda * g.item(ly) };
    let objective = match mode {
        StepMode::Joint => {
            let wy = g.scale(ly, lambda)?;
            g.add(lx, wy)?
        }
        StepMode::DegradeOnly => lx,
        StepMode::RestoreOnly => g.scale(ly, lambda)?,
    };
    g.backward(objective)?;
    Ok((losses, net.params.collect_grads(&g, &p)))
}

/// Batch-mean losses and gradients. Samples run through `exec`; the
/// reduction is always in batch order.
pub fn batch_gradients(
    net: &NdrNetworks,
    batch: &[Pair],
    lambda: f64,
    mode: StepMode,
    exec: Execution,
) -> Result<(Losses, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(NdrError::Invalid("empty batch".into()));
    }
    let results = exec.map(batch, |pair| sample_gradients(net, pair, lambda, mode));
    let mut mean = Losses { x_recon: 0.0, y_recon: 0.0, total: 0.0 };
    let mut grads: Option<Vec<Vec<f64>>> = None;
    for r in results {
        let (l, gs) = r?;
        mean.x_recon += l.x_recon;
        mean.y_recon += l.y_recon;
        mean.total += l.total;
        match &mut grads {
            None => grads = Some(gs),
            Some(acc) => acc.iter_mut().zip(&gs).for_each(|(a, b)| a.iter_mut().zip(b).for_each(|(a, b)| *a += b)),
        }
    }
    let n = batch.len() as f64;
    mean.x_recon /= n;
    mean.y_recon /= n;
    mean.total /= n;
    let mut grads = grads.expect("non-empty batch");
    grads.iter_mut().flatten().for_each(|v| *v /= n);
    Ok((mean, grads))
}

/// Computes batch gradients and applies one Adam update. On a non-finite
/// loss or gradient nothing is modified.
#[allow(clippy::too_many_arguments)]
pub fn bidirectional_step(
    net: &mut NdrNetworks,
    adam: &mut AdamState,
    adam_cfg: &AdamConfig,
    batch: &[Pair],
    lambda: f64,
    mode: StepMode,
    exec: Execution,
) -> Result<Losses> {
    let step = adam.step + 1;
    let (losses, grads) = batch_gradients(net, batch, lambda, mode, exec).map_err(|e| match e {
        NdrError::NonFinite { .. } => NdrError::NonFiniteLoss { step, x_recon: f64::NAN, y_recon: f64::NAN },
        other => other,
    })?;
    if !losses.total.is_finite() {
        return Err(NdrError::NonFiniteLoss { step, x_recon: losses.x_recon, y_recon: losses.y_recon });
    }
    adam_step(&mut net.params, &grads, adam, adam_cfg)?;
    Ok(losses)
}

/// Splits samples into training and held-out sets. For each kind the first
/// `per_kind` samples by id are held out, but never more than half of them.
pub fn split_held_out(samples: &[Sample], per_kind: usize) -> (Vec<Sample>, Vec<Sample>) {
    let mut sorted: Vec<&Sample> = samples.iter().collect();
    sorted.sort_by_key(|s| s.id);
    let mut totals = std::collections::BTreeMap::<DegradationKind, usize>::new();
    for s in &sorted {
        *totals.entry(s.kind()).or_default() += 1;
    }
    let mut taken = std::collections::BTreeMap::<DegradationKind, usize>::new();
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for s in sorted {
        let t = taken.entry(s.kind()).or_default();
        if *t < per_kind.min(totals[&s.kind()] / 2) {
            *t += 1;
            held.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    (train, held)
}

/// Exponential moving averages of the logged losses.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunningAverages {
    pub x_recon: f64,
    pub y_recon: f64,
    pub total: f64,
    pub count: u64,
}

impl RunningAverages {
    const DECAY: f64 = 0.98;

    pub fn update(&mut self, l: &Losses) {
        if self.count == 0 {
            (self.x_recon, self.y_recon, self.total) = (l.x_recon, l.y_recon, l.total);
        } else {
            let d = Self::DECAY;
            self.x_recon = d * self.x_recon + (1.0 - d) * l.x_recon;
            self.y_recon = d * self.y_recon + (1.0 - d) * l.y_recon;
            self.total = d * self.total + (1.0 - d) * l.total;
        }
        self.count += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub losses: Losses,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOutcome {
    pub history: Vec<StepRecord>,
    pub evals: Vec<(u64, MetricReport)>,
}

/// Training state plus the data it iterates over.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: RunConfig,
    /// Raw text of the config file, echoed into checkpoints when known.
    pub config_source: Option<String>,
    pub net: NdrNetworks,
    pub adam: AdamState,
    pub step: u64,
    pub averages: RunningAverages,
    pub train: Vec<Sample>,
    pub held_out: Vec<Sample>,
    pub exec: Execution,
}

impl Trainer {
    pub fn new(config: RunConfig, samples: &[Sample], exec: Execution) -> Result<Self> {
        config.validate()?;
        let net = NdrNetworks::new(config.model.clone(), config.train.seed)?;
        let adam = AdamState::new(&net.params);
        Self::assemble(config, net, adam, 0, RunningAverages::default(), samples, exec)
    }

    fn assemble(
        config: RunConfig,
        net: NdrNetworks,
        adam: AdamState,
        step: u64,
        averages: RunningAverages,
        samples: &[Sample],
        exec: Execution,
    ) -> Result<Self> {
        let (train, held_out) = split_held_out(samples, config.train.eval_per_kind);
        if train.is_empty() {
            return Err(NdrError::Invalid("no training samples".into()));
        }
        let crop = config.train.crop_size;
        if let Some(s) = train.iter().find(|s| s.degraded.height() < crop || s.degraded.width() < crop) {
            return Err(NdrError::Invalid(format!("sample {} is smaller than crop_size {crop}", s.id)));
        }
        Ok(Self { config, config_source: None, net, adam, step, averages, train, held_out, exec })
    }

    pub fn mode_at(&self, step: u64) -> StepMode {
        match self.config.train.alt_steps {
            0 => StepMode::Joint,
            k if (step / k) % 2 == 0 => StepMode::DegradeOnly,
            _ => StepMode::RestoreOnly,
        }
    }

    /// Training pairs for the step with 0-based index `step`. Batches walk a
    /// per-epoch permutation; everything derives from `(seed, step)`.
    pub fn batch_at(&self, step: u64) -> Result<Vec<Pair>> {
        let t = &self.config.train;
        let n = self.train.len() as u64;
        let mut perm_epoch = u64::MAX;
        let mut perm: Vec<usize> = Vec::new();
        let mut out = Vec::with_capacity(t.batch_size);
        for j in 0..t.batch_size as u64 {
            let pos = step * t.batch_size as u64 + j;
            let epoch = pos / n;
            if epoch != perm_epoch {
                perm = (0..self.train.len()).collect();
                perm.shuffle(&mut ChaCha8Rng::seed_from_u64(splitmix64(t.seed ^ splitmix64(epoch.wrapping_add(1)))));
                perm_epoch = epoch;
            }
            let s = &self.train[perm[(pos % n) as usize]];
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(t.seed ^ 0x5eed_c40b) ^ splitmix64(pos));
            let (h, w) = s.degraded.dims();
            let y0 = rng.random_range(0..=h - t.crop_size);
            let x0 = rng.random_range(0..=w - t.crop_size);
            out.push(Pair {
                x: s.degraded.crop(y0, x0, t.crop_size, t.crop_size)?,
                y: s.clean.crop(y0, x0, t.crop_size, t.crop_size)?,
            });
        }
        Ok(out)
    }

    /// Runs one optimizer step and advances the step counter.
    pub fn step_once(&mut self) -> Result<StepRecord> {
        let batch = self.batch_at(self.step)?;
        let mode = self.mode_at(self.step);
        let adam_cfg = self.config.train.adam();
        let losses =
            bidirectional_step(&mut self.net, &mut self.adam, &adam_cfg, &batch, self.config.train.lambda, mode, self.exec)
                .map_err(|e| match e {
                    NdrError::NonFiniteLoss { x_recon, y_recon, .. } => {
                        NdrError::NonFiniteLoss { step: self.step + 1, x_recon, y_recon }
                    }
                    other => other,
                })?;
        self.step += 1;
        self.averages.update(&losses);
        Ok(StepRecord { step: self.step, losses })
    }

    pub fn evaluate_held_out(&self) -> Result<MetricReport> {
        evaluate(Some(&self.net), &self.held_out, self.exec)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut meta = json!({
            "step": self.step,
            "adam_step": self.adam.step,
            "config": serde_json::to_value(&self.config)?,
            "averages": serde_json::to_value(self.averages)?,
            "params": {
                "restore": self.net.restore_params(),
                "degrade": self.net.degrade_params(),
                "ndr": self.net.ndr_params(),
            },
        });
        if let Some(src) = &self.config_source {
            meta["config_source"] = json!(src);
        }
        let mut ckpt = Checkpoint::new(meta);
        for id in self.net.params.ids() {
            ckpt.push(self.net.params.name(id), self.net.params.tensors()[id.index()].clone());
        }
        for (prefix, moments) in [("adam.m/", &self.adam.m), ("adam.v/", &self.adam.v)] {
            for (id, m) in self.net.params.ids().zip(moments) {
                let shape = self.net.params.tensors()[id.index()].shape();
                ckpt.push(format!("{prefix}{}", self.net.params.name(id)), crate::tensor::Tensor::new(shape, m.clone())?);
            }
        }
        Ok(ckpt)
    }

    /// Restores model, optimizer and counters. The config stored in the
    /// checkpoint is used; callers may adjust `config.train.steps` after.
    pub fn from_checkpoint(ckpt: &Checkpoint, samples: &[Sample], exec: Execution) -> Result<Self> {
        let bad = |m: &str| NdrError::IncompatibleCheckpoint(m.to_owned());
        let config: RunConfig = serde_json::from_value(ckpt.meta.get("config").cloned().ok_or_else(|| bad("no config"))?)
            .map_err(|e| bad(&format!("config: {e}")))?;
        let step = ckpt.meta.get("step").and_then(|v| v.as_u64()).ok_or_else(|| bad("no step counter"))?;
        let adam_step = ckpt.meta.get("adam_step").and_then(|v| v.as_u64()).unwrap_or(step);
        let averages = match ckpt.meta.get("averages") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| bad(&format!("averages: {e}")))?,
            None => RunningAverages::default(),
        };
        let mut net = load_params(ckpt, &config)?;
        let mut adam = AdamState::new(&net.params);
        adam.step = adam_step;
        for (prefix, moments) in [("adam.m/", &mut adam.m), ("adam.v/", &mut adam.v)] {
            for (id, m) in net.params.ids().zip(moments.iter_mut()) {
                let name = format!("{prefix}{}", net.params.name(id));
                let t = ckpt.get(&name).ok_or_else(|| bad(&format!("missing `{name}`")))?;
                if t.len() != m.len() {
                    return Err(bad(&format!("`{name}` has {} values, expected {}", t.len(), m.len())));
                }
                m.copy_from_slice(t.data());
            }
        }
        net.params.tensors_mut().iter_mut().for_each(|t| t.requires_grad = true);
        let mut trainer = Self::assemble(config, net, adam, step, averages, samples, exec)?;
        trainer.config_source = ckpt.meta.get("config_source").and_then(|v| v.as_str()).map(str::to_owned);
        Ok(trainer)
    }

    /// Trains until the step counter reaches `until`. With an output
    /// directory, appends to `metrics.csv`, writes periodic and final
    /// checkpoints, and leaves `crash.ndrc` behind on a non-finite loss.
    pub fn run(&mut self, until: u64, out_dir: Option<&Path>) -> Result<TrainOutcome> {
        let mut log = match out_dir {
            Some(dir) => Some(MetricsLog::open(dir, self.step == 0)?),
            None => None,
        };
        let t = self.config.train.clone();
        let mut outcome = TrainOutcome::default();
        while self.step < until {
            let record = match self.step_once() {
                Ok(r) => r,
                Err(e) => {
                    if let (Some(dir), true) = (out_dir, is_numeric_failure(&e)) {
                        self.to_checkpoint()?.save(&dir.join(CRASH_FILE))?;
                    }
                    return Err(e);
                }
            };
            let s = record.step;
            let eval = if (t.eval_every > 0 && s % t.eval_every == 0) || s == until {
                let report = self.evaluate_held_out()?;
                outcome.evals.push((s, report.clone()));
                Some(report)
            } else {
                None
            };
            if let Some(log) = &mut log {
                log.row(&record, eval.as_ref())?;
            }
            outcome.history.push(record);
            if let Some(dir) = out_dir {
                if t.checkpoint_every > 0 && s % t.checkpoint_every == 0 && s != until {
                    self.to_checkpoint()?.save(&dir.join(CHECKPOINT_FILE))?;
                }
            }
        }
        if let Some(dir) = out_dir {
            self.to_checkpoint()?.save(&dir.join(CHECKPOINT_FILE))?;
        }
        Ok(outcome)
    }
}

fn is_numeric_failure(e: &NdrError) -> bool {
    matches!(e, NdrError::NonFiniteLoss { .. } | NdrError::NonFiniteGradient { .. } | NdrError::NonFinite { .. })
}

/// Rebuilds the networks described by `config` and fills in parameters by
/// name.
pub fn load_params(ckpt: &Checkpoint, config: &RunConfig) -> Result<NdrNetworks> {
    let mut net = NdrNetworks::new(config.model.clone(), config.train.seed)?;
    let names: Vec<String> = net.params.names().to_vec();
    for name in names {
        let t = ckpt
            .get(&name)
            .ok_or_else(|| NdrError::IncompatibleCheckpoint(format!("missing parameter `{name}`")))?;
        net.params.set(&name, t.clone()).map_err(|e| NdrError::IncompatibleCheckpoint(e.to_string()))?;
    }
    Ok(net)
}

/// Reads the config stored in a checkpoint and the matching networks.
pub fn load_model(ckpt: &Checkpoint) -> Result<(RunConfig, NdrNetworks)> {
    let config: RunConfig = serde_json::from_value(
        ckpt.meta.get("config").cloned().ok_or_else(|| NdrError::IncompatibleCheckpoint("no config".into()))?,
    )
    .map_err(|e| NdrError::IncompatibleCheckpoint(format!("config: {e}")))?;
    let net = load_params(ckpt, &config)?;
    Ok((config, net))
}

struct MetricsLog {
    path: PathBuf,
    file: std::fs::File,
}

impl MetricsLog {
    fn open(dir: &Path, fresh: bool) -> Result<Self> {
        crate::io::ensure_dir(dir)?;
        let path = dir.join(METRICS_FILE);
        let exists = path.exists();
        let mut file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(!fresh)
            .truncate(fresh)
            .open(&path)
            .map_err(|e| NdrError::io(&path, e))?;
        if fresh || !exists {
            writeln!(file, "{METRICS_HEADER}").map_err(|e| NdrError::io(&path, e))?;
        }
        Ok(Self { path, file })
    }

    fn row(&mut self, r: &StepRecord, eval: Option<&MetricReport>) -> Result<()> {
        let (p, s) = match eval {
            Some(m) => (format!("{:.6}", m.mean_psnr), format!("{:.6}", m.mean_ssim)),
            None => (String::new(), String::new()),
        };
        let l = &r.losses;
        writeln!(self.file, "{},{:.9e},{:.9e},{:.9e},{p},{s}", r.step, l.total, l.x_recon, l.y_recon)
            .and_then(|_| self.file.flush())
            .map_err(|e| NdrError::io(&self.path, e))
    }
}

/// Writes an initial checkpoint and a header-only metrics file.
pub fn init_run(trainer: &Trainer, out_dir: &Path) -> Result<()> {
    MetricsLog::open(out_dir, true)?;
    trainer.to_checkpoint()?.save(&out_dir.join(CHECKPOINT_FILE))
}
