//! Module and loss-weight ablations: each arm trains from the same seed and
//! data, then is scored on the same held-out split.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{NdrError, Result};
use crate::exec::Execution;
use crate::metrics::KindScore;
use crate::model::Variant;
use crate::synth::{DegradationKind, Sample};
use crate::train::Trainer;

pub const LAMBDA_SWEEP: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 3.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arm {
    Variant(Variant),
    /// Full model trained with this loss weight.
    Lambda(f64),
}

impl Arm {
    pub fn label(&self) -> String {
        match self {
            Arm::Variant(v) => v.as_str().to_owned(),
            Arm::Lambda(l) => format!("lambda={l}"),
        }
    }

    /// Parses a comma-separated list. `lambda` expands to the standard
    /// sweep, `lambda=<w>` is a single weight.
    pub fn parse_list(list: &str) -> Result<Vec<Arm>> {
        let mut arms = Vec::new();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if let Some(v) = Variant::parse(item) {
                arms.push(Arm::Variant(v));
            } else if item == "lambda" {
                arms.extend(LAMBDA_SWEEP.map(Arm::Lambda));
            } else if let Some(w) = item.strip_prefix("lambda=") {
                let w: f64 = w.parse().map_err(|_| NdrError::Invalid(format!("bad loss weight in `{item}`")))?;
                if !(w.is_finite() && w >= 0.0) {
                    return Err(NdrError::Invalid(format!("loss weight must be finite and >= 0 in `{item}`")));
                }
                arms.push(Arm::Lambda(w));
            } else {
                return Err(NdrError::Invalid(format!(
                    "unknown ablation `{item}` (expected full, no_dq, no_di, no_cp, lambda or lambda=<w>)"
                )));
            }
        }
        if arms.is_empty() {
            return Err(NdrError::Invalid("empty ablation list".into()));
        }
        Ok(arms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub variant: Variant,
    pub lambda: f64,
    pub params: usize,
    pub ndr_params: usize,
    /// Mean total loss over the last (up to) 100 steps.
    pub final_loss: f64,
    pub by_kind: BTreeMap<DegradationKind, KindScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub variants: Vec<String>,
    pub steps: u64,
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

pub fn run_ablation(base: &RunConfig, samples: &[Sample], arms: &[Arm], exec: Execution) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(arms.len());
    for arm in arms {
        let mut cfg = base.clone();
        match *arm {
            Arm::Variant(v) => cfg.model.variant = v,
            Arm::Lambda(l) => {
                cfg.model.variant = Variant::Full;
                cfg.train.lambda = l;
            }
        }
        let mut trainer = Trainer::new(cfg.clone(), samples, exec)?;
        let outcome = trainer.run(cfg.train.steps, None)?;
        let tail = &outcome.history[outcome.history.len().saturating_sub(100)..];
        let final_loss =
            if tail.is_empty() { f64::NAN } else { tail.iter().map(|r| r.losses.total).sum::<f64>() / tail.len() as f64 };
        let report = trainer.evaluate_held_out()?;
        rows.push(AblationRow {
            label: arm.label(),
            variant: cfg.model.variant,
            lambda: cfg.train.lambda,
            params: trainer.net.params.scalar_count(),
            ndr_params: trainer.net.ndr_params(),
            final_loss,
            by_kind: report.by_kind,
            mean_psnr: report.mean_psnr,
            mean_ssim: report.mean_ssim,
        });
    }
    Ok(AblationReport {
        variants: arms.iter().map(Arm::label).collect(),
        steps: base.train.steps,
        seed: base.train.seed,
        rows,
    })
}

impl AblationReport {
    pub fn kinds(&self) -> Vec<DegradationKind> {
        let mut kinds: Vec<_> = self.rows.iter().flat_map(|r| r.by_kind.keys().copied()).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    pub fn to_csv(&self) -> String {
        let kinds = self.kinds();
        let mut out = String::from("variant,lambda,params,ndr_params,final_loss");
        for k in &kinds {
            let _ = write!(out, ",psnr_{k},ssim_{k}");
        }
        out.push_str(",psnr_mean,ssim_mean\n");
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{},{:.9e}", r.label, r.lambda, r.params, r.ndr_params, r.final_loss);
            for k in &kinds {
                match r.by_kind.get(k) {
                    Some(s) => {
                        let _ = write!(out, ",{:.6},{:.6}", s.psnr, s.ssim);
                    }
                    None => out.push_str(",,"),
                }
            }
            let _ = writeln!(out, ",{:.6},{:.6}", r.mean_psnr, r.mean_ssim);
        }
        out
    }

    /// Writes `ablation.csv` and `ablation.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        crate::io::ensure_dir(dir)?;
        crate::io::write_atomic(&dir.join("ablation.csv"), self.to_csv().as_bytes())?;
        let json = serde_json::to_string_pretty(self)? + "\n";
        crate::io::write_atomic(&dir.join("ablation.json"), json.as_bytes())
    }
}
