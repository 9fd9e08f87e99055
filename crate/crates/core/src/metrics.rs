//! Fidelity metrics and affinity-structure diagnostics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NdrError, Result};
use crate::exec::Execution;
use crate::model::NdrNetworks;
use crate::synth::image::CHANNELS;
use crate::synth::{DegradationKind, Image, Sample};

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_same(op: &'static str, a: &Image, b: &Image) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(NdrError::shape(op, format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_same("mse", a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// PSNR in dB with unit peak, computed on the float values.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(psnr_from_mse(m))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Separable "valid" Gaussian filtering of one `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = win.iter().enumerate().map(|(k, c)| c * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = win.iter().enumerate().map(|(k, c)| c * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over an 11x11 Gaussian window (sigma 1.5), averaged over
/// channels, with constants for unit dynamic range.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_same("ssim", a, b)?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(NdrError::Invalid(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let win = gaussian_window();
    let plane = |img: &Image, c: usize| -> Vec<f64> { img.data().iter().skip(c).step_by(CHANNELS).copied().collect() };
    let mut total = 0.0;
    for c in 0..CHANNELS {
        let (pa, pb) = (plane(a, c), plane(b, c));
        let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
        let mu_a = filter_valid(&pa, h, w, &win);
        let mu_b = filter_valid(&pb, h, w, &win);
        let e_aa = filter_valid(&prod(&pa, &pa), h, w, &win);
        let e_bb = filter_valid(&prod(&pb, &pb), h, w, &win);
        let e_ab = filter_valid(&prod(&pa, &pb), h, w, &win);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
            sum += num / den;
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / CHANNELS as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: usize,
    pub kind: DegradationKind,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindScore {
    pub count: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub samples: Vec<SampleScore>,
    pub by_kind: BTreeMap<DegradationKind, KindScore>,
    /// Unweighted mean over kinds.
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl MetricReport {
    pub fn from_scores(samples: Vec<SampleScore>) -> Self {
        let mut by_kind: BTreeMap<DegradationKind, KindScore> = BTreeMap::new();
        for s in &samples {
            let e = by_kind.entry(s.kind).or_insert(KindScore { count: 0, psnr: 0.0, ssim: 0.0 });
            e.count += 1;
            e.psnr += s.psnr;
            e.ssim += s.ssim;
        }
        for e in by_kind.values_mut() {
            e.psnr /= e.count as f64;
            e.ssim /= e.count as f64;
        }
        let k = by_kind.len().max(1) as f64;
        let mean_psnr = by_kind.values().map(|e| e.psnr).sum::<f64>() / k;
        let mean_ssim = by_kind.values().map(|e| e.ssim).sum::<f64>() / k;
        Self { samples, by_kind, mean_psnr, mean_ssim }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,kind,psnr,ssim\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{:.6},{:.6}", s.id, s.kind, s.psnr, s.ssim);
        }
        out
    }

    /// Writes `metrics.csv` and `metrics.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        crate::io::ensure_dir(dir)?;
        crate::io::write_atomic(&dir.join("metrics.csv"), self.to_csv().as_bytes())?;
        let json = serde_json::to_string_pretty(self)? + "\n";
        crate::io::write_atomic(&dir.join("metrics.json"), json.as_bytes())
    }
}

/// Scores `model(x)` against `y`, or `x` against `y` when no model is given.
pub fn evaluate(model: Option<&NdrNetworks>, samples: &[Sample], exec: Execution) -> Result<MetricReport> {
    let scores = exec
        .map(samples, |s| -> Result<SampleScore> {
            let candidate = match model {
                Some(m) => m.restore_image(&s.degraded)?,
                None => s.degraded.clone(),
            };
            Ok(SampleScore { id: s.id, kind: s.kind(), psnr: psnr(&candidate, &s.clean)?, ssim: ssim(&candidate, &s.clean)? })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_scores(scores))
}

/// Ratio reported when within-class spread vanishes.
pub const RHO_CAP: f64 = 1e6;
const INTRA_FLOOR: f64 = 1e-12;

/// Mean affinity row of one image at the finest scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityProfile {
    pub id: usize,
    pub kind: DegradationKind,
    pub profile: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    /// Mean pairwise L2 distance between profiles of the same kind.
    pub d_intra: f64,
    /// Mean pairwise L2 distance between profiles of different kinds.
    pub d_inter: f64,
    /// `d_inter / d_intra`, or [`RHO_CAP`] when `d_intra` is ~0.
    pub rho: f64,
    pub capped: bool,
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn separation(profiles: &[AffinityProfile]) -> Result<Separation> {
    let mut per_kind: BTreeMap<DegradationKind, usize> = BTreeMap::new();
    for p in profiles {
        *per_kind.entry(p.kind).or_default() += 1;
    }
    if per_kind.len() < 2 {
        return Err(NdrError::Invalid("affinity separation needs at least two degradation kinds".into()));
    }
    if let Some((k, _)) = per_kind.iter().find(|(_, &n)| n < 2) {
        return Err(NdrError::Invalid(format!("affinity separation needs at least two `{k}` images")));
    }
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for (i, a) in profiles.iter().enumerate() {
        for b in &profiles[i + 1..] {
            let d = l2(&a.profile, &b.profile);
            if a.kind == b.kind {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    let d_intra = intra / n_intra as f64;
    let d_inter = inter / n_inter as f64;
    let (rho, capped) = if d_intra < INTRA_FLOOR {
        (RHO_CAP, true)
    } else {
        let r = d_inter / d_intra;
        if r > RHO_CAP {
            (RHO_CAP, true)
        } else {
            (r, false)
        }
    };
    Ok(Separation { d_intra, d_inter, rho, capped })
}

pub fn affinity_profile(model: &NdrNetworks, image: &Image) -> Result<Vec<f64>> {
    let (_, trace) = model.restore_with_trace(image)?;
    let s = trace
        .first()
        .and_then(|t| t.affinity.as_ref())
        .ok_or_else(|| NdrError::Invalid("model has no dictionary query to profile".into()))?;
    let n = s.shape()[1];
    let rows = s.shape()[0] as f64;
    let mut mean = vec![0.0; n];
    for row in s.data().chunks_exact(n) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= rows);
    Ok(mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityReport {
    pub profiles: Vec<AffinityProfile>,
    pub separation: Separation,
}

pub fn affinity_separation(model: &NdrNetworks, samples: &[Sample], exec: Execution) -> Result<AffinityReport> {
    let profiles = exec
        .map(samples, |s| affinity_profile(model, &s.degraded).map(|profile| AffinityProfile { id: s.id, kind: s.kind(), profile }))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let separation = separation(&profiles)?;
    Ok(AffinityReport { profiles, separation })
}
