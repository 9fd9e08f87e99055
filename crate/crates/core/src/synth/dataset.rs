//! Paired dataset synthesis and persistence.
//!
//! Layout on disk:
//!
//! ```text
//! <dir>/manifest.json        [{id, kind, params, seed, clean_path, degraded_path, height, width}]
//! <dir>/clean/00000.png
//! <dir>/degraded/00000.png
//! ```
//!
//! Every sample is a pure function of `(config.seed, index)`, so the same
//! config always produces byte-identical files, and any entry can be
//! re-rendered from its manifest record alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::degrade::{Degradation, DegradationKind, DegradationSpec, RainParams};
use super::image::Image;
use super::patterns::procedural_image;
use crate::error::{NdrError, Result};
use crate::exec::Execution;

pub const MANIFEST_FILE: &str = "manifest.json";

const DEGRADE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    #[default]
    Png,
    Ppm,
}

impl ImageFormat {
    fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Ppm => "ppm",
        }
    }
}

/// Closed interval `[lo, hi]` sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    fn sample(self, rng: &mut ChaCha8Rng) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            rng.random_range(self.0..=self.1)
        }
    }

    fn check(self, name: &str, lo: f64, hi: f64) -> Result<()> {
        if self.0.is_finite() && self.1.is_finite() && self.0 <= self.1 && self.0 >= lo && self.1 <= hi {
            Ok(())
        } else {
            Err(NdrError::Config(format!("{name} range [{}, {}] must lie within [{lo}, {hi}]", self.0, self.1)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RainRanges {
    pub density: Range,
    pub angle: Range,
    pub length: Range,
    pub intensity: Range,
}

impl Default for RainRanges {
    fn default() -> Self {
        Self {
            density: Range(0.01, 0.04),
            angle: Range(-30.0, 30.0),
            length: Range(5.0, 11.0),
            intensity: Range(0.3, 0.7),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HazeRanges {
    pub transmission: Range,
    pub airlight: Range,
}

impl Default for HazeRanges {
    fn default() -> Self {
        Self { transmission: Range(0.4, 0.8), airlight: Range(0.7, 1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n: usize,
    /// Side length of the stored square pairs.
    pub size: usize,
    pub seed: u64,
    /// Relative weight per degradation kind.
    pub mixture: BTreeMap<DegradationKind, f64>,
    /// Noise levels on the 0-255 scale, picked uniformly.
    pub noise_sigmas: Vec<f64>,
    pub rain: RainRanges,
    pub haze: HazeRanges,
    pub format: ImageFormat,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n: 300,
            size: 32,
            seed: 0,
            mixture: [(DegradationKind::Noise, 1.0), (DegradationKind::Rain, 1.0), (DegradationKind::Haze, 1.0)]
                .into_iter()
                .collect(),
            noise_sigmas: vec![15.0, 25.0, 50.0],
            rain: RainRanges::default(),
            haze: HazeRanges::default(),
            format: ImageFormat::Png,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(NdrError::Config(format!("dataset.size must be >= 2, got {}", self.size)));
        }
        if self.mixture.is_empty() {
            return Err(NdrError::Config("dataset.mixture is empty".into()));
        }
        if self.mixture.values().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(NdrError::Config("dataset.mixture weights must be finite and >= 0".into()));
        }
        if self.mixture.values().sum::<f64>() <= 0.0 {
            return Err(NdrError::Config("dataset.mixture weights sum to zero".into()));
        }
        if self.weight(DegradationKind::Noise) > 0.0 {
            if self.noise_sigmas.is_empty() {
                return Err(NdrError::Config("dataset.noise_sigmas is empty".into()));
            }
            for &sigma in &self.noise_sigmas {
                Degradation::Noise { sigma }.validate().map_err(|e| NdrError::Config(e.to_string()))?;
            }
        }
        self.rain.density.check("rain.density", 0.0, 1.0)?;
        self.rain.intensity.check("rain.intensity", 0.0, 1.0)?;
        self.rain.length.check("rain.length", 1.0, 64.0)?;
        self.rain.angle.check("rain.angle", -180.0, 180.0)?;
        self.haze.transmission.check("haze.transmission", f64::MIN_POSITIVE, 1.0)?;
        self.haze.airlight.check("haze.airlight", 0.7, 1.0)?;
        Ok(())
    }

    fn weight(&self, kind: DegradationKind) -> f64 {
        self.mixture.get(&kind).copied().unwrap_or(0.0)
    }

    /// Kinds with positive weight, in canonical order.
    pub fn kinds(&self) -> Vec<DegradationKind> {
        self.mixture.iter().filter(|(_, &w)| w > 0.0).map(|(&k, _)| k).collect()
    }

    fn sample_seed(&self, index: usize) -> u64 {
        splitmix64(self.seed ^ splitmix64(index as u64 + 1))
    }

    /// Draws the seeded degradation for sample `index`.
    pub fn draw_spec(&self, index: usize) -> DegradationSpec {
        let seed = self.sample_seed(index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total: f64 = self.mixture.values().sum();
        let mut pick = rng.random_range(0.0..total);
        let mut kind = *self.mixture.keys().next_back().expect("validated non-empty");
        for (&k, &w) in &self.mixture {
            if pick < w {
                kind = k;
                break;
            }
            pick -= w;
        }
        let degradation = match kind {
            DegradationKind::Noise => {
                Degradation::Noise { sigma: self.noise_sigmas[rng.random_range(0..self.noise_sigmas.len())] }
            }
            DegradationKind::Rain => Degradation::Rain(RainParams {
                density: self.rain.density.sample(&mut rng),
                angle: self.rain.angle.sample(&mut rng),
                length: self.rain.length.sample(&mut rng).round() as usize,
                intensity: self.rain.intensity.sample(&mut rng),
            }),
            DegradationKind::Haze => Degradation::Haze {
                transmission: self.haze.transmission.sample(&mut rng),
                airlight: self.haze.airlight.sample(&mut rng),
            },
            DegradationKind::Downsample => Degradation::Downsample { scale: 2 },
        };
        DegradationSpec { degradation, seed }
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A paired training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub spec: DegradationSpec,
    /// Degraded input `x`.
    pub degraded: Image,
    /// Clean target `y`.
    pub clean: Image,
}

impl Sample {
    pub fn kind(&self) -> DegradationKind {
        self.spec.degradation.kind()
    }
}

/// Renders the `(degraded, clean)` pair for a spec at the given pair size.
pub fn render(spec: &DegradationSpec, height: usize, width: usize) -> Result<(Image, Image)> {
    spec.degradation.validate()?;
    let s = spec.degradation.source_scale();
    let source = procedural_image(height * s, width * s, spec.seed);
    spec.degradation.apply(&source, spec.seed ^ DEGRADE_SALT)
}

pub fn generate_sample(config: &DatasetConfig, index: usize) -> Result<Sample> {
    let spec = config.draw_spec(index);
    let (degraded, clean) = render(&spec, config.size, config.size)?;
    Ok(Sample { id: index, spec, degraded, clean })
}

/// In-memory synthesis of the whole dataset.
pub fn make_samples(config: &DatasetConfig, exec: Execution) -> Result<Vec<Sample>> {
    config.validate()?;
    let idx: Vec<usize> = (0..config.n).collect();
    exec.map(&idx, |&i| generate_sample(config, i)).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    #[serde(flatten)]
    pub spec: DegradationSpec,
    pub clean_path: String,
    pub degraded_path: String,
    pub height: usize,
    pub width: usize,
}

/// Synthesizes the dataset into `dir` and writes its manifest.
pub fn make_dataset(config: &DatasetConfig, dir: &Path, exec: Execution) -> Result<Vec<ManifestEntry>> {
    config.validate()?;
    for sub in ["clean", "degraded"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| NdrError::io(&p, e))?;
    }
    let ext = config.format.extension();
    let idx: Vec<usize> = (0..config.n).collect();
    let entries = exec
        .map(&idx, |&i| -> Result<ManifestEntry> {
            let sample = generate_sample(config, i)?;
            let clean_path = format!("clean/{i:05}.{ext}");
            let degraded_path = format!("degraded/{i:05}.{ext}");
            sample.clean.save(&dir.join(&clean_path))?;
            sample.degraded.save(&dir.join(&degraded_path))?;
            Ok(ManifestEntry {
                id: i,
                spec: sample.spec,
                clean_path,
                degraded_path,
                height: config.size,
                width: config.size,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    write_manifest(dir, &entries)?;
    Ok(entries)
}

pub fn write_manifest(dir: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(entries)?;
    text.push('\n');
    crate::io::write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| NdrError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads every pair listed in `dir/manifest.json`.
pub fn load_dataset(dir: &Path) -> Result<Vec<Sample>> {
    read_manifest(dir)?
        .into_iter()
        .map(|e| {
            let clean = Image::load(&resolve(dir, &e.clean_path))?;
            let degraded = Image::load(&resolve(dir, &e.degraded_path))?;
            if clean.dims() != degraded.dims() || clean.dims() != (e.height, e.width) {
                return Err(NdrError::Invalid(format!("sample {}: image sizes disagree with manifest", e.id)));
            }
            Ok(Sample { id: e.id, spec: e.spec, degraded, clean })
        })
        .collect()
}

fn resolve(dir: &Path, rel: &str) -> PathBuf {
    dir.join(rel)
}
