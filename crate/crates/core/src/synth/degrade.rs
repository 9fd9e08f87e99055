//! Synthetic degradation generators. Each one is a pure function of the
//! input image, its parameters and a seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::image::{Image, CHANNELS};
use crate::error::{NdrError, Result};

/// Noise levels on the 0-255 scale used for training data.
pub const NOISE_SIGMAS: [f64; 3] = [15.0, 25.0, 50.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegradationKind {
    Noise,
    Rain,
    Haze,
    Downsample,
}

impl DegradationKind {
    pub const ALL: [DegradationKind; 4] =
        [DegradationKind::Noise, DegradationKind::Rain, DegradationKind::Haze, DegradationKind::Downsample];

    pub fn as_str(self) -> &'static str {
        match self {
            DegradationKind::Noise => "noise",
            DegradationKind::Rain => "rain",
            DegradationKind::Haze => "haze",
            DegradationKind::Downsample => "downsample",
        }
    }
}

impl std::fmt::Display for DegradationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RainParams {
    /// Probability that a pixel seeds a streak.
    pub density: f64,
    /// Streak direction in degrees, measured from the vertical.
    pub angle: f64,
    /// Streak length in pixels.
    pub length: usize,
    pub intensity: f64,
}

/// One synthetic degradation with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum Degradation {
    /// `sigma` on the 0-255 scale.
    Noise { sigma: f64 },
    Rain(RainParams),
    Haze { transmission: f64, airlight: f64 },
    Downsample { scale: usize },
}

impl Degradation {
    pub fn kind(&self) -> DegradationKind {
        match self {
            Degradation::Noise { .. } => DegradationKind::Noise,
            Degradation::Rain(_) => DegradationKind::Rain,
            Degradation::Haze { .. } => DegradationKind::Haze,
            Degradation::Downsample { .. } => DegradationKind::Downsample,
        }
    }

    /// Range checks for dataset specs, which are tighter than what the
    /// individual generators accept.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Degradation::Noise { sigma } => {
                if !NOISE_SIGMAS.contains(&sigma) {
                    return Err(NdrError::Invalid(format!("noise sigma {sigma} not in {NOISE_SIGMAS:?}")));
                }
            }
            Degradation::Rain(p) => validate_rain(&p)?,
            Degradation::Haze { transmission, airlight } => {
                validate_transmission(transmission)?;
                if !(0.7..=1.0).contains(&airlight) {
                    return Err(NdrError::Invalid(format!("airlight {airlight} outside [0.7, 1.0]")));
                }
            }
            Degradation::Downsample { scale } => {
                if scale != 2 {
                    return Err(NdrError::Invalid(format!("downsample scale {scale} (only 2 is supported)")));
                }
            }
        }
        Ok(())
    }

    /// Factor by which the clean source must be larger than the stored pair.
    pub fn source_scale(&self) -> usize {
        match *self {
            Degradation::Downsample { scale } => scale,
            _ => 1,
        }
    }

    /// Produces `(degraded, clean_target)` from a clean source image.
    ///
    /// For downsampling the source is `scale` times larger than the pair:
    /// the target is its box-filtered reduction and the degraded input is a
    /// plain decimation (aliased, no prefilter).
    pub fn apply(&self, source: &Image, seed: u64) -> Result<(Image, Image)> {
        match *self {
            Degradation::Noise { sigma } => Ok((add_gaussian_noise(source, sigma, seed)?, source.clone())),
            Degradation::Rain(p) => Ok((add_rain_streaks(source, &p, seed)?, source.clone())),
            Degradation::Haze { transmission, airlight } => {
                Ok((apply_haze(source, transmission, airlight)?, source.clone()))
            }
            Degradation::Downsample { scale } => Ok((decimate(source, scale)?, downsample(source, scale)?)),
        }
    }
}

/// Seeded degradation, as persisted in dataset manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    #[serde(flatten)]
    pub degradation: Degradation,
    pub seed: u64,
}

/// `clamp(img + n)` with `n ~ N(0, (sigma / 255)^2)` per element.
pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(NdrError::Invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, sigma / 255.0).expect("finite sigma");
    let mut out = img.clone();
    out.data_mut().iter_mut().for_each(|v| *v += dist.sample(&mut rng));
    Ok(out.clamp_unit())
}

fn validate_rain(p: &RainParams) -> Result<()> {
    let ok = (0.0..=1.0).contains(&p.density)
        && (0.0..=1.0).contains(&p.intensity)
        && p.angle.is_finite()
        && (1..=64).contains(&p.length);
    if ok {
        Ok(())
    } else {
        Err(NdrError::Invalid(format!("rain parameters out of range: {p:?}")))
    }
}

/// Pixel offsets covered by a centred line of the given length and angle.
pub fn streak_kernel(length: usize, angle_deg: f64) -> Vec<(isize, isize)> {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let half = (length as f64 - 1.0) / 2.0;
    let mut taps: Vec<(isize, isize)> = (0..length)
        .map(|i| {
            let t = i as f64 - half;
            ((t * c).round() as isize, (t * s).round() as isize)
        })
        .collect();
    taps.sort_unstable();
    taps.dedup();
    taps
}

/// Streak layer: sparse uniform seeds convolved with an oriented line
/// kernel. Values are non-negative and identical across channels.
pub fn rain_layer(height: usize, width: usize, p: &RainParams, seed: u64) -> Result<Vec<f64>> {
    validate_rain(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<f64> = (0..height * width)
        .map(|_| {
            let hit = rng.random::<f64>() < p.density;
            let v = rng.random_range(0.5..=1.0);
            if hit {
                v
            } else {
                0.0
            }
        })
        .collect();
    let taps = streak_kernel(p.length, p.angle);
    let mut layer = vec![0.0; height * width];
    for y in 0..height {
        for x in 0..width {
            let s = seeds[y * width + x];
            if s == 0.0 {
                continue;
            }
            for &(dy, dx) in &taps {
                let (ty, tx) = (y as isize + dy, x as isize + dx);
                if ty >= 0 && tx >= 0 && (ty as usize) < height && (tx as usize) < width {
                    layer[ty as usize * width + tx as usize] += p.intensity * s;
                }
            }
        }
    }
    Ok(layer)
}

pub fn add_rain_streaks(img: &Image, p: &RainParams, seed: u64) -> Result<Image> {
    let layer = rain_layer(img.height(), img.width(), p, seed)?;
    let mut out = img.clone();
    for (px, r) in out.data_mut().chunks_exact_mut(CHANNELS).zip(&layer) {
        px.iter_mut().for_each(|v| *v += r);
    }
    Ok(out.clamp_unit())
}

fn validate_transmission(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(NdrError::Invalid(format!("transmission {t} outside (0, 1]")))
    }
}

/// Atmospheric scattering with a constant transmission: `img * t + A * (1 - t)`.
pub fn apply_haze(img: &Image, transmission: f64, airlight: f64) -> Result<Image> {
    validate_transmission(transmission)?;
    if !(0.0..=1.0).contains(&airlight) {
        return Err(NdrError::Invalid(format!("airlight {airlight} outside [0, 1]")));
    }
    Ok(scatter(img, transmission, airlight))
}

pub(crate) fn scatter(img: &Image, t: f64, a: f64) -> Image {
    let mut out = img.clone();
    out.data_mut().iter_mut().for_each(|v| *v = *v * t + a * (1.0 - t));
    out.clamp_unit()
}

fn check_divisible(img: &Image, s: usize) -> Result<()> {
    if s == 0 || img.height() % s != 0 || img.width() % s != 0 {
        return Err(NdrError::Invalid(format!("{}x{} not divisible by scale {s}", img.height(), img.width())));
    }
    Ok(())
}

/// Box-filter reduction: each output pixel is the mean of an `s x s` block.
pub fn downsample(img: &Image, s: usize) -> Result<Image> {
    check_divisible(img, s)?;
    let inv = 1.0 / (s * s) as f64;
    Ok(Image::from_fn(img.height() / s, img.width() / s, |y, x, c| {
        let mut acc = 0.0;
        for dy in 0..s {
            for dx in 0..s {
                acc += img.get(y * s + dy, x * s + dx, c);
            }
        }
        acc * inv
    }))
}

/// Keeps the top-left pixel of every `s x s` block.
pub fn decimate(img: &Image, s: usize) -> Result<Image> {
    check_divisible(img, s)?;
    Ok(Image::from_fn(img.height() / s, img.width() / s, |y, x, c| img.get(y * s, x * s, c)))
}
