//! Clean/degraded pair synthesis for the four degradation families.

pub mod dataset;
pub mod degrade;
pub mod image;
pub mod patterns;

pub use dataset::{
    load_dataset, make_dataset, make_samples, read_manifest, render, DatasetConfig, ImageFormat, ManifestEntry,
    Sample, MANIFEST_FILE,
};
pub use degrade::{
    add_gaussian_noise, add_rain_streaks, apply_haze, downsample, Degradation, DegradationKind, DegradationSpec,
    RainParams,
};
pub use image::Image;
