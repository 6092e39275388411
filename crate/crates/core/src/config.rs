use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::math::sqrt;
use crate::sampler::SolarParams;

pub const DEFAULT_DENSITY: f64 = 120.0;
pub const DEFAULT_GSD: f64 = 0.3;
pub const DEFAULT_PATCH_SIZE: u32 = 608;
pub const DEFAULT_NUM_PATCHES: u32 = 450;
pub const DEFAULT_AMBIENT: f64 = 0.3;
pub const DEFAULT_MIN_VISIBILITY: f64 = 0.25;

pub const ELEVATION_RANGE: (f64, f64) = (0.0, 90.0);
pub const AZIMUTH_RANGE: (f64, f64) = (0.0, 360.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid `{field}`: {message}")]
    Validation { field: &'static str, message: String },
    #[error("at least {required} {what} samples are required, got {got}")]
    TooFewSamples {
        what: &'static str,
        required: usize,
        got: usize,
    },
    #[error("observation {index}: {field} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        index: usize,
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("sweep offset {0}% would make the mean nonpositive")]
    OffsetTooNegative(f64),
    #[error("sweep value {0} is not a positive patch count")]
    InvalidPatchCount(f64),
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field,
        message: message.into(),
    }
}

/// Closed interval `[lower, upper]` of a uniform distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds(pub f64, pub f64);

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Self {
        Bounds(lower, upper)
    }

    pub fn lower(&self) -> f64 {
        self.0
    }

    pub fn upper(&self) -> f64 {
        self.1
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.0 && v <= self.1
    }

    fn check(&self, field: &'static str, min: f64, max: f64) -> Result<(), ConfigError> {
        if !self.0.is_finite() || !self.1.is_finite() {
            return Err(invalid(field, "bounds must be finite"));
        }
        if self.0 > self.1 {
            return Err(invalid(field, "lower bound exceeds upper bound"));
        }
        if self.0 < min || self.1 > max {
            return Err(invalid(field, format!("bounds must lie within [{min}, {max}]")));
        }
        Ok(())
    }
}

/// Every knob of the generation process. A dataset is a pure function of
/// this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub class_id: u32,
    pub mesh_paths: Vec<String>,
    pub background_paths: Vec<String>,
    /// Mean RGB color of the targets.
    pub color_mean: [f64; 3],
    /// Isotropic color standard deviation, RGB units.
    pub color_std: f64,
    /// Mean (length, width) of the targets in pixels.
    pub size_mean: [f64; 2],
    /// Isotropic size standard deviation in pixels.
    pub size_std: f64,
    /// Degrees above the horizon.
    pub solar_elevation_bounds: Bounds,
    /// Compass degrees, clockwise from north (image up).
    pub solar_azimuth_bounds: Bounds,
    pub solar_intensity_bounds: Bounds,
    /// Targets per square kilometer.
    #[serde(default = "default_density")]
    pub density: f64,
    /// Meters per pixel.
    #[serde(default = "default_gsd")]
    pub gsd: f64,
    #[serde(default = "default_patch_size")]
    pub patch_size: u32,
    #[serde(default = "default_num_patches")]
    pub num_patches: u32,
    #[serde(with = "seed_repr")]
    pub master_seed: u64,
    #[serde(default = "default_ambient")]
    pub ambient: f64,
    /// Fraction of a clipped box that must stay inside a patch to be kept.
    #[serde(default = "default_min_visibility")]
    pub min_visibility: f64,
}

fn default_density() -> f64 {
    DEFAULT_DENSITY
}
fn default_gsd() -> f64 {
    DEFAULT_GSD
}
fn default_patch_size() -> u32 {
    DEFAULT_PATCH_SIZE
}
fn default_num_patches() -> u32 {
    DEFAULT_NUM_PATCHES
}
fn default_ambient() -> f64 {
    DEFAULT_AMBIENT
}
fn default_min_visibility() -> f64 {
    DEFAULT_MIN_VISIBILITY
}

impl DesignConfig {
    /// A config with every optional field at its default and degenerate
    /// (zero-variance, fixed-sun) distributions. Mostly useful as a
    /// starting point for tests and programmatic construction.
    pub fn new(class_id: u32, mesh_paths: Vec<String>, background_paths: Vec<String>) -> Self {
        DesignConfig {
            class_id,
            mesh_paths,
            background_paths,
            color_mean: [128.0, 128.0, 128.0],
            color_std: 0.0,
            size_mean: [100.0, 80.0],
            size_std: 0.0,
            solar_elevation_bounds: Bounds(45.0, 45.0),
            solar_azimuth_bounds: Bounds(180.0, 180.0),
            solar_intensity_bounds: Bounds(1.0, 1.0),
            density: DEFAULT_DENSITY,
            gsd: DEFAULT_GSD,
            patch_size: DEFAULT_PATCH_SIZE,
            num_patches: DEFAULT_NUM_PATCHES,
            master_seed: 0,
            ambient: DEFAULT_AMBIENT,
            min_visibility: DEFAULT_MIN_VISIBILITY,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.class_id < 1 {
            return Err(invalid("class_id", "must be >= 1"));
        }
        if self.mesh_paths.is_empty() {
            return Err(invalid("mesh_paths", "at least one mesh is required"));
        }
        if self.background_paths.is_empty() {
            return Err(invalid("background_paths", "at least one background is required"));
        }
        if self.color_mean.iter().any(|c| !c.is_finite() || *c < 0.0 || *c > 255.0) {
            return Err(invalid("color_mean", "components must lie within [0, 255]"));
        }
        if !self.color_std.is_finite() || self.color_std < 0.0 {
            return Err(invalid("color_std", "must be finite and >= 0"));
        }
        if self.size_mean.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(invalid("size_mean", "components must be > 0"));
        }
        if !self.size_std.is_finite() || self.size_std < 0.0 {
            return Err(invalid("size_std", "must be finite and >= 0"));
        }
        self.solar_elevation_bounds
            .check("solar_elevation_bounds", ELEVATION_RANGE.0, ELEVATION_RANGE.1)?;
        self.solar_azimuth_bounds
            .check("solar_azimuth_bounds", AZIMUTH_RANGE.0, AZIMUTH_RANGE.1)?;
        self.solar_intensity_bounds
            .check("solar_intensity_bounds", 0.0, f64::MAX)?;
        if !self.density.is_finite() || self.density <= 0.0 {
            return Err(invalid("density", "must be > 0"));
        }
        if !self.gsd.is_finite() || self.gsd <= 0.0 {
            return Err(invalid("gsd", "must be > 0"));
        }
        if self.patch_size == 0 {
            return Err(invalid("patch_size", "must be > 0"));
        }
        if self.num_patches == 0 {
            return Err(invalid("num_patches", "must be > 0"));
        }
        if !(self.ambient >= 0.0 && self.ambient < 1.0) {
            return Err(invalid("ambient", "must lie within [0, 1)"));
        }
        if !(self.min_visibility > 0.0 && self.min_visibility <= 1.0) {
            return Err(invalid("min_visibility", "must lie within (0, 1]"));
        }
        Ok(())
    }
}

/// Seeds are `u64`, but many structured-text formats top out at `i64`.
/// Values that fit are written as integers, larger ones as `0x` strings;
/// both forms are accepted on input.
mod seed_repr {
    use super::*;

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        if *seed <= i64::MAX as u64 {
            s.serialize_u64(*seed)
        } else {
            s.serialize_str(&format!("{seed:#x}"))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        d.deserialize_any(SeedVisitor)
    }

    struct SeedVisitor;

    impl Visitor<'_> for SeedVisitor {
        type Value = u64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a nonnegative integer or a decimal/0x-prefixed string")
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<u64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<u64, E> {
            u64::try_from(v).map_err(|_| E::custom("master_seed must be nonnegative"))
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<u64, E> {
            let v = v.trim();
            let parsed = match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
                Some(hex) => u64::from_str_radix(hex, 16),
                None => v.parse(),
            };
            parsed.map_err(|_| E::custom(format!("invalid master_seed {v:?}")))
        }
    }
}

/// Target statistics aggregated from a handful of manual measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEstimate {
    pub size_mean: [f64; 2],
    pub size_std: f64,
    pub color_mean: [f64; 3],
    pub color_std: f64,
}

/// Componentwise means and a pooled (n - 1) sample standard deviation.
fn mean_and_pooled_std<const N: usize>(samples: &[[f64; N]]) -> ([f64; N], f64) {
    let n = samples.len() as f64;
    let mut mean = [0.0; N];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut ss = 0.0;
    for s in samples {
        for (m, v) in mean.iter().zip(s) {
            ss += (v - m) * (v - m);
        }
    }
    let std = sqrt(ss / (N as f64 * (n - 1.0)));
    (mean, std)
}

pub fn estimate_target_params(
    size_samples: &[[f64; 2]],
    color_samples: &[[f64; 3]],
) -> Result<TargetEstimate, ConfigError> {
    if size_samples.len() < 2 {
        return Err(ConfigError::TooFewSamples {
            what: "size",
            required: 2,
            got: size_samples.len(),
        });
    }
    if color_samples.len() < 2 {
        return Err(ConfigError::TooFewSamples {
            what: "color",
            required: 2,
            got: color_samples.len(),
        });
    }
    let (size_mean, size_std) = mean_and_pooled_std(size_samples);
    let (color_mean, color_std) = mean_and_pooled_std(color_samples);
    Ok(TargetEstimate {
        size_mean,
        size_std,
        color_mean,
        color_std,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarBounds {
    pub elevation: Bounds,
    pub azimuth: Bounds,
    pub intensity: Bounds,
}

/// Min/max over inspected solar conditions.
pub fn estimate_solar_bounds(observations: &[SolarParams]) -> Result<SolarBounds, ConfigError> {
    let first = observations.first().ok_or(ConfigError::TooFewSamples {
        what: "solar",
        required: 1,
        got: 0,
    })?;
    let ranges = [
        ("elevation", ELEVATION_RANGE.0, ELEVATION_RANGE.1),
        ("azimuth", AZIMUTH_RANGE.0, AZIMUTH_RANGE.1),
        ("intensity", 0.0, f64::INFINITY),
    ];
    let mut bounds = [
        Bounds(first.elevation, first.elevation),
        Bounds(first.azimuth, first.azimuth),
        Bounds(first.intensity, first.intensity),
    ];
    for (index, obs) in observations.iter().enumerate() {
        let values = [obs.elevation, obs.azimuth, obs.intensity];
        for ((b, v), (field, min, max)) in bounds.iter_mut().zip(values).zip(ranges) {
            if !(v >= min && v <= max) || !v.is_finite() {
                return Err(ConfigError::OutOfRange {
                    index,
                    field,
                    value: v,
                    min,
                    max,
                });
            }
            b.0 = b.0.min(v);
            b.1 = b.1.max(v);
        }
    }
    Ok(SolarBounds {
        elevation: bounds[0],
        azimuth: bounds[1],
        intensity: bounds[2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    ColorMean,
    SizeMean,
    NumPatches,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::ColorMean => "color_mean",
            SweepParam::SizeMean => "size_mean",
            SweepParam::NumPatches => "num_patches",
        }
    }
}

impl core::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "color_mean" => Ok(SweepParam::ColorMean),
            "size_mean" => Ok(SweepParam::SizeMean),
            "num_patches" | "k" | "K" => Ok(SweepParam::NumPatches),
            other => Err(format!(
                "unknown sweep parameter {other:?} (expected color_mean, size_mean or num_patches)"
            )),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Perturbed copies of `base`. Mean sweeps take signed percentages; the
/// `NumPatches` sweep takes the patch counts themselves.
pub fn make_sweep_configs(
    base: &DesignConfig,
    param: SweepParam,
    offsets: &[f64],
) -> Result<Vec<DesignConfig>, ConfigError> {
    offsets
        .iter()
        .map(|&offset| {
            let mut cfg = base.clone();
            match param {
                SweepParam::ColorMean | SweepParam::SizeMean => {
                    if !offset.is_finite() || offset <= -100.0 {
                        return Err(ConfigError::OffsetTooNegative(offset));
                    }
                    let factor = 1.0 + offset / 100.0;
                    if param == SweepParam::ColorMean {
                        for c in &mut cfg.color_mean {
                            *c = (*c * factor).clamp(0.0, 255.0);
                        }
                    } else {
                        for s in &mut cfg.size_mean {
                            *s *= factor;
                        }
                    }
                }
                SweepParam::NumPatches => {
                    if !(offset >= 1.0 && offset <= u32::MAX as f64 && crate::math::trunc(offset) == offset) {
                        return Err(ConfigError::InvalidPatchCount(offset));
                    }
                    cfg.num_patches = offset as u32;
                }
            }
            Ok(cfg)
        })
        .collect()
}

/// Short label used to name sweep outputs, e.g. `size_mean_+10` or `num_patches_28`.
pub fn sweep_label(param: SweepParam, offset: f64) -> String {
    match param {
        SweepParam::NumPatches => format!("{param}_{}", offset as u64),
        _ => {
            let mut s = format!("{param}_{offset:+}");
            if s.ends_with(".0") {
                s.truncate(s.len() - 2);
            }
            s.to_string()
        }
    }
}
