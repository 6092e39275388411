use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::config::{Bounds, DesignConfig};
use crate::math::{cos, ln, sqrt};

/// Attempts at a positive size draw before giving up.
pub const MAX_SIZE_DRAWS: u32 = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error("{attempts} consecutive size draws were nonpositive (size_mean {mean:?}, size_std {std})")]
    NonPositiveSize { attempts: u32, mean: [f64; 2], std: f64 },
    #[error("no meshes to choose from")]
    NoMeshes,
}

/// Visual properties of one placed target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceProps {
    /// RGB in `[0, 255]`.
    pub color: [f64; 3],
    /// `(length, width)` in pixels.
    pub size: [f64; 2],
    /// Degrees in `[0, 360)`.
    pub heading: f64,
    pub mesh_choice: usize,
}

/// Lighting shared by every target in one world image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarParams {
    /// Degrees above the horizon.
    pub elevation: f64,
    /// Compass degrees clockwise from north (image up).
    pub azimuth: f64,
    pub intensity: f64,
}

impl SolarParams {
    pub const fn new(elevation: f64, azimuth: f64, intensity: f64) -> Self {
        SolarParams {
            elevation,
            azimuth,
            intensity,
        }
    }
}

/// What a derived stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamTag {
    Solar = 1,
    Placement = 2,
    Instance = 3,
    Background = 4,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `(master_seed, tag, image, instance)`.
pub fn derive_seed(master_seed: u64, tag: StreamTag, image: u64, instance: u64) -> u64 {
    let mut h = mix(master_seed);
    h = mix(h ^ tag as u64);
    h = mix(h ^ image);
    mix(h ^ instance)
}

/// Deterministic pseudorandom stream. Identical derivation inputs give
/// identical sequences on every platform this crate builds for.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        RngStream {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn derive(master_seed: u64, tag: StreamTag, image: u64, instance: u64) -> Self {
        Self::from_seed(derive_seed(master_seed, tag, image, instance))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi]`; returns `lo` when the interval is degenerate.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.next_f64();
        if hi <= lo {
            lo
        } else {
            lo + (hi - lo) * u
        }
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        ((self.next_f64() * n as f64) as usize).min(n.saturating_sub(1))
    }

    /// Standard normal deviate (Box-Muller; the second value of each pair
    /// is kept for the next call).
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = sqrt(-2.0 * ln(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare_normal = Some(r * crate::math::sin(theta));
        r * cos(theta)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        let z = self.standard_normal();
        if std == 0.0 {
            mean
        } else {
            mean + std * z
        }
    }
}

/// Draw color, size, heading and model for one target.
pub fn sample_instance(
    config: &DesignConfig,
    stream: &mut RngStream,
    mesh_count: usize,
) -> Result<InstanceProps, SampleError> {
    if mesh_count == 0 {
        return Err(SampleError::NoMeshes);
    }
    let mut color = [0.0; 3];
    for (c, mu) in color.iter_mut().zip(config.color_mean) {
        *c = stream.normal(mu, config.color_std).clamp(0.0, 255.0);
    }
    let mut size = None;
    for _ in 0..MAX_SIZE_DRAWS {
        let l = stream.normal(config.size_mean[0], config.size_std);
        let w = stream.normal(config.size_mean[1], config.size_std);
        if l > 0.0 && w > 0.0 {
            size = Some([l, w]);
            break;
        }
    }
    let size = size.ok_or(SampleError::NonPositiveSize {
        attempts: MAX_SIZE_DRAWS,
        mean: config.size_mean,
        std: config.size_std,
    })?;
    let heading = crate::math::rem_euclid(stream.next_f64() * 360.0, 360.0);
    let mesh_choice = stream.index(mesh_count);
    Ok(InstanceProps {
        color,
        size,
        heading,
        mesh_choice,
    })
}

fn draw(stream: &mut RngStream, b: Bounds) -> f64 {
    stream.uniform(b.lower(), b.upper())
}

/// Draw the lighting for one world image.
pub fn sample_solar(config: &DesignConfig, stream: &mut RngStream) -> SolarParams {
    let elevation = draw(stream, config.solar_elevation_bounds);
    let azimuth = draw(stream, config.solar_azimuth_bounds);
    let intensity = draw(stream, config.solar_intensity_bounds);
    SolarParams {
        elevation,
        azimuth,
        intensity,
    }
}

/// Source of per-target and per-image properties. The default
/// implementation draws from the normal/uniform families configured in
/// [`DesignConfig`]; other families can be plugged in here.
pub trait PropertySampler {
    fn instance(
        &self,
        config: &DesignConfig,
        stream: &mut RngStream,
        mesh_count: usize,
    ) -> Result<InstanceProps, SampleError>;

    fn solar(&self, config: &DesignConfig, stream: &mut RngStream) -> SolarParams;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultSampler;

impl PropertySampler for DefaultSampler {
    fn instance(
        &self,
        config: &DesignConfig,
        stream: &mut RngStream,
        mesh_count: usize,
    ) -> Result<InstanceProps, SampleError> {
        sample_instance(config, stream, mesh_count)
    }

    fn solar(&self, config: &DesignConfig, stream: &mut RngStream) -> SolarParams {
        sample_solar(config, stream)
    }
}
