//! Generation throughput.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use simpl_core::dataset::tile_image;
use simpl_core::scene::Background;
use simpl_core::DesignConfig;

use crate::error::{Error, Result};
use crate::export::{create_dir, export_patches};
use crate::pipeline::{render_world, thread_pool, Assets};

pub const BENCH_STAGES: &str = "scene build, RGB render, GT render, box extraction, tiling, PNG + annotation export";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub km2_generated: f64,
    pub wall_seconds: f64,
    pub objects_per_km2: u64,
    pub seconds_per_km2: f64,
    pub world_images: usize,
    pub workers: usize,
    pub stages: String,
    pub hardware: String,
}

pub fn hardware_note(workers: usize) -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{}, {threads} hardware threads, {workers} worker(s)",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// Time the full pipeline over `km2` square kilometers, written to `out_dir`.
///
/// The area is split into `ceil(km2)` equal square world images textured
/// with the first background. Asset loading is not timed.
pub fn run_bench(
    config: &DesignConfig,
    assets: &Assets,
    km2: f64,
    workers: usize,
    out_dir: &Path,
) -> Result<BenchResult> {
    config.validate()?;
    if !(km2 >= 1.0 && km2.is_finite()) {
        return Err(Error::Usage(format!("--km2 must be at least 1, got {km2}")));
    }
    let texture = assets
        .backgrounds
        .first()
        .ok_or_else(|| Error::Usage("no backgrounds configured".into()))?;
    let tiles = (km2 - 1e-9).ceil() as usize;
    let side_m = (km2 / tiles as f64).sqrt() * 1000.0;
    create_dir(out_dir)?;
    let pool = thread_pool(workers)?;

    let start = Instant::now();
    let patches_written: usize = pool.install(|| {
        (0..tiles)
            .into_par_iter()
            .map(|t| {
                let background = Background::from_meters(0, side_m, side_m, config.gsd);
                let world = render_world(config, &assets.meshes, texture, background, t as u64)?;
                let patches = tile_image(
                    &world.rgb,
                    &world.annotations,
                    config.patch_size,
                    config.min_visibility,
                    &world.id,
                )
                .map_err(|e| Error::Generation {
                    image: t as u64,
                    message: e.to_string(),
                })?;
                Ok(export_patches(&patches, out_dir)?.len())
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| v.into_iter().sum())
    })?;
    let wall_seconds = start.elapsed().as_secs_f64();
    log::info!("bench: {tiles} world images, {patches_written} patches in {wall_seconds:.2} s");

    Ok(BenchResult {
        km2_generated: km2,
        wall_seconds,
        objects_per_km2: config.density.round() as u64,
        seconds_per_km2: wall_seconds / km2,
        world_images: tiles,
        workers: workers.max(1),
        stages: BENCH_STAGES.into(),
        hardware: hardware_note(workers.max(1)),
    })
}
