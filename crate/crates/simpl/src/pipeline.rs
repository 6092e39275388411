//! End-to-end generation: scene, RGB and GT renders, labels, tiles, files.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use simpl_core::dataset::{format_yolo_rows, rotate_patch, tile_image, tile_offsets, Patch};
use simpl_core::groundtruth::extract_boxes;
use simpl_core::renderer::{render_gt, render_rgb};
use simpl_core::scene::{build_scene, Background};
use simpl_core::{Annotation, DesignConfig, Mesh, RasterImage, Scene};

use crate::error::{Error, Result};
use crate::export::{
    create_dir, export_patches, generation_timestamp, write_manifest, DatasetManifest, PatchRecord, WorldRecord,
};
use crate::io::{load_mesh, read_image, write_png};

pub const WORLD_DIR: &str = "world";
pub const ROTATION_ANGLES: [u32; 3] = [90, 180, 270];

/// Meshes and background textures, loaded once per run.
#[derive(Debug, Clone)]
pub struct Assets {
    pub meshes: Vec<Mesh>,
    pub backgrounds: Vec<RasterImage>,
    pub background_names: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn load_assets(config: &DesignConfig) -> Result<Assets> {
    let mut warnings = Vec::new();
    let mut meshes = Vec::with_capacity(config.mesh_paths.len());
    for p in &config.mesh_paths {
        let parsed = load_mesh(Path::new(p))?;
        warnings.extend(parsed.warnings.into_iter().map(|w| format!("{p}: {w}")));
        meshes.push(parsed.mesh);
    }
    let backgrounds = config
        .background_paths
        .iter()
        .map(|p| read_image(Path::new(p), config.gsd))
        .collect::<Result<Vec<_>>>()?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Assets {
        meshes,
        backgrounds,
        background_names: config.background_paths.clone(),
        warnings,
    })
}

pub fn world_id(class_id: u32, image_index: u64) -> String {
    format!("{class_id}_{image_index:05}")
}

/// A rendered and labeled world image.
#[derive(Debug, Clone)]
pub struct WorldOutput {
    pub id: String,
    pub scene: Scene,
    pub rgb: RasterImage,
    pub gt: RasterImage,
    /// Boxes extracted from `gt`, in world pixel coordinates.
    pub annotations: Vec<Annotation>,
    pub warnings: Vec<String>,
}

fn generation_error(image: u64) -> impl Fn(&dyn std::fmt::Display) -> Error {
    move |e| Error::Generation {
        image,
        message: e.to_string(),
    }
}

/// Build, render and label world image `image_index` over `texture`.
pub fn render_world(
    config: &DesignConfig,
    meshes: &[Mesh],
    texture: &RasterImage,
    background: Background,
    image_index: u64,
) -> Result<WorldOutput> {
    let fail = generation_error(image_index);
    let id = world_id(config.class_id, image_index);
    let scene = build_scene(config, image_index, background, meshes).map_err(|e| fail(&e))?;
    log::info!(
        "{id}: background {}, solar seed {:#018x}, {} instances, elevation {:.2}, azimuth {:.2}",
        background.index,
        scene.solar_seed,
        scene.instances.len(),
        scene.solar.elevation,
        scene.solar.azimuth,
    );
    for (k, inst) in scene.instances.iter().enumerate() {
        log::debug!("{id}: instance {k} seed {:#018x}", inst.seed);
    }
    let rgb = render_rgb(&scene, meshes, texture, config.ambient).map_err(|e| fail(&e))?;
    let gt = render_gt(&scene, meshes).map_err(|e| fail(&e))?;
    let annotations = extract_boxes(&gt, config.class_id, &id).map_err(|e| fail(&e))?;
    let mut warnings: Vec<String> = rgb.warnings.iter().map(|w| format!("{id}: {w}")).collect();
    if annotations.len() != scene.instances.len() {
        warnings.push(format!(
            "{id}: {} boxes extracted for {} instances",
            annotations.len(),
            scene.instances.len()
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(WorldOutput {
        id,
        scene,
        rgb: rgb.image,
        gt,
        annotations,
        warnings,
    })
}

/// What one world image contributes to the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorldPlan {
    pub image_index: u64,
    pub background_index: usize,
    /// Leading patches (in tile order) kept from this image.
    pub patches: usize,
}

/// Cycle through the backgrounds, one world image each, until
/// `num_patches` tiles are available; the last image may be cut short.
pub fn plan_worlds(config: &DesignConfig, assets: &Assets) -> Result<Vec<WorldPlan>> {
    if assets.backgrounds.is_empty() {
        return Err(Error::Usage("no backgrounds configured".into()));
    }
    let tiles: Vec<usize> = assets
        .backgrounds
        .iter()
        .zip(&assets.background_names)
        .map(|(bg, name)| {
            let n = tile_offsets(bg.width, config.patch_size).len() * tile_offsets(bg.height, config.patch_size).len();
            if n == 0 {
                return Err(Error::invalid(
                    name,
                    format!(
                        "{}x{} background is smaller than patch_size {}",
                        bg.width, bg.height, config.patch_size
                    ),
                ));
            }
            Ok(n)
        })
        .collect::<Result<_>>()?;
    let mut remaining = config.num_patches as usize;
    let mut plans = Vec::new();
    let mut index = 0u64;
    while remaining > 0 {
        let background_index = (index % tiles.len() as u64) as usize;
        let patches = tiles[background_index].min(remaining);
        plans.push(WorldPlan {
            image_index: index,
            background_index,
            patches,
        });
        remaining -= patches;
        index += 1;
    }
    Ok(plans)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateOptions {
    pub workers: usize,
    /// Also write each world image, its GT render and its boxes.
    pub keep_world: bool,
    /// Add 90/180/270 degree copies of every patch.
    pub rotate: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            workers: 1,
            keep_world: false,
            rotate: false,
        }
    }
}

pub fn with_rotations(patches: Vec<Patch>) -> Result<Vec<Patch>> {
    let mut out = Vec::with_capacity(patches.len() * 4);
    for p in patches {
        for angle in ROTATION_ANGLES {
            out.push(rotate_patch(&p, angle).map_err(|e| Error::Usage(e.to_string()))?);
        }
        out.push(p);
    }
    Ok(out)
}

struct WorldResult {
    record: WorldRecord,
    patches: Vec<PatchRecord>,
    warnings: Vec<String>,
}

fn run_world(
    config: &DesignConfig,
    assets: &Assets,
    plan: WorldPlan,
    out_dir: &Path,
    options: GenerateOptions,
) -> Result<WorldResult> {
    let texture = &assets.backgrounds[plan.background_index];
    let background = Background::from_pixels(plan.background_index, texture.width, texture.height, config.gsd);
    let world = render_world(config, &assets.meshes, texture, background, plan.image_index)?;
    let mut patches = tile_image(
        &world.rgb,
        &world.annotations,
        config.patch_size,
        config.min_visibility,
        &world.id,
    )
    .map_err(|e| generation_error(plan.image_index)(&e))?;
    patches.truncate(plan.patches);
    if options.rotate {
        patches = with_rotations(patches)?;
    }
    let records = export_patches(&patches, out_dir)?;
    if options.keep_world {
        let dir = out_dir.join(WORLD_DIR);
        write_png(&dir.join(format!("{}.png", world.id)), &world.rgb)?;
        write_png(&dir.join(format!("{}_gt.png", world.id)), &world.gt)?;
        let txt = dir.join(format!("{}.txt", world.id));
        fs::write(
            &txt,
            format_yolo_rows(&world.annotations, world.gt.width, world.gt.height),
        )
        .map_err(|e| Error::io(&txt, e))?;
    }
    Ok(WorldResult {
        record: WorldRecord {
            id: world.id,
            image_index: plan.image_index,
            background: assets.background_names[plan.background_index].clone(),
            solar: world.scene.solar,
            solar_seed: world.scene.solar_seed,
            instance_count: world.scene.instances.len(),
            patch_count: records.len(),
        },
        patches: records,
        warnings: world.warnings,
    })
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {workers} workers: {e}")))
}

/// Generate the dataset described by `config` into `out_dir`.
///
/// World images are processed in parallel on `options.workers` threads;
/// the files written do not depend on the worker count.
pub fn generate(
    config: &DesignConfig,
    assets: &Assets,
    out_dir: &Path,
    options: GenerateOptions,
) -> Result<DatasetManifest> {
    config.validate()?;
    let plans = plan_worlds(config, assets)?;
    create_dir(out_dir)?;
    if options.keep_world {
        create_dir(&out_dir.join(WORLD_DIR))?;
    }
    log::info!(
        "master seed {} ({:#018x}); {} world images for {} patches on {} workers",
        config.master_seed,
        config.master_seed,
        plans.len(),
        config.num_patches,
        options.workers.max(1)
    );
    let results: Vec<WorldResult> = thread_pool(options.workers)?.install(|| {
        plans
            .par_iter()
            .map(|&p| run_world(config, assets, p, out_dir, options))
            .collect::<Result<_>>()
    })?;

    let mut manifest = DatasetManifest::new(Some(config));
    manifest.warnings = assets.warnings.clone();
    for r in results {
        manifest.world_images.push(r.record);
        manifest.patches.extend(r.patches);
        manifest.warnings.extend(r.warnings);
    }
    manifest.patches.sort_by(|a, b| a.file.cmp(&b.file));
    manifest.generated_at_unix = generation_timestamp();
    write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}
