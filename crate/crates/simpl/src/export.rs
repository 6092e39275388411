//! Patch files on disk and the dataset manifest.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use simpl_core::dataset::{format_yolo_rows, Patch, PatchOrigin};
use simpl_core::sampler::SolarParams;
use simpl_core::DesignConfig;

use crate::error::{Error, Result};
use crate::io::write_png;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub file: String,
    pub annotation_file: String,
    pub origin: PatchOrigin,
    pub rotation: u32,
    pub annotation_count: usize,
}

/// One rendered world image, enough to re-render it alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldRecord {
    pub id: String,
    pub image_index: u64,
    pub background: String,
    pub solar: SolarParams,
    pub solar_seed: u64,
    pub instance_count: usize,
    pub patch_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub master_seed: Option<u64>,
    pub config: Option<DesignConfig>,
    pub world_images: Vec<WorldRecord>,
    /// Sorted by file name.
    pub patches: Vec<PatchRecord>,
    pub warnings: Vec<String>,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub generated_at_unix: u64,
}

impl DatasetManifest {
    pub fn new(config: Option<&DesignConfig>) -> Self {
        DatasetManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            tool_version: TOOL_VERSION.into(),
            master_seed: config.map(|c| c.master_seed),
            config: config.cloned(),
            world_images: Vec::new(),
            patches: Vec::new(),
            warnings: Vec::new(),
            generated_at_unix: 0,
        }
    }

    pub fn annotation_total(&self) -> usize {
        self.patches.iter().map(|p| p.annotation_count).sum()
    }
}

pub fn generation_timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
    {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn export_patch(patch: &Patch, dir: &Path) -> Result<PatchRecord> {
    let file = format!("{}.png", patch.id);
    let annotation_file = format!("{}.txt", patch.id);
    write_png(&dir.join(&file), &patch.image)?;
    let rows = format_yolo_rows(&patch.annotations, patch.image.width, patch.image.height);
    let txt = dir.join(&annotation_file);
    fs::write(&txt, rows).map_err(|e| Error::io(&txt, e))?;
    Ok(PatchRecord {
        file,
        annotation_file,
        origin: patch.origin.clone(),
        rotation: patch.rotation,
        annotation_count: patch.annotations.len(),
    })
}

/// Write each patch's PNG and annotation file into `dir`. Patches without
/// boxes still get an (empty) annotation file.
pub fn export_patches(patches: &[Patch], dir: &Path) -> Result<Vec<PatchRecord>> {
    patches.par_iter().map(|p| export_patch(p, dir)).collect()
}

pub fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(&path, e))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Export `patches` and a manifest describing them into `out_dir`.
pub fn export_dataset(patches: &[Patch], out_dir: &Path, config: Option<&DesignConfig>) -> Result<DatasetManifest> {
    create_dir(out_dir)?;
    let mut manifest = DatasetManifest::new(config);
    manifest.patches = export_patches(patches, out_dir)?;
    manifest.patches.sort_by(|a, b| a.file.cmp(&b.file));
    manifest.generated_at_unix = generation_timestamp();
    write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}
