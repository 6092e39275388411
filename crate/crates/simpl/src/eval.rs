//! Ground-truth and detection files for `simpl eval`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use simpl_core::dataset::parse_yolo_rows;
use simpl_core::metrics::{aggregate_runs, evaluate, Detection, EvalReport};
use simpl_core::{Annotation, BBox};

use crate::error::{Error, Result};

/// `.txt` files directly inside `dir`, sorted by name.
pub fn text_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "txt") && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub(crate) fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Normalized annotation files. Each file's pixel size comes from the
/// sibling `.png`, or from `image_size` when given.
pub fn load_ground_truth(dir: &Path, image_size: Option<u32>) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for path in text_files(dir)? {
        let (w, h) = match image_size {
            Some(s) => (s, s),
            None => {
                let png = path.with_extension("png");
                image::image_dimensions(&png).map_err(|source| Error::Image { path: png, source })?
            }
        };
        let rows = parse_yolo_rows(&read_text(&path)?, w, h, &stem(&path)).map_err(|e| Error::invalid(&path, e))?;
        out.extend(rows);
    }
    Ok(out)
}

/// Rows of `class_id confidence x y w h`, geometry in pixels.
pub fn parse_detections(text: &str, image_id: &str) -> std::result::Result<Vec<Detection>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let line = i + 1;
        if fields.len() != 6 {
            return Err(format!("line {line}: expected 6 fields, got {}", fields.len()));
        }
        let class_id: u32 = fields[0]
            .parse()
            .map_err(|_| format!("line {line}: bad class id {:?}", fields[0]))?;
        let mut nums = [0.0f64; 5];
        for (n, f) in nums.iter_mut().zip(&fields[1..]) {
            *n = f
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| format!("line {line}: bad number {f:?}"))?;
        }
        let [confidence, x, y, w, h] = nums;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(format!("line {line}: confidence {confidence} outside [0, 1]"));
        }
        let (x, y, w, h) = (x.round(), y.round(), w.round(), h.round());
        if x < 0.0 || y < 0.0 || w < 1.0 || h < 1.0 {
            return Err(format!("line {line}: degenerate or negative box"));
        }
        out.push(Detection {
            image_id: image_id.into(),
            class_id,
            bbox: BBox::new(x as u32, y as u32, w as u32, h as u32),
            confidence,
        });
    }
    Ok(out)
}

pub fn load_detections(dir: &Path) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for path in text_files(dir)? {
        out.extend(parse_detections(&read_text(&path)?, &stem(&path)).map_err(|e| Error::invalid(&path, e))?);
    }
    Ok(out)
}

/// SHA-256 over the names and contents of a directory's `.txt` files.
pub fn digest_dir(dir: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for path in text_files(dir)? {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    fn of(dir: &Path) -> Result<Self> {
        Ok(InputDigest {
            path: dir.display().to_string(),
            sha256: digest_dir(dir)?,
        })
    }
}

/// Everything `simpl eval` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub ground_truth: InputDigest,
    pub detections: Vec<InputDigest>,
    /// Mean over `runs`.
    pub report: EvalReport,
    pub runs: Vec<EvalReport>,
}

/// Score one or more detection runs against the same ground truth.
pub fn run_eval(
    gt_dir: &Path,
    det_dirs: &[PathBuf],
    area_km2: f64,
    alphas: &[f64],
    image_size: Option<u32>,
) -> Result<EvalOutput> {
    if det_dirs.is_empty() {
        return Err(Error::Usage("at least one detection directory is required".into()));
    }
    let gts = load_ground_truth(gt_dir, image_size)?;
    let mut runs = Vec::with_capacity(det_dirs.len());
    let mut detections = Vec::with_capacity(det_dirs.len());
    for dir in det_dirs {
        let dets = load_detections(dir)?;
        runs.push(evaluate(&dets, &gts, area_km2, alphas)?);
        detections.push(InputDigest::of(dir)?);
    }
    Ok(EvalOutput {
        ground_truth: InputDigest::of(gt_dir)?,
        detections,
        report: aggregate_runs(&runs)?,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detection_rows_parse_and_reject() {
        let d = parse_detections("1 0.9 10 20 30 40\n\n2 0.5 0.4 0 5.6 5\n", "img").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].bbox, BBox::new(10, 20, 30, 40));
        assert_eq!(d[1].bbox, BBox::new(0, 0, 6, 5));
        assert!(parse_detections("1 1.5 0 0 1 1", "i")
            .unwrap_err()
            .contains("confidence"));
        assert!(parse_detections("1 0.5 0 0 1", "i").unwrap_err().contains("line 1"));
        assert!(parse_detections("1 0.5 0 0 0 4", "i").is_err());
        assert!(parse_detections("x 0.5 0 0 1 1", "i").is_err());
    }

    #[test]
    fn eval_over_directories() {
        let gt = tempfile::tempdir().unwrap();
        let det = tempfile::tempdir().unwrap();
        fs::write(gt.path().join("a.txt"), "1 0.500000 0.500000 0.100000 0.100000\n").unwrap();
        fs::write(det.path().join("a.txt"), "1 0.8 45 45 10 10\n1 0.3 0 0 5 5\n").unwrap();
        let out = run_eval(gt.path(), &[det.path().to_path_buf()], 4.0, &[0.0, 1.0], Some(100)).unwrap();
        assert_eq!(out.report.ap50, 1.0);
        assert_eq!(out.report.recall(1.0), Some(1.0));
        assert_eq!(out.ground_truth.sha256.len(), 64);
        // Full recall is already reached at 0.8, before the false alarm.
        assert_eq!(out.report.recall_at[1].threshold, Some(0.8));
        assert_eq!(out.report.recall_at[1].fp, 0.0);
    }

    #[test]
    fn digest_tracks_content() {
        let d = tempfile::tempdir().unwrap();
        fs::write(d.path().join("a.txt"), "x").unwrap();
        let h1 = digest_dir(d.path()).unwrap();
        fs::write(d.path().join("a.txt"), "y").unwrap();
        assert_ne!(h1, digest_dir(d.path()).unwrap());
    }
}
