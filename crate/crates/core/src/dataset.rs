use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::groundtruth::{Annotation, BBox};
use crate::math::round;
use crate::renderer::RasterImage;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("patch size {patch} exceeds image size {width}x{height}")]
    PatchTooLarge { patch: u32, width: u32, height: u32 },
    #[error("patch size must be positive")]
    ZeroPatch,
    #[error("rotation needs a square patch, got {0}x{1}")]
    NotSquare(u32, u32),
    #[error("rotation angle must be 90, 180 or 270, got {0}")]
    BadAngle(u32),
    #[error("line {line}: {message}")]
    Annotation { line: usize, message: String },
}

/// Where a patch was cut from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchOrigin {
    pub world_image_id: String,
    pub x_offset: u32,
    pub y_offset: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Stem used for the patch's image and annotation files.
    pub id: String,
    pub image: RasterImage,
    /// Boxes in patch pixel coordinates.
    pub annotations: Vec<Annotation>,
    pub origin: PatchOrigin,
    /// Degrees counter-clockwise, one of 0, 90, 180, 270.
    pub rotation: u32,
}

/// Tile start offsets along one axis: stride `patch`, with the last tile
/// pulled back to end exactly at the image edge.
pub fn tile_offsets(dim: u32, patch: u32) -> Vec<u32> {
    let mut out = Vec::new();
    if patch == 0 || patch > dim {
        return out;
    }
    let mut x = 0;
    while x + patch <= dim {
        out.push(x);
        x += patch;
    }
    if out.last().map_or(true, |&last| last + patch < dim) {
        out.push(dim - patch);
    }
    out
}

/// Cut a world image into `patch_size` squares and carry its boxes along.
///
/// A box is kept in a tile when at least `min_visibility` of its area falls
/// inside that tile; kept boxes are clipped to the tile.
pub fn tile_image(
    image: &RasterImage,
    annotations: &[Annotation],
    patch_size: u32,
    min_visibility: f64,
    world_image_id: &str,
) -> Result<Vec<Patch>, DatasetError> {
    if patch_size == 0 {
        return Err(DatasetError::ZeroPatch);
    }
    if patch_size > image.width || patch_size > image.height {
        return Err(DatasetError::PatchTooLarge {
            patch: patch_size,
            width: image.width,
            height: image.height,
        });
    }
    let xs = tile_offsets(image.width, patch_size);
    let ys = tile_offsets(image.height, patch_size);
    let mut patches = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let id = format!("{world_image_id}_p{:03}", patches.len());
            let tile = BBox::new(x, y, patch_size, patch_size);
            let annotations = annotations
                .iter()
                .filter_map(|a| {
                    let clipped = a.bbox.intersection(&tile)?;
                    let visible = clipped.area() as f64 / a.bbox.area() as f64;
                    (visible >= min_visibility).then(|| Annotation {
                        class_id: a.class_id,
                        bbox: BBox::new(clipped.x - x, clipped.y - y, clipped.w, clipped.h),
                        image_id: id.clone(),
                    })
                })
                .collect();
            patches.push(Patch {
                image: image.crop(x, y, patch_size, patch_size),
                annotations,
                origin: PatchOrigin {
                    world_image_id: world_image_id.into(),
                    x_offset: x,
                    y_offset: y,
                },
                rotation: 0,
                id,
            });
        }
    }
    Ok(patches)
}

/// Box position after rotating a square of side `s` counter-clockwise.
pub fn rotate_box(b: BBox, s: u32, angle: u32) -> Result<BBox, DatasetError> {
    Ok(match angle {
        90 => BBox::new(b.y, s - b.x - b.w, b.h, b.w),
        180 => BBox::new(s - b.x - b.w, s - b.y - b.h, b.w, b.h),
        270 => BBox::new(s - b.y - b.h, b.x, b.h, b.w),
        other => return Err(DatasetError::BadAngle(other)),
    })
}

/// Rotate a patch and its boxes counter-clockwise by 90, 180 or 270 degrees.
pub fn rotate_patch(patch: &Patch, angle: u32) -> Result<Patch, DatasetError> {
    let (w, h) = (patch.image.width, patch.image.height);
    if w != h {
        return Err(DatasetError::NotSquare(w, h));
    }
    let turns = match angle {
        90 => 1,
        180 => 2,
        270 => 3,
        other => return Err(DatasetError::BadAngle(other)),
    };
    let mut image = patch.image.clone();
    for _ in 0..turns {
        image = image.rotated_ccw();
    }
    let rotation = (patch.rotation + angle) % 360;
    let id = format!("{}_r{angle}", patch.id);
    let mut annotations = patch
        .annotations
        .iter()
        .map(|a| {
            Ok(Annotation {
                class_id: a.class_id,
                bbox: rotate_box(a.bbox, w, angle)?,
                image_id: id.clone(),
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    annotations.sort_by_key(|a| (a.bbox.y, a.bbox.x, a.bbox.h, a.bbox.w));
    Ok(Patch {
        id,
        image,
        annotations,
        origin: patch.origin.clone(),
        rotation,
    })
}

/// `class_id cx cy w h` rows, geometry normalized by the image size, six
/// decimals, one row per box, newline terminated.
pub fn format_yolo_rows(annotations: &[Annotation], width: u32, height: u32) -> String {
    let mut out = String::new();
    let (fw, fh) = (width as f64, height as f64);
    for a in annotations {
        let b = a.bbox;
        let _ = writeln!(
            out,
            "{} {:.6} {:.6} {:.6} {:.6}",
            a.class_id,
            (b.x as f64 + b.w as f64 / 2.0) / fw,
            (b.y as f64 + b.h as f64 / 2.0) / fh,
            b.w as f64 / fw,
            b.h as f64 / fh,
        );
    }
    out
}

/// Inverse of [`format_yolo_rows`], snapping to whole pixels.
pub fn parse_yolo_rows(text: &str, width: u32, height: u32, image_id: &str) -> Result<Vec<Annotation>, DatasetError> {
    let (fw, fh) = (width as f64, height as f64);
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |message: String| DatasetError::Annotation { line, message };
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, got {}", fields.len())));
        }
        let class_id: u32 = fields[0]
            .parse()
            .map_err(|_| err(format!("invalid class id {:?}", fields[0])))?;
        let mut v = [0.0f64; 4];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| err(format!("invalid number {f:?}")))?;
            if !slot.is_finite() || *slot < 0.0 {
                return Err(err(format!("value {f:?} out of range")));
            }
        }
        let [cx, cy, w, h] = v;
        let x0 = round((cx - w / 2.0) * fw).max(0.0);
        let y0 = round((cy - h / 2.0) * fh).max(0.0);
        let x1 = round((cx + w / 2.0) * fw).min(fw);
        let y1 = round((cy + h / 2.0) * fh).min(fh);
        if x1 <= x0 || y1 <= y0 {
            return Err(err("degenerate box".into()));
        }
        out.push(Annotation {
            class_id,
            bbox: BBox::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32),
            image_id: image_id.into(),
        });
    }
    Ok(out)
}
