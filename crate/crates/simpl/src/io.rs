//! Mesh and image files.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};
use simpl_core::mesh::{parse_obj, ParsedObj};
use simpl_core::RasterImage;

use crate::error::{Error, Result};

/// Load a Wavefront OBJ file. The mesh is named after the file stem.
pub fn load_mesh(path: &Path) -> Result<ParsedObj> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    parse_obj(&name, &text).map_err(|e| Error::invalid(path, e))
}

/// Read an image as 8-bit gray (if stored as gray) or RGB.
pub fn read_image(path: &Path, gsd: f64) -> Result<RasterImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })?;
    let (w, h, channels, data) = match img {
        DynamicImage::ImageLuma8(g) => (g.width(), g.height(), 1, g.into_raw()),
        other => {
            let rgb = other.into_rgb8();
            (rgb.width(), rgb.height(), 3, rgb.into_raw())
        }
    };
    Ok(RasterImage::from_raw(w, h, channels, gsd, data).expect("decoder buffer matches its dimensions"))
}

pub fn write_png(path: &Path, img: &RasterImage) -> Result<()> {
    let color = match img.channels {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        c => return Err(Error::invalid(path, format!("cannot write a {c}-channel image"))),
    };
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    PngEncoder::new_with_quality(BufWriter::new(file), CompressionType::Fast, FilterType::Adaptive)
        .write_image(&img.data, img.width, img.height, color)
        .map_err(|source| Error::Image {
            path: path.into(),
            source,
        })
}
