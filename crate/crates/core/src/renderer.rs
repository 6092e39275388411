//! Nadir orthographic rasterizer.
//!
//! Pixel `(col, row)` images the ground square `[col, col + 1) x [row, row + 1)`
//! scaled by the GSD, and is covered by a triangle when its centre lies inside
//! the triangle's ground projection (edges inclusive). There is no
//! anti-aliasing, so the RGB and ground-truth passes cover exactly the same
//! pixels.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::geom::{Vec2, Vec3};
use crate::math::{cos, round, sin, tan, to_radians};
use crate::mesh::Mesh;
use crate::sampler::SolarParams;
use crate::scene::Scene;

/// Elevations below this are raised to it before shadow projection.
pub const MIN_ELEVATION_DEG: f64 = 1.0;

pub const GT_TARGET: u8 = 0;
pub const GT_GROUND: u8 = 255;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("background must have 1 or 3 channels, got {0}")]
    BackgroundChannels(u8),
    #[error("background is empty")]
    EmptyBackground,
    #[error("instance references mesh {index} but only {count} meshes were given")]
    MissingMesh { index: usize, count: usize },
}

/// 8-bit raster, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub data: Vec<u8>,
    /// Meters per pixel, stored as raw bits so the image stays `Eq`.
    gsd_bits: u64,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, gsd: f64) -> Self {
        Self::filled(width, height, channels, gsd, 0)
    }

    pub fn filled(width: u32, height: u32, channels: u8, gsd: f64, value: u8) -> Self {
        RasterImage {
            width,
            height,
            channels,
            data: vec![value; width as usize * height as usize * channels as usize],
            gsd_bits: gsd.to_bits(),
        }
    }

    /// Wrap an existing buffer. Returns `None` if the length does not match.
    pub fn from_raw(width: u32, height: u32, channels: u8, gsd: f64, data: Vec<u8>) -> Option<Self> {
        (data.len() == width as usize * height as usize * channels as usize).then_some(RasterImage {
            width,
            height,
            channels,
            data,
            gsd_bits: gsd.to_bits(),
        })
    }

    pub fn gsd(&self) -> f64 {
        f64::from_bits(self.gsd_bits)
    }

    pub fn set_gsd(&mut self, gsd: f64) {
        self.gsd_bits = gsd.to_bits();
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u8] {
        let o = self.offset(x, y);
        let c = self.channels as usize;
        &mut self.data[o..o + c]
    }

    /// Copy of the `w` x `h` window at `(x, y)`. The window must fit.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> RasterImage {
        assert!(x + w <= self.width && y + h <= self.height, "crop window out of bounds");
        let c = self.channels as usize;
        let mut data = Vec::with_capacity(w as usize * h as usize * c);
        for row in y..y + h {
            let start = self.offset(x, row);
            data.extend_from_slice(&self.data[start..start + w as usize * c]);
        }
        RasterImage {
            width: w,
            height: h,
            channels: self.channels,
            data,
            gsd_bits: self.gsd_bits,
        }
    }

    /// Rotate 90 degrees counter-clockwise: source `(x, y)` lands on
    /// `(y, width - 1 - x)`.
    pub fn rotated_ccw(&self) -> RasterImage {
        let (w, h) = (self.width, self.height);
        let mut out = RasterImage {
            width: h,
            height: w,
            channels: self.channels,
            data: vec![0; self.data.len()],
            gsd_bits: self.gsd_bits,
        };
        for y in 0..h {
            for x in 0..w {
                let src = self.offset(x, y);
                let dst = out.offset(y, w - 1 - x);
                let c = self.channels as usize;
                out.data[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        out
    }
}

/// Lighting derived from one image's solar draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadingModel {
    pub ambient: f64,
    /// Unit vector pointing toward the sun.
    pub sun_dir: Vec3,
    pub intensity: f64,
    /// Elevation actually used, after clamping.
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
}

impl ShadingModel {
    /// Returns the model and, if the elevation had to be raised, a warning.
    pub fn new(ambient: f64, solar: &SolarParams) -> (Self, Option<String>) {
        let mut warning = None;
        let mut elevation = solar.elevation;
        if elevation.is_nan() || elevation < MIN_ELEVATION_DEG {
            warning = Some(format!(
                "solar elevation {elevation} deg clamped to {MIN_ELEVATION_DEG} deg for shadow projection"
            ));
            elevation = MIN_ELEVATION_DEG;
        }
        let (el, az) = (to_radians(elevation), to_radians(solar.azimuth));
        // Azimuth is a compass bearing: 0 = north = -y, 90 = east = +x.
        let sun_dir = Vec3::new(cos(el) * sin(az), -cos(el) * cos(az), sin(el));
        (
            ShadingModel {
                ambient,
                sun_dir,
                intensity: solar.intensity,
                elevation_deg: elevation,
                azimuth_deg: solar.azimuth,
            },
            warning,
        )
    }

    /// Multiplier for a surface with upward-facing unit normal `n`.
    pub fn surface(&self, n: Vec3) -> f64 {
        (self.ambient + self.intensity * n.dot(self.sun_dir).max(0.0)).min(1.0)
    }

    /// Multiplier for lit ground, normalized so that intensity 1 with the sun
    /// at zenith leaves the background unchanged.
    pub fn ground(&self) -> f64 {
        let raw = self.ambient + self.intensity * sin(to_radians(self.elevation_deg));
        (raw / (self.ambient + 1.0)).min(1.0)
    }

    pub fn shadowed_ground(&self) -> f64 {
        self.ambient
    }

    /// Horizontal ground offset, meters per meter of height, of a shadow
    /// cast by a point above the ground.
    pub fn shadow_offset_per_meter(&self) -> Vec2 {
        let az = to_radians(self.azimuth_deg);
        let reach = 1.0 / tan(to_radians(self.elevation_deg));
        Vec2::new(-sin(az) * reach, cos(az) * reach)
    }
}

/// Everything the RGB pass produces, including the masks used to audit it.
#[derive(Debug, Clone)]
pub struct RgbRender {
    pub image: RasterImage,
    /// Pixels rasterized as target surface.
    pub coverage: Vec<bool>,
    /// Pixels inside any projected shadow (before occlusion by targets).
    pub shadow: Vec<bool>,
    pub warnings: Vec<String>,
}

fn quantize(v: f64) -> u8 {
    round(v).clamp(0.0, 255.0) as u8
}

/// Triangle in pixel space with per-vertex height.
struct ScreenTri {
    p: [Vec2; 3],
    z: [f64; 3],
}

/// Visit every pixel whose centre lies inside the triangle, with the
/// interpolated height there. Degenerate (edge-on) triangles cover nothing.
fn raster_triangle(tri: &ScreenTri, width: u32, height: u32, mut visit: impl FnMut(u32, u32, f64)) {
    let [a, b, c] = tri.p;
    let area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if area.abs() < 1e-12 {
        return;
    }
    let sign = if area > 0.0 { 1.0 } else { -1.0 };
    let inv_area = 1.0 / area.abs();

    let min_x = a.x.min(b.x).min(c.x);
    let max_x = a.x.max(b.x).max(c.x);
    let min_y = a.y.min(b.y).min(c.y);
    let max_y = a.y.max(b.y).max(c.y);
    // Centres at k + 0.5 within [min, max].
    let col0 = crate::math::ceil(min_x - 0.5).max(0.0);
    let col1 = crate::math::floor(max_x - 0.5).min(width as f64 - 1.0);
    let row0 = crate::math::ceil(min_y - 0.5).max(0.0);
    let row1 = crate::math::floor(max_y - 0.5).min(height as f64 - 1.0);
    if col0 > col1 || row0 > row1 {
        return;
    }

    let edge = |p: Vec2, q: Vec2, x: f64, y: f64| sign * ((q.x - p.x) * (y - p.y) - (q.y - p.y) * (x - p.x));
    for row in row0 as u32..=row1 as u32 {
        let y = row as f64 + 0.5;
        for col in col0 as u32..=col1 as u32 {
            let x = col as f64 + 0.5;
            let w0 = edge(b, c, x, y);
            let w1 = edge(c, a, x, y);
            let w2 = edge(a, b, x, y);
            if w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0 {
                let z = (w0 * tri.z[0] + w1 * tri.z[1] + w2 * tri.z[2]) * inv_area;
                visit(col, row, z);
            }
        }
    }
}

fn check_meshes(scene: &Scene, meshes: &[Mesh]) -> Result<(), RenderError> {
    for inst in &scene.instances {
        if inst.mesh_ref >= meshes.len() {
            return Err(RenderError::MissingMesh {
                index: inst.mesh_ref,
                count: meshes.len(),
            });
        }
    }
    Ok(())
}

/// Rasterize every target triangle, calling `visit(pixel_index, instance,
/// shade_normal, height)` for each covered pixel. Both passes go through
/// here, which is what makes them congruent.
fn rasterize_targets(
    scene: &Scene,
    meshes: &[Mesh],
    width: u32,
    height: u32,
    mut visit: impl FnMut(usize, usize, Vec3, f64),
) {
    let inv_gsd = 1.0 / scene.gsd();
    for (i, inst) in scene.instances.iter().enumerate() {
        let mesh = &meshes[inst.mesh_ref];
        let world: Vec<Vec3> = mesh.posed_vertices(&inst.pose).collect();
        for t in &mesh.triangles {
            let v = [world[t[0] as usize], world[t[1] as usize], world[t[2] as usize]];
            let mut n = (v[1] - v[0]).cross(v[2] - v[0]);
            let len = n.norm();
            if len == 0.0 {
                continue;
            }
            n = Vec3::new(n.x / len, n.y / len, n.z / len);
            if n.z < 0.0 {
                n = Vec3::new(-n.x, -n.y, -n.z);
            }
            let tri = ScreenTri {
                p: v.map(|p| Vec2::new(p.x * inv_gsd, p.y * inv_gsd)),
                z: v.map(|p| p.z),
            };
            raster_triangle(&tri, width, height, |col, row, z| {
                visit(row as usize * width as usize + col as usize, i, n, z)
            });
        }
    }
}

fn shadow_mask(scene: &Scene, meshes: &[Mesh], shading: &ShadingModel, width: u32, height: u32) -> Vec<bool> {
    let mut mask = vec![false; width as usize * height as usize];
    let inv_gsd = 1.0 / scene.gsd();
    let reach = shading.shadow_offset_per_meter();
    for inst in &scene.instances {
        let mesh = &meshes[inst.mesh_ref];
        let ground: Vec<Vec2> = mesh
            .posed_vertices(&inst.pose)
            .map(|p| (Vec2::new(p.x, p.y) + reach * p.z) * inv_gsd)
            .collect();
        for t in &mesh.triangles {
            let tri = ScreenTri {
                p: [ground[t[0] as usize], ground[t[1] as usize], ground[t[2] as usize]],
                z: [0.0; 3],
            };
            raster_triangle(&tri, width, height, |col, row, _| {
                mask[row as usize * width as usize + col as usize] = true;
            });
        }
    }
    mask
}

/// Shaded RGB image of the scene over `background`.
///
/// The background is sampled one texel per output pixel, repeating if it is
/// smaller than the tile. Grayscale backgrounds are replicated to RGB.
pub fn render_rgb(
    scene: &Scene,
    meshes: &[Mesh],
    background: &RasterImage,
    ambient: f64,
) -> Result<RgbRender, RenderError> {
    check_meshes(scene, meshes)?;
    if background.channels != 1 && background.channels != 3 {
        return Err(RenderError::BackgroundChannels(background.channels));
    }
    if background.width == 0 || background.height == 0 {
        return Err(RenderError::EmptyBackground);
    }
    let (width, height) = scene.background.pixel_dims();
    let (shading, warning) = ShadingModel::new(ambient, &scene.solar);
    let n = width as usize * height as usize;

    let mut depth = vec![f64::NEG_INFINITY; n];
    let mut surface: Vec<Option<(usize, f64)>> = vec![None; n];
    rasterize_targets(scene, meshes, width, height, |px, inst, normal, z| {
        if z > depth[px] {
            depth[px] = z;
            surface[px] = Some((inst, shading.surface(normal)));
        }
    });
    drop(depth);
    let shadow = shadow_mask(scene, meshes, &shading, width, height);

    let lit = shading.ground();
    let dark = shading.shadowed_ground();
    let mut image = RasterImage::new(width, height, 3, scene.gsd());
    let mut coverage = vec![false; n];
    let (tw, th) = (background.width as usize, background.height as usize);
    for row in 0..height as usize {
        let trow = row % th;
        for col in 0..width as usize {
            let px = row * width as usize + col;
            let out = &mut image.data[px * 3..px * 3 + 3];
            match surface[px] {
                Some((inst, k)) => {
                    coverage[px] = true;
                    let color = scene.instances[inst].props.color;
                    for (o, c) in out.iter_mut().zip(color) {
                        *o = quantize(c * k);
                    }
                }
                None => {
                    let k = if shadow[px] { dark } else { lit };
                    let t = (trow * tw + col % tw) * background.channels as usize;
                    for (ch, o) in out.iter_mut().enumerate() {
                        let texel = if background.channels == 3 {
                            background.data[t + ch]
                        } else {
                            background.data[t]
                        };
                        *o = quantize(texel as f64 * k);
                    }
                }
            }
        }
    }

    Ok(RgbRender {
        image,
        coverage,
        shadow,
        warnings: warning.into_iter().collect(),
    })
}

/// Single-channel label render: targets black, ground white.
pub fn render_gt(scene: &Scene, meshes: &[Mesh]) -> Result<RasterImage, RenderError> {
    check_meshes(scene, meshes)?;
    let (width, height) = scene.background.pixel_dims();
    let mut image = RasterImage::filled(width, height, 1, scene.gsd(), GT_GROUND);
    rasterize_targets(scene, meshes, width, height, |px, _, _, _| {
        image.data[px] = GT_TARGET;
    });
    Ok(image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{box_mesh, Pose};
    use crate::sampler::InstanceProps;
    use crate::scene::{Background, SceneInstance};

    fn instance(mesh: &Mesh, mesh_ref: usize, pos: Vec2, heading: f64, color: [f64; 3]) -> SceneInstance {
        let pose = Pose::new(pos, heading, Vec3::new(1.0, 1.0, 1.0));
        SceneInstance {
            props: InstanceProps {
                color,
                size: [1.0, 1.0],
                heading,
                mesh_choice: mesh_ref,
            },
            pose,
            mesh_ref,
            footprint: mesh.oriented_footprint(&pose),
            seed: 0,
        }
    }

    fn scene(instances: Vec<SceneInstance>, solar: SolarParams, w: f64, h: f64) -> Scene {
        Scene {
            background: Background::from_meters(0, w, h, 0.3),
            instances,
            solar,
            image_index: 0,
            solar_seed: 0,
        }
    }

    fn noise_background(w: u32, h: u32) -> RasterImage {
        let mut img = RasterImage::new(w, h, 3, 0.3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i.wrapping_mul(2_654_435_761) >> 7) as u8;
        }
        img
    }

    #[test]
    fn empty_scene_at_zenith_reproduces_background() {
        let bg = noise_background(100, 80);
        let s = scene(vec![], SolarParams::new(90.0, 0.0, 1.0), 30.0, 24.0);
        let out = render_rgb(&s, &[], &bg, 0.3).unwrap();
        assert_eq!(out.image, bg);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn km2_dimensions() {
        let s = scene(vec![], SolarParams::new(90.0, 0.0, 1.0), 1000.0, 1000.0);
        let gt = render_gt(&s, &[]).unwrap();
        assert_eq!((gt.width, gt.height), (3333, 3333));
        assert!(gt.data.iter().all(|&v| v == GT_GROUND));
    }

    #[test]
    fn sun_direction_is_unit() {
        for (e, a) in [(10.0, 0.0), (45.0, 137.0), (89.0, 359.0)] {
            let (m, _) = ShadingModel::new(0.3, &SolarParams::new(e, a, 1.0));
            assert!((m.sun_dir.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_elevation_is_clamped_with_warning() {
        let (m, w) = ShadingModel::new(0.3, &SolarParams::new(0.0, 0.0, 1.0));
        assert_eq!(m.elevation_deg, MIN_ELEVATION_DEG);
        assert!(w.is_some());
        let s = scene(vec![], SolarParams::new(0.0, 0.0, 1.0), 3.0, 3.0);
        let out = render_rgb(&s, &[], &noise_background(4, 4), 0.3).unwrap();
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn post_shadow_length_at_45() {
        let h = 30.0;
        let post = box_mesh("post", Vec3::new(0.6, 0.6, h));
        // Sun in the east: the shadow runs west (-x).
        let inst = instance(&post, 0, Vec2::new(60.0, 15.0), 0.0, [200.0; 3]);
        let s = scene(vec![inst], SolarParams::new(45.0, 90.0, 1.0), 90.0, 30.0);
        let out = render_rgb(&s, &[post], &noise_background(8, 8), 0.3).unwrap();
        let w = out.image.width as usize;
        let cols = |mask: &[bool]| {
            mask.iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(i, _)| i % w)
                .min()
                .unwrap()
        };
        let base = cols(&out.coverage) as f64;
        let tip = cols(&out.shadow) as f64;
        assert!(((base - tip) - h / 0.3).abs() <= 2.0, "{base} {tip}");
    }

    #[test]
    fn tall_box_wins_depth_test() {
        let plate = box_mesh("plate", Vec3::new(6.0, 6.0, 0.1));
        let tower = box_mesh("tower", Vec3::new(2.0, 2.0, 5.0));
        let a = instance(&plate, 0, Vec2::new(3.0, 3.0), 0.0, [255.0, 0.0, 0.0]);
        let b = instance(&tower, 1, Vec2::new(5.0, 5.0), 0.0, [0.0, 0.0, 255.0]);
        for order in [vec![a.clone(), b.clone()], vec![b, a]] {
            let s = scene(order, SolarParams::new(90.0, 0.0, 1.0), 12.0, 12.0);
            let out = render_rgb(&s, &[plate.clone(), tower.clone()], &noise_background(4, 4), 0.3).unwrap();
            // Centre of the tower, (6 m, 6 m) -> pixel 20.
            assert_eq!(out.image.pixel(20, 20), &[0, 0, 255]);
            assert_eq!(out.image.pixel(11, 11), &[255, 0, 0]);
        }
    }

    #[test]
    fn gt_matches_rgb_coverage() {
        let m = box_mesh("b", Vec3::new(7.0, 3.0, 2.0));
        let insts = vec![
            instance(&m, 0, Vec2::new(10.0, 10.0), 33.0, [50.0; 3]),
            instance(&m, 0, Vec2::new(30.0, 20.0), 210.0, [90.0; 3]),
        ];
        let s = scene(insts, SolarParams::new(30.0, 200.0, 1.2), 45.0, 36.0);
        let rgb = render_rgb(&s, std::slice::from_ref(&m), &noise_background(16, 16), 0.3).unwrap();
        let gt = render_gt(&s, &[m]).unwrap();
        for (c, g) in rgb.coverage.iter().zip(&gt.data) {
            assert_eq!(*c, *g == GT_TARGET);
        }
        assert!(rgb.coverage.iter().any(|&c| c));
    }

    #[test]
    fn single_instance_bounds_match_projection() {
        let m = box_mesh("b", Vec3::new(9.0, 4.0, 2.0));
        let inst = instance(&m, 0, Vec2::new(15.0, 12.0), 20.0, [0.0; 3]);
        let expect = inst.pixel_bounds(&m, 0.3);
        let s = scene(vec![inst], SolarParams::new(60.0, 0.0, 1.0), 36.0, 30.0);
        let gt = render_gt(&s, &[m]).unwrap();
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for y in 0..gt.height {
            for x in 0..gt.width {
                if gt.pixel(x, y)[0] == GT_TARGET {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        assert!((x0 as f64 - expect.min.x).abs() <= 1.0);
        assert!((y0 as f64 - expect.min.y).abs() <= 1.0);
        assert!((x1 as f64 - expect.max.x).abs() <= 1.0);
        assert!((y1 as f64 - expect.max.y).abs() <= 1.0);
    }

    #[test]
    fn deterministic_bytes() {
        let m = box_mesh("b", Vec3::new(7.0, 3.0, 2.0));
        let insts = vec![instance(&m, 0, Vec2::new(10.0, 10.0), 33.0, [50.0; 3])];
        let s = scene(insts, SolarParams::new(30.0, 200.0, 1.2), 30.0, 30.0);
        let a = render_rgb(&s, std::slice::from_ref(&m), &noise_background(16, 16), 0.3).unwrap();
        let b = render_rgb(&s, &[m], &noise_background(16, 16), 0.3).unwrap();
        assert_eq!(a.image, b.image);
    }

    #[test]
    fn rotation_and_crop() {
        let mut img = RasterImage::new(3, 2, 1, 1.0);
        img.data.copy_from_slice(&[1, 2, 3, 4, 5, 6]);
        let r = img.rotated_ccw();
        assert_eq!((r.width, r.height), (2, 3));
        assert_eq!(r.data, [3, 6, 2, 5, 1, 4]);
        let full = r.rotated_ccw().rotated_ccw().rotated_ccw();
        assert_eq!(full, img);
        assert_eq!(img.crop(1, 0, 2, 2).data, [2, 3, 5, 6]);
    }

    #[test]
    fn missing_mesh_is_an_error() {
        let m = box_mesh("b", Vec3::new(1.0, 1.0, 1.0));
        let inst = instance(&m, 3, Vec2::new(5.0, 5.0), 0.0, [0.0; 3]);
        let s = scene(vec![inst], SolarParams::new(60.0, 0.0, 1.0), 10.0, 10.0);
        assert_eq!(
            render_gt(&s, &[m]),
            Err(RenderError::MissingMesh { index: 3, count: 1 })
        );
    }
}
