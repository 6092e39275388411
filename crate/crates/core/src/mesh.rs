use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geom::{heading_cs, Aabb, OrientedRect, Vec2, Vec3};
use crate::math::sqrt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: face index {index} out of range for {count} vertices")]
    IndexOutOfRange { line: usize, index: i64, count: usize },
    #[error("mesh has no triangles")]
    Empty,
    #[error("model footprint is degenerate ({length} x {width} m)")]
    DegenerateFootprint { length: f64, width: f64 },
    #[error("target size must be positive, got ({0}, {1})")]
    InvalidTargetSize(f64, f64),
}

/// Immutable triangle mesh in model space (meters, `z` up, resting on `z = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub name: String,
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

/// Placement of a mesh on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// World position (meters) of the model origin.
    pub position: Vec2,
    /// Degrees in `[0, 360)`.
    pub heading: f64,
    pub scale: Vec3,
}

impl Pose {
    pub fn new(position: Vec2, heading: f64, scale: Vec3) -> Self {
        Pose {
            position,
            heading: crate::math::rem_euclid(heading, 360.0),
            scale,
        }
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let p = Vec2::new(v.x * self.scale.x, v.y * self.scale.y).rotate(heading_cs(self.heading)) + self.position;
        Vec3::new(p.x, p.y, v.z * self.scale.z)
    }
}

/// Result of parsing an OBJ document.
#[derive(Debug, Clone)]
pub struct ParsedObj {
    pub mesh: Mesh,
    /// One line per ignored record type, with its occurrence count.
    pub warnings: Vec<String>,
}

/// Parse the `v` / `f` subset of Wavefront OBJ.
///
/// Faces with more than three corners are fan-triangulated. Indices are
/// 1-based; negative indices count back from the latest vertex. Anything
/// after a `/` in a face corner (texture/normal refs) is ignored. The
/// result is translated so its lowest vertex sits at `z = 0`.
pub fn parse_obj(name: &str, text: &str) -> Result<ParsedObj, MeshError> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<(usize, Vec<i64>)> = Vec::new();
    let mut ignored: Vec<(String, usize)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut fields = content.split_whitespace();
        let Some(tag) = fields.next() else { continue };
        match tag {
            "v" => {
                let mut xyz = [0.0f64; 3];
                for c in &mut xyz {
                    let tok = fields.next().ok_or_else(|| MeshError::Parse {
                        line,
                        message: "vertex needs three coordinates".into(),
                    })?;
                    *c = tok.parse().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("invalid coordinate {tok:?}"),
                    })?;
                    if !c.is_finite() {
                        return Err(MeshError::Parse {
                            line,
                            message: format!("non-finite coordinate {tok:?}"),
                        });
                    }
                }
                // An optional fourth `w` component is allowed and ignored.
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            "f" => {
                let mut idx = Vec::new();
                for tok in fields {
                    let head = tok.split('/').next().unwrap_or("");
                    let v: i64 = head.parse().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("invalid face index {tok:?}"),
                    })?;
                    let resolved = if v < 0 { vertices.len() as i64 + v } else { v - 1 };
                    if v == 0 || resolved < 0 {
                        return Err(MeshError::IndexOutOfRange {
                            line,
                            index: v,
                            count: vertices.len(),
                        });
                    }
                    idx.push(resolved);
                }
                if idx.len() < 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: "face needs at least three vertices".into(),
                    });
                }
                faces.push((line, idx));
            }
            other => match ignored.iter_mut().find(|(t, _)| t == other) {
                Some((_, n)) => *n += 1,
                None => ignored.push((other.to_string(), 1)),
            },
        }
    }

    // Forward references are legal in OBJ, so ranges are checked at the end.
    let mut triangles = Vec::new();
    for (line, idx) in faces {
        for &v in &idx {
            if v as usize >= vertices.len() {
                return Err(MeshError::IndexOutOfRange {
                    line,
                    index: v + 1,
                    count: vertices.len(),
                });
            }
        }
        for k in 1..idx.len() - 1 {
            triangles.push([idx[0] as u32, idx[k] as u32, idx[k + 1] as u32]);
        }
    }
    if triangles.is_empty() {
        return Err(MeshError::Empty);
    }

    let min_z = vertices.iter().map(|v| v.z).fold(f64::INFINITY, f64::min);
    for v in &mut vertices {
        v.z -= min_z;
    }

    let warnings = ignored
        .into_iter()
        .map(|(t, n)| format!("{name}: ignored {n} `{t}` record(s)"))
        .collect();
    Ok(ParsedObj {
        mesh: Mesh {
            name: name.to_string(),
            vertices,
            triangles,
        },
        warnings,
    })
}

/// World-axis extent of a posed mesh's ground projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    /// `(x, y)` world extent in meters.
    pub extent: [f64; 2],
    pub half_extents: [f64; 2],
    pub bounds: Aabb,
}

impl Mesh {
    /// Plan-view bounds in model space.
    pub fn model_footprint(&self) -> Aabb {
        let mut bb = Aabb::empty();
        for v in &self.vertices {
            bb.include(Vec2::new(v.x, v.y));
        }
        bb
    }

    pub fn height(&self) -> f64 {
        self.vertices.iter().map(|v| v.z).fold(0.0, f64::max)
    }

    /// Mesh vertices transformed into the world.
    pub fn posed_vertices<'a>(&'a self, pose: &'a Pose) -> impl Iterator<Item = Vec3> + 'a {
        self.vertices.iter().map(move |v| pose.apply(*v))
    }

    pub fn footprint_extent(&self, pose: &Pose) -> Footprint {
        let mut bounds = Aabb::empty();
        for v in self.posed_vertices(pose) {
            bounds.include(Vec2::new(v.x, v.y));
        }
        let extent = [bounds.width(), bounds.height()];
        Footprint {
            extent,
            half_extents: [extent[0] / 2.0, extent[1] / 2.0],
            bounds,
        }
    }

    /// Oriented rectangle enclosing the posed ground projection.
    pub fn oriented_footprint(&self, pose: &Pose) -> OrientedRect {
        let fp = self.model_footprint();
        let local_center = Vec2::new(
            (fp.min.x + fp.max.x) / 2.0 * pose.scale.x,
            (fp.min.y + fp.max.y) / 2.0 * pose.scale.y,
        );
        OrientedRect {
            center: local_center.rotate(heading_cs(pose.heading)) + pose.position,
            half: Vec2::new(fp.width() / 2.0 * pose.scale.x, fp.height() / 2.0 * pose.scale.y),
            heading_deg: pose.heading,
        }
    }

    /// Scale that makes the model's plan footprint `target_px * gsd` meters.
    /// Model `x` is length, `y` is width; height follows the geometric mean
    /// of the two plan scales.
    pub fn size_to_scale(&self, target_px: [f64; 2], gsd: f64) -> Result<Vec3, MeshError> {
        if !(target_px[0] > 0.0 && target_px[1] > 0.0) {
            return Err(MeshError::InvalidTargetSize(target_px[0], target_px[1]));
        }
        let fp = self.model_footprint();
        let (length, width) = (fp.width(), fp.height());
        if !(length > 0.0 && width > 0.0) {
            return Err(MeshError::DegenerateFootprint { length, width });
        }
        let sx = target_px[0] * gsd / length;
        let sy = target_px[1] * gsd / width;
        Ok(Vec3::new(sx, sy, sqrt(sx * sy)))
    }
}

/// Axis-aligned box mesh with its minimum corner at the origin; used by
/// tests and the benchmark when no model file is at hand.
pub fn box_mesh(name: &str, size: Vec3) -> Mesh {
    let (x, y, z) = (size.x, size.y, size.z);
    let vertices = [
        (0.0, 0.0, 0.0),
        (x, 0.0, 0.0),
        (x, y, 0.0),
        (0.0, y, 0.0),
        (0.0, 0.0, z),
        (x, 0.0, z),
        (x, y, z),
        (0.0, y, z),
    ]
    .into_iter()
    .map(|(a, b, c)| Vec3::new(a, b, c))
    .collect();
    let quads = [
        [0, 3, 2, 1],
        [4, 5, 6, 7],
        [0, 1, 5, 4],
        [1, 2, 6, 5],
        [2, 3, 7, 6],
        [3, 0, 4, 7],
    ];
    let triangles = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    Mesh {
        name: name.to_string(),
        vertices,
        triangles,
    }
}
