//! World frame: `x` points east along image columns, `y` points south along
//! image rows, `z` points up toward the camera. Headings rotate `+x` toward
//! `+y` (clockwise as seen in the image).

use serde::{Deserialize, Serialize};

use crate::math::{cos, sin, to_radians};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// Rotate by a heading given as `(cos, sin)`.
    pub fn rotate(self, (c, s): (f64, f64)) -> Vec2 {
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl core::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl core::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl core::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        crate::math::sqrt(self.dot(self))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl core::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// `(cos, sin)` of a heading in degrees.
pub fn heading_cs(heading_deg: f64) -> (f64, f64) {
    let r = to_radians(heading_deg);
    (cos(r), sin(r))
}

/// Axis-aligned rectangle `[min, max]` in world meters or pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Aabb { min, max }
    }

    pub fn empty() -> Self {
        Aabb::new(
            Vec2::new(f64::INFINITY, f64::INFINITY),
            Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        )
    }

    pub fn include(&mut self, p: Vec2) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains_point(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn scaled(&self, k: f64) -> Aabb {
        Aabb::new(self.min * k, self.max * k)
    }
}

/// Rectangle of half extents `half` centred on `center`, rotated by a heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Vec2,
    pub half: Vec2,
    pub heading_deg: f64,
}

impl OrientedRect {
    fn axes(&self) -> [Vec2; 2] {
        let cs = heading_cs(self.heading_deg);
        [Vec2::new(1.0, 0.0).rotate(cs), Vec2::new(0.0, 1.0).rotate(cs)]
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let [u, v] = self.axes();
        let (a, b) = (u * self.half.x, v * self.half.y);
        [
            self.center - a - b,
            self.center + a - b,
            self.center + a + b,
            self.center - a + b,
        ]
    }

    pub fn aabb(&self) -> Aabb {
        let mut bb = Aabb::empty();
        for c in self.corners() {
            bb.include(c);
        }
        bb
    }

    /// Grow every side outward by `margin`.
    pub fn inflated(&self, margin: f64) -> OrientedRect {
        OrientedRect {
            half: Vec2::new(self.half.x + margin, self.half.y + margin),
            ..*self
        }
    }

    /// Separating-axis test. Touching rectangles count as intersecting.
    pub fn intersects(&self, other: &OrientedRect) -> bool {
        let mine = self.corners();
        let theirs = other.corners();
        for axis in self.axes().into_iter().chain(other.axes()) {
            let (a0, a1) = project(&mine, axis);
            let (b0, b1) = project(&theirs, axis);
            if a1 < b0 || b1 < a0 {
                return false;
            }
        }
        true
    }
}

fn project(pts: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p.dot(axis);
        (lo.min(d), hi.max(d))
    })
}
