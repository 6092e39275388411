use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::DesignConfig;
use crate::geom::{Aabb, OrientedRect, Vec2};
use crate::math::{floor, round};
use crate::mesh::{Mesh, MeshError, Pose};
use crate::sampler::{DefaultSampler, InstanceProps, PropertySampler, RngStream, SampleError, SolarParams, StreamTag};

/// Placement attempts allowed per requested instance.
pub const ATTEMPTS_PER_INSTANCE: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("placed {placed} of {target} targets after {attempts} attempts; density is infeasible for this tile and target size")]
    PlacementInfeasible {
        placed: usize,
        target: usize,
        attempts: usize,
    },
    #[error("no meshes supplied")]
    NoMeshes,
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Ground plane of one virtual world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    /// Index into the configured background list.
    pub index: usize,
    pub width_m: f64,
    pub height_m: f64,
    pub gsd: f64,
}

impl Background {
    /// A background image of `width` x `height` pixels imaged at `gsd`.
    pub fn from_pixels(index: usize, width: u32, height: u32, gsd: f64) -> Self {
        Background {
            index,
            width_m: width as f64 * gsd,
            height_m: height as f64 * gsd,
            gsd,
        }
    }

    pub fn from_meters(index: usize, width_m: f64, height_m: f64, gsd: f64) -> Self {
        Background {
            index,
            width_m,
            height_m,
            gsd,
        }
    }

    pub fn area_km2(&self) -> f64 {
        self.width_m * self.height_m / 1e6
    }

    /// Rendered size: meters over GSD, rounded down. The small epsilon keeps
    /// `3333 px * 0.3 / 0.3` from flooring to 3332.
    pub fn pixel_dims(&self) -> (u32, u32) {
        let px = |m: f64| floor(m / self.gsd + 1e-6) as u32;
        (px(self.width_m), px(self.height_m))
    }
}

/// Number of targets a tile receives at a given density.
pub fn instance_count(density_per_km2: f64, area_km2: f64) -> usize {
    round(density_per_km2 * area_km2) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInstance {
    pub props: InstanceProps,
    pub pose: Pose,
    pub mesh_ref: usize,
    /// Oriented rectangle around the ground projection, meters.
    pub footprint: OrientedRect,
    /// Seed of the stream that produced this instance.
    pub seed: u64,
}

impl SceneInstance {
    /// Axis-aligned bounds of the posed ground projection in pixel units.
    pub fn pixel_bounds(&self, mesh: &Mesh, gsd: f64) -> Aabb {
        mesh.footprint_extent(&self.pose).bounds.scaled(1.0 / gsd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub background: Background,
    pub instances: Vec<SceneInstance>,
    pub solar: SolarParams,
    pub image_index: u64,
    pub solar_seed: u64,
}

impl Scene {
    pub fn gsd(&self) -> f64 {
        self.background.gsd
    }
}

pub fn build_scene(
    config: &DesignConfig,
    image_index: u64,
    background: Background,
    meshes: &[Mesh],
) -> Result<Scene, SceneError> {
    build_scene_with(&DefaultSampler, config, image_index, background, meshes)
}

/// Place `round(density * area)` non-overlapping instances by rejection
/// sampling.
///
/// Attempt `k` draws everything from the stream `(master_seed, Instance,
/// image_index, k)`, so a scene is reproducible from its index alone.
/// Footprints must lie fully inside the tile and keep at least two pixels
/// of clearance from each other, which keeps distinct targets from merging
/// into one 8-connected blob in the ground-truth render.
pub fn build_scene_with<S: PropertySampler>(
    sampler: &S,
    config: &DesignConfig,
    image_index: u64,
    background: Background,
    meshes: &[Mesh],
) -> Result<Scene, SceneError> {
    if meshes.is_empty() {
        return Err(SceneError::NoMeshes);
    }
    let gsd = background.gsd;
    let mut solar_stream = RngStream::derive(config.master_seed, StreamTag::Solar, image_index, 0);
    let solar_seed = solar_stream.seed();
    let solar = sampler.solar(config, &mut solar_stream);

    let target = instance_count(config.density, background.area_km2());
    let max_attempts = ATTEMPTS_PER_INSTANCE * target;
    let clearance = gsd;

    let mut instances: Vec<SceneInstance> = Vec::with_capacity(target);
    let mut guarded: Vec<OrientedRect> = Vec::with_capacity(target);
    let mut attempts = 0;
    while instances.len() < target {
        if attempts == max_attempts {
            return Err(SceneError::PlacementInfeasible {
                placed: instances.len(),
                target,
                attempts,
            });
        }
        let mut stream = RngStream::derive(config.master_seed, StreamTag::Instance, image_index, attempts as u64);
        attempts += 1;

        let props = sampler.instance(config, &mut stream, meshes.len())?;
        let mesh = &meshes[props.mesh_choice];
        let scale = mesh.size_to_scale(props.size, gsd)?;
        let at_origin = Pose::new(Vec2::default(), props.heading, scale);
        let rel = mesh.oriented_footprint(&at_origin).aabb();

        let (x_lo, x_hi) = (-rel.min.x, background.width_m - rel.max.x);
        let (y_lo, y_hi) = (-rel.min.y, background.height_m - rel.max.y);
        if x_lo > x_hi || y_lo > y_hi {
            continue;
        }
        let position = Vec2::new(stream.uniform(x_lo, x_hi), stream.uniform(y_lo, y_hi));
        let pose = Pose::new(position, props.heading, scale);
        let footprint = mesh.oriented_footprint(&pose);
        let guard = footprint.inflated(clearance);
        if guarded.iter().any(|g| g.intersects(&guard)) {
            continue;
        }
        guarded.push(guard);
        instances.push(SceneInstance {
            props,
            pose,
            mesh_ref: props.mesh_choice,
            footprint,
            seed: stream.seed(),
        });
    }

    Ok(Scene {
        background,
        instances,
        solar,
        image_index,
        solar_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::mesh::box_mesh;
    use alloc::vec;

    fn config() -> DesignConfig {
        let mut c = DesignConfig::new(1, vec!["m.obj".into()], vec!["bg.png".into()]);
        c.size_mean = [100.0, 80.0];
        c.size_std = 10.0;
        c.color_std = 20.0;
        c.master_seed = 42;
        c
    }

    fn meshes() -> Vec<Mesh> {
        vec![box_mesh("box", Vec3::new(10.0, 8.0, 4.0))]
    }

    #[test]
    fn km2_tile_gets_120() {
        let bg = Background::from_meters(0, 1000.0, 1000.0, 0.3);
        let s = build_scene(&config(), 0, bg, &meshes()).unwrap();
        assert_eq!(s.instances.len(), 120);
        for (i, a) in s.instances.iter().enumerate() {
            for b in &s.instances[i + 1..] {
                assert!(!a.footprint.intersects(&b.footprint));
            }
        }
    }

    #[test]
    fn quarter_km2_gets_30() {
        let bg = Background::from_meters(0, 500.0, 500.0, 0.3);
        let s = build_scene(&config(), 3, bg, &meshes()).unwrap();
        assert_eq!(s.instances.len(), 30);
    }

    #[test]
    fn footprints_inside_tile() {
        let bg = Background::from_meters(0, 500.0, 400.0, 0.3);
        let s = build_scene(&config(), 1, bg, &meshes()).unwrap();
        let tile = Aabb::new(Vec2::new(0.0, 0.0), Vec2::new(500.0, 400.0));
        for inst in &s.instances {
            for c in inst.footprint.corners() {
                assert!(tile.contains_point(c), "{c:?}");
            }
        }
    }

    #[test]
    fn oversized_targets_are_infeasible() {
        let mut c = config();
        c.size_std = 0.0;
        c.size_mean = [200.0 / 0.3, 20.0];
        let bg = Background::from_meters(0, 100.0, 100.0, 0.3);
        match build_scene(&c, 0, bg, &meshes()) {
            Err(SceneError::PlacementInfeasible {
                placed: 0,
                target: 1,
                attempts: 1000,
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rebuild_is_identical() {
        let bg = Background::from_meters(0, 500.0, 500.0, 0.3);
        let a = build_scene(&config(), 7, bg, &meshes()).unwrap();
        let b = build_scene(&config(), 7, bg, &meshes()).unwrap();
        assert_eq!(a, b);
        let c = build_scene(&config(), 8, bg, &meshes()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn pixel_dims_round_down() {
        assert_eq!(
            Background::from_meters(0, 1000.0, 1000.0, 0.3).pixel_dims(),
            (3333, 3333)
        );
        assert_eq!(Background::from_pixels(0, 3333, 608, 0.3).pixel_dims(), (3333, 608));
        assert_eq!(Background::from_pixels(0, 608, 608, 0.7).pixel_dims(), (608, 608));
    }

    #[test]
    fn counts() {
        assert_eq!(instance_count(120.0, 0.25), 30);
        assert_eq!(instance_count(120.0, 1.0), 120);
        assert_eq!(instance_count(120.0, 0.3333 * 0.3333 * 0.09 / 0.09), 13);
    }
}
