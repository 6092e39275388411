//! Design configs as TOML documents.

use std::fs;
use std::path::Path;

use simpl_core::DesignConfig;

use crate::error::{Error, Result};

/// Parse and validate a config document. `origin` only labels errors.
pub fn parse_config(text: &str, origin: &Path) -> Result<DesignConfig> {
    let config: DesignConfig = toml::from_str(text).map_err(|e| Error::invalid(origin, e))?;
    config.validate()?;
    Ok(config)
}

pub fn serialize_config(config: &DesignConfig) -> String {
    toml::to_string_pretty(config).expect("design configs always serialize")
}

/// Read a config file. Relative mesh and background paths are resolved
/// against the directory holding the file.
pub fn load_config(path: &Path) -> Result<DesignConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = parse_config(&text, path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    resolve_paths(&mut config, base);
    Ok(config)
}

pub fn resolve_paths(config: &mut DesignConfig, base: &Path) {
    for p in config.mesh_paths.iter_mut().chain(config.background_paths.iter_mut()) {
        if Path::new(p).is_relative() {
            *p = base.join(&*p).to_string_lossy().into_owned();
        }
    }
}

pub fn write_config(path: &Path, config: &DesignConfig) -> Result<()> {
    fs::write(path, serialize_config(config)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use simpl_core::config::{Bounds, ConfigError};

    const MINIMAL: &str = r#"
class_id = 1
mesh_paths = ["a.obj"]
background_paths = ["bg.png"]
color_mean = [120.0, 120.0, 120.0]
color_std = 10.0
size_mean = [31.0, 29.0]
size_std = 2.0
solar_elevation_bounds = [30.0, 55.0]
solar_azimuth_bounds = [90.0, 120.0]
solar_intensity_bounds = [0.8, 1.1]
master_seed = 7
"#;

    #[test]
    fn omitted_fields_take_defaults() {
        let c = parse_config(MINIMAL, Path::new("t.toml")).unwrap();
        assert_eq!(c.density, 120.0);
        assert_eq!(c.gsd, 0.3);
        assert_eq!(c.patch_size, 608);
        assert_eq!(c.num_patches, 450);
        assert_eq!(c.master_seed, 7);
    }

    #[test]
    fn explicit_values_are_echoed() {
        let text = format!("{MINIMAL}density = 120.0\ngsd = 0.3\npatch_size = 608\n");
        let c = parse_config(&text, Path::new("t.toml")).unwrap();
        assert_eq!((c.density, c.gsd, c.patch_size), (120.0, 0.3, 608));
    }

    #[test]
    fn reversed_bounds_name_the_field() {
        let text = MINIMAL.replace("[30.0, 55.0]", "[60.0, 30.0]");
        let err = parse_config(&text, Path::new("t.toml")).unwrap_err();
        match err {
            Error::Config(ConfigError::Validation { field, message }) => {
                assert_eq!(field, "solar_elevation_bounds");
                assert!(message.contains("lower bound exceeds upper bound"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_line_context() {
        let text = MINIMAL.replace("color_std = 10.0", "color_std = = 10");
        let msg = parse_config(&text, Path::new("t.toml")).unwrap_err().to_string();
        assert!(msg.contains("line 6"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}colour_std = 1.0\n");
        assert!(matches!(
            parse_config(&text, Path::new("t.toml")),
            Err(Error::Invalid { .. })
        ));
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, MINIMAL.replace("\"a.obj\"", "\"/abs/a.obj\"")).unwrap();
        let c = load_config(&path).unwrap();
        assert_eq!(c.mesh_paths, vec!["/abs/a.obj".to_string()]);
        assert_eq!(Path::new(&c.background_paths[0]), dir.path().join("bg.png"));
    }

    fn arb_config() -> impl Strategy<Value = DesignConfig> {
        (
            1u32..100,
            prop::array::uniform3(0.0f64..=255.0),
            0.0f64..50.0,
            (1.0f64..500.0, 1.0f64..500.0),
            (0.0f64..90.0, 0.0f64..90.0),
            (0.0f64..360.0, 0.0f64..360.0),
            any::<u64>(),
            (1.0f64..1000.0, 0.05f64..2.0, 1u32..2048, 1u32..10_000),
        )
            .prop_map(
                |(class_id, color, cstd, size, el, az, seed, (density, gsd, patch, k))| {
                    let mut c = DesignConfig::new(class_id, vec!["m.obj".into()], vec!["b.png".into()]);
                    c.color_mean = color;
                    c.color_std = cstd;
                    c.size_mean = [size.0, size.1];
                    c.solar_elevation_bounds = Bounds(el.0.min(el.1), el.0.max(el.1));
                    c.solar_azimuth_bounds = Bounds(az.0.min(az.1), az.0.max(az.1));
                    c.master_seed = seed;
                    c.density = density;
                    c.gsd = gsd;
                    c.patch_size = patch;
                    c.num_patches = k;
                    c
                },
            )
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(c in arb_config()) {
            let text = serialize_config(&c);
            prop_assert_eq!(parse_config(&text, Path::new("t.toml")).unwrap(), c);
        }
    }
}
