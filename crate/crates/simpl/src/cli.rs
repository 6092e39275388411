//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::Serialize;
use simpl_core::config::{make_sweep_configs, sweep_label, SweepParam, DEFAULT_MIN_VISIBILITY, DEFAULT_PATCH_SIZE};
use simpl_core::dataset::{format_yolo_rows, parse_yolo_rows, tile_image};
use simpl_core::groundtruth::extract_boxes;
use simpl_core::DesignConfig;

use crate::bench::run_bench;
use crate::config_file::{load_config, write_config};
use crate::error::{Error, Result, EXIT_OK, EXIT_VALIDATION};
use crate::eval::{run_eval, stem};
use crate::export::{create_dir, export_dataset, MANIFEST_FILE};
use crate::io::read_image;
use crate::pipeline::{generate, load_assets, with_rotations, GenerateOptions};

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (manifest format 1, annotations: class_id cx cy w h normalized, detections: class_id confidence x y w h pixels)"
);

#[derive(Debug, Parser)]
#[command(name = "simpl", version = VERSION, about = "Synthetic overhead imagery generator and detector evaluator")]
struct Cli {
    /// Design config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render world images and export a tiled, labeled dataset.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Threads across world images [default: all cores].
        #[arg(long)]
        workers: Option<usize>,
        /// Also keep world images, GT renders and world boxes under `world/`.
        #[arg(long)]
        keep_world: bool,
        /// Add 90/180/270 degree copies of every patch.
        #[arg(long)]
        rotate: bool,
    },
    /// Write boxes for every `*_gt.png` in a directory.
    ExtractGt {
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Defaults to the config's class, then the file name prefix.
        #[arg(long)]
        class_id: Option<u32>,
    },
    /// Cut labeled world images (`X.png` + `X.txt`) into patches.
    Tile {
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to `<in>/patches`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        patch: Option<u32>,
        #[arg(long)]
        min_visibility: Option<f64>,
        #[arg(long)]
        rotate: bool,
    },
    /// Write perturbed copies of a config.
    Sweep {
        /// color_mean, size_mean or num_patches.
        #[arg(long)]
        param: SweepParam,
        /// Percent offsets, or patch counts for num_patches.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        offsets: Vec<f64>,
        /// Defaults to `<config stem>_sweep` next to the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also generate a dataset per swept config.
        #[arg(long)]
        generate: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Score detections against ground truth: AP50 and recall at false-alarm rates.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        /// Detection directory; repeat to average several runs.
        #[arg(long, required = true)]
        det: Vec<PathBuf>,
        #[arg(long)]
        area_km2: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1")]
        alphas: Vec<f64>,
        /// Side of every GT image in pixels, when the PNGs are not alongside.
        #[arg(long)]
        image_size: Option<u32>,
        /// Write the JSON report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time generation per square kilometer.
    Bench {
        #[arg(long, default_value_t = 1.0)]
        km2: f64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Write the JSON result here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    pub code: i32,
    pub summary: String,
    pub report_path: Option<PathBuf>,
}

impl CommandOutcome {
    fn ok(summary: impl Into<String>, report_path: Option<PathBuf>) -> Self {
        CommandOutcome {
            code: EXIT_OK,
            summary: summary.into(),
            report_path,
        }
    }
}

/// Parse `argv` (program name first) and run the command.
pub fn dispatch<I, T>(argv: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
            return CommandOutcome {
                code,
                summary: e.render().to_string(),
                report_path: None,
            };
        }
    };
    match run(cli) {
        Ok(outcome) => outcome,
        Err(e) => CommandOutcome {
            code: e.exit_code(),
            summary: format!("error: {e}"),
            report_path: None,
        },
    }
}

fn require_config(path: &Option<PathBuf>) -> Result<DesignConfig> {
    let path = path
        .as_deref()
        .ok_or_else(|| Error::Usage("this command needs --config <path>".into()))?;
    load_config(path)
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn emit_json<T: Serialize>(value: &T, out: Option<PathBuf>, headline: String) -> Result<CommandOutcome> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    match out {
        Some(path) => {
            fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
            Ok(CommandOutcome::ok(
                format!("{headline}; report written to {}", path.display()),
                Some(path),
            ))
        }
        None => Ok(CommandOutcome::ok(format!("{headline}\n{}", text.trim_end()), None)),
    }
}

fn run(cli: Cli) -> Result<CommandOutcome> {
    match cli.command {
        Command::Generate {
            out,
            workers,
            keep_world,
            rotate,
        } => {
            let config = require_config(&cli.config)?;
            let assets = load_assets(&config)?;
            let options = GenerateOptions {
                workers: workers.unwrap_or_else(default_workers),
                keep_world,
                rotate,
            };
            let manifest = generate(&config, &assets, &out, options)?;
            Ok(CommandOutcome::ok(
                format!(
                    "{} patches with {} boxes from {} world images (seed {})",
                    manifest.patches.len(),
                    manifest.annotation_total(),
                    manifest.world_images.len(),
                    config.master_seed
                ),
                Some(out.join(MANIFEST_FILE)),
            ))
        }
        Command::ExtractGt { input, out, class_id } => {
            let config = cli.config.as_deref().map(load_config).transpose()?;
            let class_id = class_id.or(config.as_ref().map(|c| c.class_id));
            extract_gt(&input, out.as_deref().unwrap_or(&input), class_id)
        }
        Command::Tile {
            input,
            out,
            patch,
            min_visibility,
            rotate,
        } => {
            let config = cli.config.as_deref().map(load_config).transpose()?;
            let patch = patch
                .or(config.as_ref().map(|c| c.patch_size))
                .unwrap_or(DEFAULT_PATCH_SIZE);
            let min_vis = min_visibility
                .or(config.as_ref().map(|c| c.min_visibility))
                .unwrap_or(DEFAULT_MIN_VISIBILITY);
            let out = out.unwrap_or_else(|| input.join("patches"));
            tile_dir(&input, &out, patch, min_vis, rotate, config.as_ref())
        }
        Command::Sweep {
            param,
            offsets,
            out,
            generate: run_generate,
            workers,
        } => {
            let path = cli
                .config
                .as_deref()
                .ok_or_else(|| Error::Usage("sweep needs --config <path>".into()))?;
            let out = out.unwrap_or_else(|| path.with_file_name(format!("{}_sweep", stem(path))));
            sweep(
                path,
                param,
                &offsets,
                &out,
                run_generate.then(|| workers.unwrap_or_else(default_workers)),
            )
        }
        Command::Eval {
            gt,
            det,
            area_km2,
            alphas,
            image_size,
            out,
        } => {
            let report = run_eval(&gt, &det, area_km2, &alphas, image_size)?;
            let recalls: Vec<String> = report
                .report
                .recall_at
                .iter()
                .map(|p| format!("R({}) = {:.4}", p.alpha, p.recall))
                .collect();
            let headline = format!(
                "AP50 = {:.4}, {} over {} GT boxes, {} run(s)",
                report.report.ap50,
                recalls.join(", "),
                report.report.num_gt,
                report.runs.len()
            );
            emit_json(&report, out, headline)
        }
        Command::Bench { km2, workers, out } => {
            let config = require_config(&cli.config)?;
            let assets = load_assets(&config)?;
            let scratch = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
            let result = run_bench(&config, &assets, km2, workers, scratch.path())?;
            let headline = format!(
                "{:.2} s per km^2 ({} km^2 in {:.2} s, {} worker(s))",
                result.seconds_per_km2, result.km2_generated, result.wall_seconds, result.workers
            );
            emit_json(&result, out, headline)
        }
    }
}

fn gt_renders(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.to_string_lossy().ends_with("_gt.png") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn extract_gt(input: &Path, out: &Path, class_id: Option<u32>) -> Result<CommandOutcome> {
    create_dir(out)?;
    let files = gt_renders(input)?;
    let mut boxes = 0;
    for path in &files {
        let id = stem(path).trim_end_matches("_gt").to_string();
        let class = match class_id {
            Some(c) => c,
            None => id.split('_').next().and_then(|p| p.parse().ok()).ok_or_else(|| {
                Error::Usage(format!(
                    "cannot infer a class id from {}; pass --class-id or --config",
                    path.display()
                ))
            })?,
        };
        let img = read_image(path, 0.0)?;
        let anns = extract_boxes(&img, class, &id).map_err(|e| Error::invalid(path, e))?;
        let txt = out.join(format!("{id}.txt"));
        fs::write(&txt, format_yolo_rows(&anns, img.width, img.height)).map_err(|e| Error::io(&txt, e))?;
        boxes += anns.len();
    }
    Ok(CommandOutcome::ok(
        format!("{boxes} boxes from {} ground-truth images", files.len()),
        None,
    ))
}

fn tile_dir(
    input: &Path,
    out: &Path,
    patch: u32,
    min_visibility: f64,
    rotate: bool,
    config: Option<&DesignConfig>,
) -> Result<CommandOutcome> {
    let mut patches = Vec::new();
    for txt in crate::eval::text_files(input)? {
        let png = txt.with_extension("png");
        if !png.is_file() {
            continue;
        }
        let id = stem(&txt);
        let img = read_image(&png, config.map_or(0.0, |c| c.gsd))?;
        let text = fs::read_to_string(&txt).map_err(|e| Error::io(&txt, e))?;
        let anns = parse_yolo_rows(&text, img.width, img.height, &id).map_err(|e| Error::invalid(&txt, e))?;
        patches.extend(tile_image(&img, &anns, patch, min_visibility, &id).map_err(|e| Error::invalid(&png, e))?);
    }
    if rotate {
        patches = with_rotations(patches)?;
    }
    let manifest = export_dataset(&patches, out, config)?;
    Ok(CommandOutcome::ok(
        format!(
            "{} patches with {} boxes written to {}",
            manifest.patches.len(),
            manifest.annotation_total(),
            out.display()
        ),
        Some(out.join(MANIFEST_FILE)),
    ))
}

fn sweep(
    config_path: &Path,
    param: SweepParam,
    offsets: &[f64],
    out: &Path,
    generate_workers: Option<usize>,
) -> Result<CommandOutcome> {
    let mut base = load_config(config_path)?;
    // Swept configs live elsewhere, so pin asset paths.
    for p in base.mesh_paths.iter_mut().chain(base.background_paths.iter_mut()) {
        if let Ok(abs) = std::path::absolute(&*p) {
            *p = abs.to_string_lossy().into_owned();
        }
    }
    let configs = make_sweep_configs(&base, param, offsets)?;
    create_dir(out)?;
    let assets = generate_workers.map(|_| load_assets(&base)).transpose()?;
    let mut lines = Vec::new();
    for (config, &offset) in configs.iter().zip(offsets) {
        let label = sweep_label(param, offset);
        let path = out.join(format!("{label}.toml"));
        write_config(&path, config)?;
        lines.push(path.display().to_string());
        if let (Some(workers), Some(assets)) = (generate_workers, &assets) {
            let options = GenerateOptions {
                workers,
                ..Default::default()
            };
            generate(config, assets, &out.join(&label), options)?;
            lines.push(format!("  dataset in {}", out.join(&label).display()));
        }
    }
    Ok(CommandOutcome::ok(
        format!("{} sweep configs:\n{}", configs.len(), lines.join("\n")),
        None,
    ))
}
