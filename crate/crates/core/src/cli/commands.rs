use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use super::config::{parse_ablation_config, parse_train_config, resolved, ConfigError};
use super::output::{ablation_csv, metrics_csv, Crop, RunManifest};
use crate::curriculum::{ablate, summarize, train, TrainError};
use crate::filterbank::{FilterBank, LearnMode, PrGrad};
use crate::image::ImageBuffer;
use crate::pngio::{read_png, write_png, PngError};
use crate::transform::{self, TransformError};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_DIAGNOSTIC: i32 = 1;
pub const EXIT_BAD_INPUT: i32 = 2;

/// Largest total PR loss that `prcheck` accepts.
pub const PR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Png(#[from] PngError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Parser)]
#[command(name = "freqmod", version, about = "Learnable Haar DWT frequency modulation and 2D Gaussian fitting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the modulated image for each alpha.
    Modulate(ModulateArgs),
    /// Print perfect-reconstruction residuals of the Haar bank, rounded to
    /// 12 decimals. Exits 1 unless the PR loss is below 1e-12.
    Prcheck(PrcheckArgs),
    /// Fit one target image under the modulation curriculum.
    Train(TrainArgs),
    /// Sweep levels, modes and seeds over a directory of targets.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct ModulateArgs {
    /// Input PNG.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub levels: usize,
    /// Comma-separated alpha values.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub alpha: Vec<f64>,
    #[arg(long, default_value = "scale")]
    pub mode: LearnMode,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one subband grid per level.
    #[arg(long)]
    pub subbands: bool,
}

#[derive(Debug, Args)]
pub struct PrcheckArgs {
    #[arg(long, default_value = "scale")]
    pub mode: LearnMode,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config levels.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Overrides the config mode.
    #[arg(long)]
    pub mode: Option<LearnMode>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of PNG targets.
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Replaces the seed list with this one seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replaces the levels list with this one level.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Replaces the mode list with this one mode.
    #[arg(long)]
    pub mode: Option<LearnMode>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Modulate(a) => cmd_modulate(&a),
        Command::Prcheck(a) => cmd_prcheck(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Ablate(a) => cmd_ablate(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_BAD_INPUT
        }
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

/// Reads a PNG and center-crops it to dims divisible by `2^levels`.
fn ingest(path: &Path, levels: usize) -> Result<(ImageBuffer, Crop), CliError> {
    let image = read_png(path)?;
    let m = 1usize << levels;
    if image.height() < m || image.width() < m {
        return Err(CliError::Input(format!(
            "{}: {}x{} is too small for {levels} levels",
            path.display(),
            image.height(),
            image.width()
        )));
    }
    let cropped = image.center_crop_to_multiple(m);
    let crop = Crop {
        path: path.display().to_string(),
        original: [image.height(), image.width()],
        cropped: [cropped.height(), cropped.width()],
    };
    Ok((cropped, crop))
}

fn write_image(dir: &Path, name: &str, image: &ImageBuffer, manifest: &mut RunManifest) -> Result<(), CliError> {
    write_png(dir.join(name), image)?;
    manifest.outputs.push(name.to_string());
    Ok(())
}

fn finish(mut manifest: RunManifest, dir: &Path, start: Instant) -> Result<(), CliError> {
    manifest.duration_seconds = start.elapsed().as_secs_f64();
    manifest.write(dir).map_err(io_err(dir))
}

/// A 2x2 mosaic of one level: LL rescaled to unit range top-left, detail
/// bands mapped to `0.5 + 0.5 * d / max|d|`.
fn subband_grid(ll: &ImageBuffer, d: &transform::Details, level: usize) -> ImageBuffer {
    let (h, w, ch) = ll.shape();
    let ll_scale = 1.0 / (1u64 << level) as f64;
    let norm = |b: &ImageBuffer| {
        let m = b.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if m > 0.0 {
            1.0 / m
        } else {
            0.0
        }
    };
    let (nlh, nhl, nhh) = (norm(&d.lh), norm(&d.hl), norm(&d.hh));
    ImageBuffer::from_fn(2 * h, 2 * w, ch, |r, c, k| {
        let (rr, cc) = (r % h, c % w);
        match (r / h, c / w) {
            (0, 0) => ll.get(rr, cc, k) * ll_scale,
            (0, 1) => 0.5 + 0.5 * d.lh.get(rr, cc, k) * nlh,
            (1, 0) => 0.5 + 0.5 * d.hl.get(rr, cc, k) * nhl,
            _ => 0.5 + 0.5 * d.hh.get(rr, cc, k) * nhh,
        }
    })
}

fn cmd_modulate(a: &ModulateArgs) -> Result<i32, CliError> {
    let start = Instant::now();
    if a.levels == 0 {
        return Err(CliError::Input("modulate needs --levels >= 1".into()));
    }
    let (image, crop) = ingest(&a.input, a.levels)?;
    prepare_out(&a.out)?;
    let mut manifest = RunManifest::new("modulate");
    manifest.config.insert("levels".into(), a.levels.to_string());
    manifest.config.insert("mode".into(), a.mode.to_string());
    let alphas: Vec<String> = a.alpha.iter().map(|x| x.to_string()).collect();
    manifest.config.insert("alpha".into(), alphas.join(","));
    manifest.inputs.push(a.input.display().to_string());
    manifest.crops.push(crop);

    for (i, &alpha) in a.alpha.iter().enumerate() {
        let bank = FilterBank::haar(a.mode, alpha);
        let frame = transform::modulate(&image, &bank, a.levels)?;
        write_image(&a.out, &format!("frame_{i:03}_alpha_{alpha}.png"), &frame, &mut manifest)?;
    }
    if a.subbands {
        let pyramid = transform::decompose(&image, &FilterBank::haar(a.mode, 1.0), a.levels)?;
        let mut ll = image.clone();
        for (k, d) in pyramid.details.iter().enumerate() {
            ll = transform::dwt_forward(&ll, &FilterBank::haar(a.mode, 1.0))?.ll;
            let grid = subband_grid(&ll, d, k + 1);
            write_image(&a.out, &format!("subbands_level_{}.png", k + 1), &grid, &mut manifest)?;
        }
    }
    finish(manifest, &a.out, start)?;
    Ok(EXIT_OK)
}

/// Rounds to 12 decimals so rounding noise in the tap products prints as 0.
fn display_value(v: f64) -> f64 {
    let r = (v * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn cmd_prcheck(a: &PrcheckArgs) -> Result<i32, CliError> {
    let bank = FilterBank::haar(a.mode, a.alpha);
    let alias = bank.alias_residual().norm_sq();
    let dist = bank.dist_residual().norm_sq();
    let total = bank.pr_loss();
    println!("alias_residual_norm_sq {}", display_value(alias));
    println!("distortion_residual_norm_sq {}", display_value(dist));
    println!("pr_loss {}", display_value(total));
    match bank.pr_grad() {
        PrGrad::Scale(g) => println!("pr_grad_alpha {}", display_value(g)),
        PrGrad::Whole(g) => {
            let taps: Vec<String> = g.iter().map(|&v| display_value(v).to_string()).collect();
            println!("pr_grad_taps {}", taps.join(","));
        }
    }
    Ok(if total < PR_TOLERANCE { EXIT_OK } else { EXIT_DIAGNOSTIC })
}

fn cmd_train(a: &TrainArgs) -> Result<i32, CliError> {
    let start = Instant::now();
    let text = match &a.config {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    let mut config = parse_train_config(&text)?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(l) = a.levels {
        config.levels = l;
    }
    if let Some(m) = a.mode {
        config.mode = m;
    }
    let (target, crop) = ingest(&a.target, config.levels)?;
    prepare_out(&a.out)?;
    let report = train(&config, &target)?;

    let mut manifest = RunManifest::new("train");
    manifest.seed = Some(config.seed);
    manifest.config = resolved(&config);
    if let Some(p) = &a.config {
        manifest.inputs.push(p.display().to_string());
    }
    manifest.inputs.push(a.target.display().to_string());
    manifest.crops.push(crop);
    let metrics = a.out.join("metrics.csv");
    std::fs::write(&metrics, metrics_csv(&report.rows)).map_err(io_err(&metrics))?;
    manifest.outputs.push("metrics.csv".into());
    write_image(&a.out, "render.png", &report.final_render, &mut manifest)?;
    manifest.results = BTreeMap::from([
        ("peak_gaussians".to_string(), report.peak_count.to_string()),
        ("final_psnr".to_string(), report.final_psnr.to_string()),
        ("final_ssim".to_string(), report.final_ssim.to_string()),
        ("final_alpha".to_string(), report.final_alpha.to_string()),
    ]);
    finish(manifest, &a.out, start)?;
    Ok(EXIT_OK)
}

/// Sorted `*.png` files in `dir`.
fn list_targets(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(io_err(dir))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Input(format!("{}: no PNG targets", dir.display())));
    }
    Ok(paths)
}

fn cmd_ablate(a: &AblateArgs) -> Result<i32, CliError> {
    let start = Instant::now();
    let text = match &a.config {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    let (config, mut spec) = parse_ablation_config(&text)?;
    if let Some(s) = a.seed {
        spec.seeds = vec![s];
    }
    if let Some(l) = a.levels {
        spec.levels = vec![l];
    }
    if let Some(m) = a.mode {
        spec.modes = vec![m];
    }
    let max_levels = spec.levels.iter().copied().max().unwrap_or(0);

    let mut targets = Vec::new();
    let mut crops = Vec::new();
    let mut failures = Vec::new();
    for path in list_targets(&a.targets)? {
        match ingest(&path, max_levels) {
            Ok((image, crop)) => {
                let name = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
                targets.push((name, image));
                crops.push(crop);
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Input(format!("unreadable targets:\n  {}", failures.join("\n  "))));
    }
    prepare_out(&a.out)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs {
        if j == 0 {
            return Err(CliError::Input("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError::Input(e.to_string()))?;
    let rows = pool.install(|| ablate(&config, &targets, &spec))?;
    let summary = summarize(&rows);

    let mut manifest = RunManifest::new("ablate");
    manifest.config = resolved(&config);
    manifest.config.remove("levels");
    manifest.config.remove("mode");
    manifest.config.remove("seed");
    let list = |v: Vec<String>| v.join(",");
    manifest.config.insert("levels_set".into(), list(spec.levels.iter().map(|l| l.to_string()).collect()));
    manifest.config.insert("modes".into(), list(spec.modes.iter().map(|m| m.to_string()).collect()));
    manifest.config.insert("seeds".into(), list(spec.seeds.iter().map(|s| s.to_string()).collect()));
    manifest.config.insert("jobs".into(), pool.current_num_threads().to_string());
    if let Some(p) = &a.config {
        manifest.inputs.push(p.display().to_string());
    }
    manifest.inputs.extend(crops.iter().map(|c| c.path.clone()));
    manifest.crops = crops;
    let csv = a.out.join("ablation.csv");
    std::fs::write(&csv, ablation_csv(&rows, &summary)).map_err(io_err(&csv))?;
    manifest.outputs.push("ablation.csv".into());
    finish(manifest, &a.out, start)?;
    Ok(EXIT_OK)
}
