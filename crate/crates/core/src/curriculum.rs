//! Joint optimization of the Gaussian fit and the learnable wavelet.
//!
//! Every iteration the target is passed through the multi-level modulator,
//! the splats are fitted to the modulated target, and the wavelet state is
//! moved by plain gradient descent on `lambda_pr * pr_loss` plus (unless
//! `pr_only`) the reconstruction loss pulled back through the modulator.
//! Starting from a zero high-pass this produces a coarse-to-fine schedule.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::filterbank::{FilterBank, LearnMode, PrGrad};
use crate::image::{ImageBuffer, ImageError};
use crate::splat2d::{self, densify_and_prune, init_cloud, DensifyParams, LearningRates, SplatFitter, SsimReference};
use crate::transform::{self, TransformError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Training hyperparameters. Learning rates for the splats are relative to
/// the image diagonal for means and absolute otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// DWT levels of the modulator; 0 trains on the raw target.
    pub levels: usize,
    pub mode: LearnMode,
    pub iterations: usize,
    pub lambda_pr: f64,
    pub alpha_lr: f64,
    pub alpha_init: f64,
    pub lambda_ssim: f64,
    /// Apply the PR gradient every `pr_stride` iterations, scaled by the
    /// stride.
    pub pr_stride: usize,
    /// Keep the reconstruction loss from updating the wavelet.
    pub pr_only: bool,
    pub n0: usize,
    pub seed: u64,
    pub densify_threshold: f64,
    pub densify_interval: usize,
    pub densify_from: usize,
    /// Densification stops after this fraction of the run.
    pub densify_until: f64,
    /// Split instead of clone above this scale, in pixels.
    pub split_scale: f64,
    pub opacity_floor: f64,
    pub lr_mean: f64,
    pub lr_mean_final: f64,
    pub lr_scale: f64,
    pub lr_rotation: f64,
    pub lr_color: f64,
    pub lr_opacity: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            levels: 2,
            mode: LearnMode::Scale,
            iterations: 3000,
            lambda_pr: 0.05,
            alpha_lr: 1e-4,
            alpha_init: 0.0,
            lambda_ssim: 0.2,
            pr_stride: 1,
            pr_only: false,
            n0: 100,
            seed: 0,
            densify_threshold: 2e-5,
            densify_interval: 100,
            densify_from: 300,
            densify_until: 0.7,
            split_scale: 2.0,
            opacity_floor: 0.005,
            lr_mean: 2e-3,
            lr_mean_final: 2e-5,
            lr_scale: 5e-3,
            lr_rotation: 5e-3,
            lr_color: 2.5e-3,
            lr_opacity: 5e-2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lambda_pr >= 0.0) {
            return bad("lambda_pr must be >= 0");
        }
        if !(self.alpha_lr > 0.0) {
            return bad("alpha_lr must be > 0");
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.lambda_ssim) {
            return bad("lambda_ssim must lie in [0, 1]");
        }
        if self.n0 == 0 {
            return bad("n0 must be >= 1");
        }
        if self.pr_stride == 0 {
            return bad("pr_stride must be >= 1");
        }
        if self.densify_interval == 0 {
            return bad("densify_interval must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.densify_until) {
            return bad("densify_until must lie in [0, 1]");
        }
        if !(self.densify_threshold >= 0.0) || !(self.split_scale > 0.0) {
            return bad("densify_threshold must be >= 0 and split_scale > 0");
        }
        if !(0.0..1.0).contains(&self.opacity_floor) {
            return bad("opacity_floor must lie in [0, 1)");
        }
        if !self.alpha_init.is_finite() {
            return bad("alpha_init must be finite");
        }
        let rates = [self.lr_mean, self.lr_mean_final, self.lr_scale, self.lr_rotation, self.lr_color, self.lr_opacity];
        if !rates.iter().all(|&r| r > 0.0 && r.is_finite()) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }

    pub fn learning_rates(&self, h: usize, w: usize) -> LearningRates {
        let diag = ((h * h + w * w) as f64).sqrt();
        LearningRates {
            mean: self.lr_mean * diag,
            mean_final: self.lr_mean_final * diag,
            log_scale: self.lr_scale,
            rotation: self.lr_rotation,
            color: self.lr_color,
            opacity: self.lr_opacity,
        }
    }

    pub fn densify_params(&self) -> DensifyParams {
        DensifyParams {
            grad_threshold: self.densify_threshold,
            scale_split_threshold: self.split_scale,
            opacity_floor: self.opacity_floor,
        }
    }

    /// Whether densification runs after iteration `iter` (1-based).
    pub fn densifies_at(&self, iter: usize) -> bool {
        let until = (self.densify_until * self.iterations as f64).floor() as usize;
        iter > self.densify_from && iter <= until && iter % self.densify_interval == 0
    }
}

/// One iteration of a training run. Losses, PSNR and SSIM describe the
/// rendering scored in that iteration (before its update); `alpha` and
/// `gaussian_count` are the state after the update and densification.
/// Without DWT levels there is no filter bank in the loop and `loss_pr` is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRow {
    pub iter: usize,
    pub loss_total: f64,
    pub loss_recon: f64,
    pub loss_pr: f64,
    pub alpha: f64,
    pub gaussian_count: usize,
    /// Against the unmodulated target.
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub rows: Vec<TrainRow>,
    pub peak_count: usize,
    pub final_psnr: f64,
    pub final_ssim: f64,
    pub final_alpha: f64,
    pub final_bank: FilterBank,
    pub final_render: ImageBuffer,
}

/// Runs the joint curriculum on one target image.
pub fn train(config: &TrainConfig, target: &ImageBuffer) -> Result<TrainReport, TrainError> {
    config.validate()?;
    let (h, w, ch) = target.shape();
    if config.levels > 0 {
        transform::check_divisible(h, w, config.levels)?;
    }
    let mut bank = FilterBank::haar(config.mode, config.alpha_init);
    let cloud = init_cloud(target, config.n0, config.seed);
    let mut fitter =
        SplatFitter::new(cloud, config.learning_rates(h, w), config.lambda_ssim, config.iterations);
    let densify = config.densify_params();
    let couple = config.levels > 0 && !config.pr_only;

    let reference = SsimReference::new(target.clone());
    let mut rows = Vec::with_capacity(config.iterations);
    for iter in 1..=config.iterations {
        let modulated = if config.levels > 0 {
            transform::modulate(target, &bank, config.levels)?
        } else {
            target.clone()
        };
        let loss_pr = if config.levels > 0 { bank.pr_loss() } else { 0.0 };
        let step = fitter.step(&modulated, couple)?;

        if config.levels > 0 {
            let mut grad = match bank.mode() {
                LearnMode::Scale => PrGrad::Scale(0.0),
                LearnMode::Whole => PrGrad::Whole(vec![0.0; bank.tap_len()]),
            };
            if iter % config.pr_stride == 0 {
                grad = bank.pr_grad().scaled(config.lambda_pr * config.pr_stride as f64);
            }
            if let Some(cot) = &step.loss.grad_target {
                let recon = match bank.mode() {
                    LearnMode::Scale => PrGrad::Scale(transform::modulate_vjp(target, &bank, config.levels, cot)?),
                    LearnMode::Whole => {
                        PrGrad::Whole(transform::modulate_vjp_taps(target, &bank, config.levels, cot)?)
                    }
                };
                grad = grad.add(&recon);
            }
            bank.descend(&grad, config.alpha_lr);
        }

        if config.densifies_at(iter) {
            densify_and_prune(&mut fitter.cloud, &densify);
        }

        let loss_recon = step.loss.value;
        let loss_total = loss_recon + config.lambda_pr * loss_pr;
        rows.push(TrainRow {
            iter,
            loss_total,
            loss_recon,
            loss_pr,
            alpha: bank.alpha(),
            gaussian_count: fitter.cloud.len(),
            psnr: splat2d::psnr(&step.rendered, target)?,
            ssim: if config.levels > 0 { reference.ssim(&step.rendered)? } else { step.loss.ssim },
        });
    }

    let final_render = fitter.render(h, w, ch);
    Ok(TrainReport {
        peak_count: rows.iter().map(|r| r.gaussian_count).max().unwrap_or(0),
        final_psnr: splat2d::psnr(&final_render, target)?,
        final_ssim: splat2d::ssim(&final_render, target)?,
        final_alpha: bank.alpha(),
        final_bank: bank,
        final_render,
        rows,
    })
}

/// One run of an ablation sweep. `mode` is `None` for the unmodulated
/// baseline, which does not depend on the mode.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub target: String,
    pub levels: usize,
    pub mode: Option<LearnMode>,
    pub seed: u64,
    pub peak_count: usize,
    pub final_psnr: f64,
    pub final_ssim: f64,
    pub final_alpha: f64,
}

/// Mean over the rows sharing `(levels, mode)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationSummary {
    pub levels: usize,
    pub mode: Option<LearnMode>,
    pub runs: usize,
    pub mean_peak_count: f64,
    pub mean_final_psnr: f64,
    pub mean_final_ssim: f64,
    pub mean_final_alpha: f64,
}

#[derive(Debug, Clone)]
pub struct AblationSpec {
    pub levels: Vec<usize>,
    pub modes: Vec<LearnMode>,
    pub seeds: Vec<u64>,
}

impl AblationSpec {
    /// Run keys in output order: targets, then levels, modes, seeds. Level 0
    /// appears once per (target, seed).
    pub fn jobs(&self, n_targets: usize) -> Vec<(usize, usize, Option<LearnMode>, u64)> {
        let mut out = Vec::new();
        for t in 0..n_targets {
            for &levels in &self.levels {
                let modes: Vec<Option<LearnMode>> =
                    if levels == 0 { vec![None] } else { self.modes.iter().copied().map(Some).collect() };
                for mode in modes {
                    for &seed in &self.seeds {
                        out.push((t, levels, mode, seed));
                    }
                }
            }
        }
        out
    }
}

/// Full Cartesian sweep. Runs are independent and executed on the current
/// rayon pool; the output order is fixed by [`AblationSpec::jobs`].
pub fn ablate(
    base: &TrainConfig,
    targets: &[(String, ImageBuffer)],
    spec: &AblationSpec,
) -> Result<Vec<AblationRow>, TrainError> {
    if targets.is_empty() || spec.levels.is_empty() || spec.seeds.is_empty() {
        return Err(TrainError::Config("ablation sweeps must be non-empty".into()));
    }
    if spec.modes.is_empty() && spec.levels.iter().any(|&l| l > 0) {
        return Err(TrainError::Config("ablation needs at least one mode".into()));
    }
    spec.jobs(targets.len())
        .into_par_iter()
        .map(|(t, levels, mode, seed)| {
            let config = TrainConfig {
                levels,
                mode: mode.unwrap_or(base.mode),
                seed,
                ..base.clone()
            };
            let report = train(&config, &targets[t].1)?;
            Ok(AblationRow {
                target: targets[t].0.clone(),
                levels,
                mode,
                seed,
                peak_count: report.peak_count,
                final_psnr: report.final_psnr,
                final_ssim: report.final_ssim,
                final_alpha: report.final_alpha,
            })
        })
        .collect()
}

/// Per-`(levels, mode)` means, ordered by levels then mode.
pub fn summarize(rows: &[AblationRow]) -> Vec<AblationSummary> {
    let mut groups: BTreeMap<(usize, Option<LearnMode>), Vec<&AblationRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.levels, r.mode)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((levels, mode), rs)| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&AblationRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            AblationSummary {
                levels,
                mode,
                runs: rs.len(),
                mean_peak_count: mean(&|r| r.peak_count as f64),
                mean_final_psnr: mean(&|r| r.final_psnr),
                mean_final_ssim: mean(&|r| r.final_ssim),
                mean_final_alpha: mean(&|r| r.final_alpha),
            }
        })
        .collect()
}
