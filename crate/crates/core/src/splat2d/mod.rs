//! 2D Gaussian image fitting: additive rendering, L1 + D-SSIM loss, Adam
//! updates and gradient-driven densification.

mod densify;
mod gaussian;
mod metrics;
mod render;

pub use densify::{densify_and_prune, DensifyParams, DensifyStats, SPLIT_SCALE_DIVISOR};
pub use gaussian::{init_cloud, sigmoid, slot, Gaussian2D, GaussianCloud, Params, N_PARAMS};
pub use metrics::{mse, psnr, recon_loss, recon_loss_grad, ssim, ReconLoss, SsimReference};
pub use render::{render, render_backward, RenderGrads};

use crate::image::{ImageBuffer, ImageError};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-15;

/// Per-parameter-class Adam step sizes. The mean step decays
/// log-linearly from `mean` to `mean_final` over the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub mean: f64,
    pub mean_final: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub color: f64,
    pub opacity: f64,
}

impl LearningRates {
    /// Defaults scaled to an `h x w` image: means start at
    /// `2e-3 * diagonal` px and decay to 1% of that.
    pub fn for_image(h: usize, w: usize) -> Self {
        let diag = ((h * h + w * w) as f64).sqrt();
        Self {
            mean: 2e-3 * diag,
            mean_final: 2e-5 * diag,
            log_scale: 5e-3,
            rotation: 5e-3,
            color: 2.5e-3,
            opacity: 5e-2,
        }
    }

    fn per_slot(&self, progress: f64) -> Params {
        let p = progress.clamp(0.0, 1.0);
        let mean = (self.mean.ln() * (1.0 - p) + self.mean_final.ln() * p).exp();
        [
            mean,
            mean,
            self.log_scale,
            self.log_scale,
            self.rotation,
            self.color,
            self.color,
            self.color,
            self.opacity,
        ]
    }
}

/// One Adam update of every primitive. `progress` in `[0, 1]` drives the
/// mean step-size decay.
pub fn adam_step(cloud: &mut GaussianCloud, grads: &[Params], lr: &LearningRates, progress: f64) {
    assert_eq!(grads.len(), cloud.len());
    cloud.adam_step += 1;
    let t = cloud.adam_step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    let steps = lr.per_slot(progress);
    for i in 0..cloud.len() {
        let mut p = cloud.gaussians[i].params();
        let m = &mut cloud.adam_m[i];
        let v = &mut cloud.adam_v[i];
        for k in 0..N_PARAMS {
            let g = grads[i][k];
            m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g;
            v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g * g;
            p[k] -= steps[k] * (m[k] / bc1) / ((v[k] / bc2).sqrt() + ADAM_EPS);
        }
        cloud.gaussians[i] = Gaussian2D::from_params(&p);
    }
}

/// Result of one fitting step, evaluated before the parameter update.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub rendered: ImageBuffer,
    pub loss: ReconLoss,
}

/// Stateful single-image fitter.
#[derive(Debug, Clone)]
pub struct SplatFitter {
    pub cloud: GaussianCloud,
    pub lr: LearningRates,
    pub lambda_ssim: f64,
    pub total_iterations: usize,
    iteration: usize,
}

impl SplatFitter {
    pub fn new(cloud: GaussianCloud, lr: LearningRates, lambda_ssim: f64, total_iterations: usize) -> Self {
        Self { cloud, lr, lambda_ssim, total_iterations, iteration: 0 }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Render, score against `target`, backpropagate, accumulate densification
    /// statistics and take one Adam step. With `with_target_grad` the loss
    /// gradient w.r.t. the target is returned as well.
    pub fn step(&mut self, target: &ImageBuffer, with_target_grad: bool) -> Result<StepOutcome, ImageError> {
        let (h, w, ch) = target.shape();
        let rendered = render(&self.cloud, h, w, ch);
        let loss = recon_loss_grad(&rendered, target, self.lambda_ssim, with_target_grad)?;
        let grads = render_backward(&self.cloud, &loss.grad_rendered);
        self.cloud.accumulate(&grads.pos_grad_norm, &grads.visible);
        let progress = self.iteration as f64 / self.total_iterations.max(1) as f64;
        adam_step(&mut self.cloud, &grads.params, &self.lr, progress);
        self.iteration += 1;
        Ok(StepOutcome { rendered, loss })
    }

    pub fn render(&self, h: usize, w: usize, channels: usize) -> ImageBuffer {
        render(&self.cloud, h, w, channels)
    }
}
