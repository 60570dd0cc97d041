use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::ImageBuffer;

/// Number of scalar parameters per primitive.
pub const N_PARAMS: usize = 9;

/// Parameter slots in [`Gaussian2D::params`] order.
pub mod slot {
    pub const MEAN_X: usize = 0;
    pub const MEAN_Y: usize = 1;
    pub const LOG_SCALE_0: usize = 2;
    pub const LOG_SCALE_1: usize = 3;
    pub const ROTATION: usize = 4;
    pub const COLOR_R: usize = 5;
    pub const COLOR_G: usize = 6;
    pub const COLOR_B: usize = 7;
    pub const OPACITY: usize = 8;
}

pub type Params = [f64; N_PARAMS];

/// Anisotropic 2D Gaussian. `mean` is `(x, y)` in pixels with pixel
/// `(row, col)` centered at `(col + 0.5, row + 0.5)`; the covariance is
/// `R(rotation) diag(exp(log_scale))^2 R(rotation)^T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2D {
    pub mean: [f64; 2],
    pub log_scale: [f64; 2],
    pub rotation: f64,
    pub color: [f64; 3],
    pub opacity_logit: f64,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Gaussian2D {
    pub fn params(&self) -> Params {
        [
            self.mean[0],
            self.mean[1],
            self.log_scale[0],
            self.log_scale[1],
            self.rotation,
            self.color[0],
            self.color[1],
            self.color[2],
            self.opacity_logit,
        ]
    }

    pub fn from_params(p: &Params) -> Self {
        Self {
            mean: [p[0], p[1]],
            log_scale: [p[2], p[3]],
            rotation: p[4],
            color: [p[5], p[6], p[7]],
            opacity_logit: p[8],
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scales(&self) -> [f64; 2] {
        [self.log_scale[0].exp(), self.log_scale[1].exp()]
    }

    pub fn max_scale(&self) -> f64 {
        self.log_scale[0].max(self.log_scale[1]).exp()
    }

    /// Unit vector of the longest principal axis.
    pub fn major_axis(&self) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        if self.log_scale[0] >= self.log_scale[1] {
            [c, s]
        } else {
            [-s, c]
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }
}

/// Primitives plus per-primitive optimizer moments and densification
/// statistics. All per-primitive vectors stay the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    pub(crate) gaussians: Vec<Gaussian2D>,
    pub(crate) grad_accum: Vec<f64>,
    pub(crate) grad_count: Vec<u32>,
    pub(crate) adam_m: Vec<Params>,
    pub(crate) adam_v: Vec<Params>,
    pub(crate) adam_step: u64,
    pub(crate) peak_count: usize,
}

impl GaussianCloud {
    pub fn new(gaussians: Vec<Gaussian2D>) -> Self {
        let n = gaussians.len();
        Self {
            gaussians,
            grad_accum: vec![0.0; n],
            grad_count: vec![0; n],
            adam_m: vec![[0.0; N_PARAMS]; n],
            adam_v: vec![[0.0; N_PARAMS]; n],
            adam_step: 0,
            peak_count: n,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn gaussians(&self) -> &[Gaussian2D] {
        &self.gaussians
    }

    pub fn gaussians_mut(&mut self) -> &mut [Gaussian2D] {
        &mut self.gaussians
    }

    /// Largest count seen since construction.
    pub fn peak_count(&self) -> usize {
        self.peak_count
    }

    pub fn grad_accum(&self) -> &[f64] {
        &self.grad_accum
    }

    pub fn grad_count(&self) -> &[u32] {
        &self.grad_count
    }

    /// Adds one observation of positional-gradient magnitude to every
    /// primitive flagged visible.
    pub fn accumulate(&mut self, pos_grad_norm: &[f64], visible: &[bool]) {
        assert_eq!(pos_grad_norm.len(), self.len());
        assert_eq!(visible.len(), self.len());
        for i in 0..self.len() {
            if visible[i] {
                self.grad_accum[i] += pos_grad_norm[i];
                self.grad_count[i] += 1;
            }
        }
    }

    pub(crate) fn push(&mut self, g: Gaussian2D) {
        self.gaussians.push(g);
        self.grad_accum.push(0.0);
        self.grad_count.push(0);
        self.adam_m.push([0.0; N_PARAMS]);
        self.adam_v.push([0.0; N_PARAMS]);
    }

    pub(crate) fn retain_mask(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len());
        retain_by(&mut self.gaussians, keep);
        retain_by(&mut self.grad_accum, keep);
        retain_by(&mut self.grad_count, keep);
        retain_by(&mut self.adam_m, keep);
        retain_by(&mut self.adam_v, keep);
    }

    pub(crate) fn reset_stats(&mut self) {
        self.grad_accum.fill(0.0);
        self.grad_count.fill(0);
    }

    pub(crate) fn update_peak(&mut self) {
        self.peak_count = self.peak_count.max(self.len());
    }
}

fn retain_by<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut flags = keep.iter();
    v.retain(|_| *flags.next().unwrap());
}

/// `n0` primitives with uniform means, isotropic scale
/// `sqrt(h * w / (pi * n0))`, colors read from the target under each mean, and
/// opacity 0.5. Deterministic in `seed`.
pub fn init_cloud(target: &ImageBuffer, n0: usize, seed: u64) -> GaussianCloud {
    assert!(n0 >= 1, "need at least one Gaussian");
    let (h, w, ch) = target.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // at opacity 1/2 the primitives' total mass equals the image area
    let log_scale = ((h * w) as f64 / (std::f64::consts::PI * n0 as f64)).sqrt().ln();
    let gaussians = (0..n0)
        .map(|_| {
            let x = rng.gen::<f64>() * w as f64;
            let y = rng.gen::<f64>() * h as f64;
            let (r, c) = ((y as usize).min(h - 1), (x as usize).min(w - 1));
            let mut color = [0.0; 3];
            for (k, v) in color.iter_mut().enumerate() {
                *v = target.get(r, c, k.min(ch - 1));
            }
            Gaussian2D { mean: [x, y], log_scale: [log_scale; 2], rotation: 0.0, color, opacity_logit: 0.0 }
        })
        .collect();
    GaussianCloud::new(gaussians)
}
