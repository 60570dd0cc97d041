//! Additive rasterization of 2D Gaussians and its reverse-mode adjoint.
//!
//! `pixel_c = sum_g sigmoid(o_g) * color_gc * exp(-q_g / 2)` where `q_g` is the
//! squared Mahalanobis distance from the pixel center to the mean. Samples
//! with `q > 9` (beyond 3 sigma) contribute exactly zero.

use rayon::prelude::*;

use super::gaussian::{slot, Gaussian2D, GaussianCloud, Params, N_PARAMS};
use crate::image::ImageBuffer;

const CUTOFF_SIGMA: f64 = 3.0;
const CUTOFF_Q: f64 = CUTOFF_SIGMA * CUTOFF_SIGMA;
const ROW_BAND: usize = 16;

#[derive(Debug, Clone, Copy)]
struct Prepared {
    mean: [f64; 2],
    cos: f64,
    sin: f64,
    inv_var: [f64; 2],
    opacity: f64,
    color: [f64; 3],
    rows: (usize, usize),
    cols: (usize, usize),
}

impl Prepared {
    fn new(g: &Gaussian2D, h: usize, w: usize) -> Option<Self> {
        let (sin, cos) = g.rotation.sin_cos();
        let [s0, s1] = g.scales();
        let var_x = cos * cos * s0 * s0 + sin * sin * s1 * s1;
        let var_y = sin * sin * s0 * s0 + cos * cos * s1 * s1;
        let ext_x = CUTOFF_SIGMA * var_x.sqrt();
        let ext_y = CUTOFF_SIGMA * var_y.sqrt();
        // pixel centers sit at index + 0.5
        let span = |center: f64, ext: f64, len: usize| -> Option<(usize, usize)> {
            let lo = (center - ext - 0.5).ceil().max(0.0);
            let hi = (center + ext - 0.5).floor().min(len as f64 - 1.0);
            (lo <= hi).then(|| (lo as usize, hi as usize + 1))
        };
        let cols = span(g.mean[0], ext_x, w)?;
        let rows = span(g.mean[1], ext_y, h)?;
        Some(Self {
            mean: g.mean,
            cos,
            sin,
            inv_var: [1.0 / (s0 * s0), 1.0 / (s1 * s1)],
            opacity: g.opacity(),
            color: g.color,
            rows,
            cols,
        })
    }

    /// Rotated offsets `(u, v)` and Mahalanobis `q` of a pixel center.
    #[inline]
    fn eval(&self, row: usize, col: usize) -> (f64, f64, f64) {
        let dx = col as f64 + 0.5 - self.mean[0];
        let dy = row as f64 + 0.5 - self.mean[1];
        let u = self.cos * dx + self.sin * dy;
        let v = -self.sin * dx + self.cos * dy;
        (u, v, u * u * self.inv_var[0] + v * v * self.inv_var[1])
    }
}

fn prepare_all(cloud: &GaussianCloud, h: usize, w: usize) -> Vec<Option<Prepared>> {
    cloud.gaussians().iter().map(|g| Prepared::new(g, h, w)).collect()
}

/// Renders `cloud` into an `h x w x channels` image. Channel `c` uses
/// `color[c]`; greyscale output uses only the first color component.
pub fn render(cloud: &GaussianCloud, h: usize, w: usize, channels: usize) -> ImageBuffer {
    assert!((1..=3).contains(&channels), "1 to 3 channels supported");
    let prepared: Vec<Prepared> = prepare_all(cloud, h, w).into_iter().flatten().collect();
    let mut out = ImageBuffer::zeros(h, w, channels);
    let stride = w * channels;
    out.data_mut()
        .par_chunks_mut(ROW_BAND * stride)
        .enumerate()
        .for_each(|(band, chunk)| {
            let r0 = band * ROW_BAND;
            let r1 = r0 + chunk.len() / stride;
            for p in &prepared {
                let rows = (p.rows.0.max(r0), p.rows.1.min(r1));
                for row in rows.0..rows.1 {
                    let line = &mut chunk[(row - r0) * stride..(row - r0 + 1) * stride];
                    for col in p.cols.0..p.cols.1 {
                        let (_, _, q) = p.eval(row, col);
                        if q > CUTOFF_Q {
                            continue;
                        }
                        let wgt = p.opacity * (-0.5 * q).exp();
                        for c in 0..channels {
                            line[col * channels + c] += wgt * p.color[c];
                        }
                    }
                }
            }
        });
    out
}

/// Reverse-mode gradients of a scalar loss through [`render`].
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGrads {
    /// `dL/dparam` in [`Gaussian2D::params`] order.
    pub params: Vec<Params>,
    /// `|dL/dmean|` per primitive.
    pub pos_grad_norm: Vec<f64>,
    /// Whether the primitive touched any pixel.
    pub visible: Vec<bool>,
}

/// Pulls `grad_image = dL/d(render)` back to every primitive parameter.
pub fn render_backward(cloud: &GaussianCloud, grad_image: &ImageBuffer) -> RenderGrads {
    let (h, w, channels) = grad_image.shape();
    let gi = grad_image.data();
    let per: Vec<(Params, bool)> = cloud
        .gaussians()
        .par_iter()
        .map(|g| {
            let mut d = [0.0; N_PARAMS];
            let Some(p) = Prepared::new(g, h, w) else {
                return (d, false);
            };
            let mut touched = false;
            let mut d_opacity = 0.0;
            for row in p.rows.0..p.rows.1 {
                for col in p.cols.0..p.cols.1 {
                    let (u, v, q) = p.eval(row, col);
                    if q > CUTOFF_Q {
                        continue;
                    }
                    touched = true;
                    let gauss = (-0.5 * q).exp();
                    let base = (row * w + col) * channels;
                    let mut s = 0.0;
                    for c in 0..channels {
                        let gc = gi[base + c];
                        d[slot::COLOR_R + c] += gc * p.opacity * gauss;
                        s += gc * p.color[c];
                    }
                    if s == 0.0 {
                        continue;
                    }
                    d_opacity += s * gauss;
                    let dq = -0.5 * gauss * p.opacity * s;
                    let du = 2.0 * u * p.inv_var[0];
                    let dv = 2.0 * v * p.inv_var[1];
                    d[slot::MEAN_X] += dq * (-du * p.cos + dv * p.sin);
                    d[slot::MEAN_Y] += dq * (-du * p.sin - dv * p.cos);
                    d[slot::ROTATION] += dq * (du * v - dv * u);
                    d[slot::LOG_SCALE_0] += dq * (-2.0 * u * u * p.inv_var[0]);
                    d[slot::LOG_SCALE_1] += dq * (-2.0 * v * v * p.inv_var[1]);
                }
            }
            d[slot::OPACITY] = d_opacity * p.opacity * (1.0 - p.opacity);
            (d, touched)
        })
        .collect();
    let pos_grad_norm = per.iter().map(|(d, _)| d[slot::MEAN_X].hypot(d[slot::MEAN_Y])).collect();
    let (params, visible) = per.into_iter().unzip();
    RenderGrads { params, pos_grad_norm, visible }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(x: f64, y: f64) -> Gaussian2D {
        Gaussian2D {
            mean: [x, y],
            log_scale: [1.2, 0.6],
            rotation: 0.4,
            color: [0.8, 0.3, -0.2],
            opacity_logit: 0.3,
        }
    }

    #[test]
    fn empty_cloud_renders_black() {
        let img = render(&GaussianCloud::new(vec![]), 5, 7, 3);
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transparent_limit() {
        let mut g = blob(4.0, 4.0);
        g.opacity_logit = -60.0;
        let img = render(&GaussianCloud::new(vec![g]), 8, 8, 3);
        assert!(img.data().iter().all(|v| v.abs() < 1e-25));
    }

    #[test]
    fn peak_value_at_center() {
        let g = Gaussian2D {
            mean: [2.5, 3.5],
            log_scale: [0.0, 0.0],
            rotation: 0.0,
            color: [1.0, 0.5, 0.25],
            opacity_logit: 0.0,
        };
        let img = render(&GaussianCloud::new(vec![g]), 6, 8, 3);
        assert!((img.get(3, 2, 0) - 0.5).abs() < 1e-15);
        assert!((img.get(3, 2, 2) - 0.125).abs() < 1e-15);
        assert!((img.get(3, 3, 0) - 0.5 * (-0.5f64).exp()).abs() < 1e-15);
        // beyond 3 sigma: exactly zero
        assert_eq!(img.get(3, 6, 0), 0.0);
    }

    #[test]
    fn banded_render_matches_direct_sum() {
        let gs: Vec<_> = (0..6).map(|i| blob(3.0 + 5.0 * i as f64, 2.0 + 7.0 * i as f64)).collect();
        let cloud = GaussianCloud::new(gs.clone());
        let img = render(&cloud, 40, 33, 3);
        let mut direct = ImageBuffer::zeros(40, 33, 3);
        for g in &gs {
            let p = Prepared::new(g, 40, 33).unwrap();
            for r in 0..40 {
                for c in 0..33 {
                    let (_, _, q) = p.eval(r, c);
                    if q <= CUTOFF_Q {
                        for ch in 0..3 {
                            let v = direct.get(r, c, ch) + p.opacity * g.color[ch] * (-0.5 * q).exp();
                            direct.set(r, c, ch, v);
                        }
                    }
                }
            }
        }
        assert!(img.max_abs_diff(&direct) < 1e-13);
    }
}
