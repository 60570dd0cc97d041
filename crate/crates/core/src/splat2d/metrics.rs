//! PSNR, SSIM and the L1 + D-SSIM reconstruction loss, with gradients.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5) applied as a zero-padded
//! "same" filter, `C1 = 0.01^2`, `C2 = 0.03^2`, averaged over all pixels and
//! channels.

use crate::image::{ImageBuffer, ImageError};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
const PSNR_CAP: f64 = 99.0;

fn window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let half = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable zero-padded "same" filtering of an interleaved raster.
fn blur(src: &[f64], h: usize, w: usize, ch: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let half = WINDOW / 2;
    let stride = w * ch;
    let mut tmp = vec![0.0; src.len()];
    for (row_in, row_out) in src.chunks_exact(stride).zip(tmp.chunks_exact_mut(stride)) {
        for (t, &kw) in k.iter().enumerate() {
            // output column c reads input column c + t - half
            let shift = t.abs_diff(half).min(w) * ch;
            let (dst, s) = if t < half {
                (&mut row_out[shift..], &row_in[..stride - shift])
            } else {
                (&mut row_out[..stride - shift], &row_in[shift..])
            };
            dst.iter_mut().zip(s).for_each(|(d, v)| *d += kw * v);
        }
    }
    let mut out = vec![0.0; src.len()];
    for r in 0..h {
        let lo = r.saturating_sub(half);
        let hi = (r + half).min(h - 1);
        let dst = &mut out[r * stride..(r + 1) * stride];
        for y in lo..=hi {
            let kw = k[y + half - r];
            let s = &tmp[y * stride..(y + 1) * stride];
            dst.iter_mut().zip(s).for_each(|(d, v)| *d += kw * v);
        }
    }
    out
}

struct SsimResult {
    value: f64,
    grad_x: Option<Vec<f64>>,
    grad_y: Option<Vec<f64>>,
}

fn product(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p * q).collect()
}

/// Window means of `y` and `y^2`.
fn moments(y: &ImageBuffer) -> (Vec<f64>, Vec<f64>) {
    let (h, w, ch) = y.shape();
    let k = window();
    (blur(y.data(), h, w, ch, &k), blur(&product(y.data(), y.data()), h, w, ch, &k))
}

fn ssim_impl(
    x: &ImageBuffer,
    y: &ImageBuffer,
    y_moments: Option<(&[f64], &[f64])>,
    want_gx: bool,
    want_gy: bool,
) -> SsimResult {
    let (h, w, ch) = x.shape();
    let k = window();
    let xd = x.data();
    let yd = y.data();
    let n = xd.len();
    let owned;
    let (mu_y, e_yy) = match y_moments {
        Some(m) => m,
        None => {
            owned = moments(y);
            (&owned.0[..], &owned.1[..])
        }
    };
    let mu_x = blur(xd, h, w, ch, &k);
    let e_xx = blur(&product(xd, xd), h, w, ch, &k);
    let e_xy = blur(&product(xd, yd), h, w, ch, &k);

    let mut total = 0.0;
    // per-pixel partials of the SSIM map w.r.t. (mu_x, e_xx, e_xy) and (mu_y, e_yy)
    let mut g_mx = vec![0.0; if want_gx { n } else { 0 }];
    let mut g_my = vec![0.0; if want_gy { n } else { 0 }];
    let mut g_xx = vec![0.0; if want_gx { n } else { 0 }];
    let mut g_yy = vec![0.0; if want_gy { n } else { 0 }];
    let mut g_xy = vec![0.0; if want_gx || want_gy { n } else { 0 }];
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = e_xx[i] - mx * mx;
        let vy = e_yy[i] - my * my;
        let cxy = e_xy[i] - mx * my;
        let a = 2.0 * mx * my + C1;
        let b = 2.0 * cxy + C2;
        let c = mx * mx + my * my + C1;
        let d = vx + vy + C2;
        let s = a * b / (c * d);
        total += s;
        if want_gx || want_gy {
            g_xy[i] = 2.0 * s / b;
        }
        if want_gx {
            g_xx[i] = -s / d;
            g_mx[i] = s * (2.0 * my / a - 2.0 * mx / c) + 2.0 * mx * s / d - 2.0 * my * s / b;
        }
        if want_gy {
            g_yy[i] = -s / d;
            g_my[i] = s * (2.0 * mx / a - 2.0 * my / c) + 2.0 * my * s / d - 2.0 * mx * s / b;
        }
    }
    let value = total / n as f64;
    let inv_n = 1.0 / n as f64;
    // the window is symmetric, so the adjoint of the blur is the blur itself
    let bc = if want_gx || want_gy { blur(&g_xy, h, w, ch, &k) } else { Vec::new() };
    let grad = |g_mu: &[f64], g_sq: &[f64], own: &[f64], other: &[f64]| {
        let bm = blur(g_mu, h, w, ch, &k);
        let bs = blur(g_sq, h, w, ch, &k);
        (0..n)
            .map(|i| inv_n * (bm[i] + 2.0 * own[i] * bs[i] + other[i] * bc[i]))
            .collect::<Vec<_>>()
    };
    let grad_x = want_gx.then(|| grad(&g_mx, &g_xx, xd, yd));
    let grad_y = want_gy.then(|| grad(&g_my, &g_yy, yd, xd));
    SsimResult { value, grad_x, grad_y }
}

pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, ImageError> {
    a.same_shape(b)?;
    Ok(ssim_impl(a, b, None, false, false).value)
}

/// A fixed reference image with its window moments precomputed, for
/// scoring many images against the same target.
#[derive(Debug, Clone)]
pub struct SsimReference {
    image: ImageBuffer,
    mu: Vec<f64>,
    e_sq: Vec<f64>,
}

impl SsimReference {
    pub fn new(image: ImageBuffer) -> Self {
        let (mu, e_sq) = moments(&image);
        Self { image, mu, e_sq }
    }

    pub fn image(&self) -> &ImageBuffer {
        &self.image
    }

    /// Same value as [`ssim`]`(x, reference)`.
    pub fn ssim(&self, x: &ImageBuffer) -> Result<f64, ImageError> {
        x.same_shape(&self.image)?;
        Ok(ssim_impl(x, &self.image, Some((&self.mu, &self.e_sq)), false, false).value)
    }
}

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, ImageError> {
    a.same_shape(b)?;
    let n = a.data().len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// PSNR for unit dynamic range, capped at 99 dB.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, ImageError> {
    let m = mse(a, b)?;
    if m < 1e-10 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

/// Value and gradients of `(1 - lambda) * L1 + lambda * (1 - SSIM) / 2`.
#[derive(Debug, Clone)]
pub struct ReconLoss {
    pub value: f64,
    pub l1: f64,
    pub ssim: f64,
    pub grad_rendered: ImageBuffer,
    pub grad_target: Option<ImageBuffer>,
}

pub fn recon_loss(rendered: &ImageBuffer, target: &ImageBuffer, lambda: f64) -> Result<f64, ImageError> {
    rendered.same_shape(target)?;
    let l1 = l1(rendered, target);
    let s = if lambda != 0.0 { ssim_impl(rendered, target, None, false, false).value } else { 1.0 };
    Ok((1.0 - lambda) * l1 + lambda * (1.0 - s) / 2.0)
}

/// Subgradient of `|d|` taking 0 at the kink.
fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn l1(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data().len() as f64
}

/// Loss plus gradients w.r.t. the rendering and, optionally, the target.
pub fn recon_loss_grad(
    rendered: &ImageBuffer,
    target: &ImageBuffer,
    lambda: f64,
    with_target_grad: bool,
) -> Result<ReconLoss, ImageError> {
    rendered.same_shape(target)?;
    let n = rendered.data().len() as f64;
    let l1 = l1(rendered, target);
    let sr = ssim_impl(rendered, target, None, true, with_target_grad);
    let value = (1.0 - lambda) * l1 + lambda * (1.0 - sr.value) / 2.0;

    let (h, w, ch) = rendered.shape();
    let mut gr = ImageBuffer::zeros(h, w, ch);
    let gx = sr.grad_x.expect("requested");
    for (i, (g, (r, t))) in gr
        .data_mut()
        .iter_mut()
        .zip(rendered.data().iter().zip(target.data()))
        .enumerate()
    {
        *g = (1.0 - lambda) * sign(r - t) / n - 0.5 * lambda * gx[i];
    }
    let grad_target = sr.grad_y.map(|gy| {
        let mut gt = ImageBuffer::zeros(h, w, ch);
        for (i, (g, (r, t))) in gt
            .data_mut()
            .iter_mut()
            .zip(rendered.data().iter().zip(target.data()))
            .enumerate()
        {
            *g = -(1.0 - lambda) * sign(r - t) / n - 0.5 * lambda * gy[i];
        }
        gt
    });
    Ok(ReconLoss { value, l1, ssim: sr.value, grad_rendered: gr, grad_target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, ch: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(h, w, ch, |_, _, _| rng.gen::<f64>())
    }

    #[test]
    fn cached_reference_matches_direct_ssim() {
        let a = random(12, 17, 3, 1);
        let b = random(12, 17, 3, 2);
        let r = SsimReference::new(b.clone());
        assert_eq!(r.ssim(&a).unwrap(), ssim(&a, &b).unwrap());
        assert!(r.ssim(&random(12, 16, 3, 1)).is_err());
    }

    #[test]
    fn blur_matches_direct_window_sum() {
        let (h, w, ch) = (9, 14, 3);
        let img = random(h, w, ch, 11);
        let k = window();
        let out = blur(img.data(), h, w, ch, &k);
        for r in 0..h {
            for c in 0..w {
                for z in 0..ch {
                    let mut s = 0.0;
                    for dy in 0..WINDOW {
                        for dx in 0..WINDOW {
                            let (y, x) = (r as isize + dy as isize - 5, c as isize + dx as isize - 5);
                            if (0..h as isize).contains(&y) && (0..w as isize).contains(&x) {
                                s += k[dy] * k[dx] * img.get(y as usize, x as usize, z);
                            }
                        }
                    }
                    assert!((out[(r * w + c) * ch + z] - s).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn window_is_normalized_and_symmetric() {
        let w = window();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..WINDOW {
            assert_eq!(w[i], w[WINDOW - 1 - i]);
        }
    }

    #[test]
    fn identical_images() {
        let a = random(16, 12, 3, 1);
        assert_eq!(psnr(&a, &a).unwrap(), 99.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(recon_loss(&a, &a, 0.2).unwrap().abs() < 1e-12);
        assert!(recon_loss(&a, &a, 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn constant_images() {
        let a = ImageBuffer::filled(8, 8, 1, 0.0);
        let b = ImageBuffer::filled(8, 8, 1, 0.5);
        // 10 log10(1 / 0.25)
        assert!((psnr(&a, &b).unwrap() - 6.020599913279624).abs() < 1e-12);
        let c = ImageBuffer::filled(8, 8, 1, 0.8);
        assert!((recon_loss(&b, &c, 0.0).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn ssim_is_symmetric() {
        for seed in 0..5 {
            let a = random(12, 14, 3, seed);
            let b = random(12, 14, 3, seed + 50);
            assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = ImageBuffer::zeros(4, 4, 1);
        let b = ImageBuffer::zeros(4, 4, 3);
        assert!(matches!(psnr(&a, &b), Err(ImageError::ShapeMismatch { .. })));
        assert!(ssim(&a, &b).is_err());
        assert!(recon_loss(&a, &b, 0.2).is_err());
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let r = random(9, 10, 2, 3);
        let t = random(9, 10, 2, 4);
        let lambda = 0.35;
        let loss = recon_loss_grad(&r, &t, lambda, true).unwrap();
        assert!((loss.value - recon_loss(&r, &t, lambda).unwrap()).abs() < 1e-15);
        let gt = loss.grad_target.unwrap();
        let eps = 1e-6;
        for idx in [0, 7, 33, 90, 179] {
            let bump = |img: &ImageBuffer, d: f64| {
                let mut m = img.clone();
                m.data_mut()[idx] += d;
                m
            };
            let fd_r = (recon_loss(&bump(&r, eps), &t, lambda).unwrap()
                - recon_loss(&bump(&r, -eps), &t, lambda).unwrap())
                / (2.0 * eps);
            let fd_t = (recon_loss(&r, &bump(&t, eps), lambda).unwrap()
                - recon_loss(&r, &bump(&t, -eps), lambda).unwrap())
                / (2.0 * eps);
            let g = loss.grad_rendered.data()[idx];
            assert!((g - fd_r).abs() < 1e-6 * fd_r.abs().max(1e-3), "{g} vs {fd_r}");
            let g = gt.data()[idx];
            assert!((g - fd_t).abs() < 1e-6 * fd_t.abs().max(1e-3), "{g} vs {fd_t}");
        }
    }
}
