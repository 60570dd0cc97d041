//! Deterministic synthetic targets for experiments and tests.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::ImageBuffer;

/// Sum of random plane waves with at most `max_cycles` cycles across the
/// image, per channel, rescaled to `[0.1, 0.9]`.
pub fn band_limited_noise(size: usize, max_cycles: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<[f64; 4]> = (0..3 * 24)
        .map(|_| {
            let kx = rng.gen_range(-(max_cycles as i64)..=max_cycles as i64) as f64;
            let ky = rng.gen_range(0..=max_cycles as i64) as f64;
            let amp = 1.0 / (1.0 + (kx * kx + ky * ky).sqrt());
            [kx, ky, amp, rng.gen::<f64>() * TAU]
        })
        .collect();
    let mut img = ImageBuffer::from_fn(size, size, 3, |r, c, ch| {
        waves[ch * 24..(ch + 1) * 24]
            .iter()
            .map(|[kx, ky, amp, phase]| {
                amp * (TAU * (kx * c as f64 + ky * r as f64) / size as f64 + phase).cos()
            })
            .sum()
    });
    normalize(&mut img, 0.1, 0.9);
    img
}

/// Side length of the trend-study targets.
pub const TREND_SIZE: usize = 128;

/// The three-target trend corpus: band-limited noise, checker plus blobs,
/// and the given natural photo (center-cropped to `TREND_SIZE`).
pub fn trend_targets(photo: &ImageBuffer) -> Vec<(String, ImageBuffer)> {
    assert!(photo.height() >= TREND_SIZE && photo.width() >= TREND_SIZE, "photo smaller than {TREND_SIZE}px");
    let crop = ImageBuffer::from_fn(TREND_SIZE, TREND_SIZE, 3, |r, c, ch| {
        let r0 = (photo.height() - TREND_SIZE) / 2;
        let c0 = (photo.width() - TREND_SIZE) / 2;
        photo.get(r + r0, c + c0, ch.min(photo.channels() - 1))
    });
    vec![
        ("noise".to_string(), band_limited_noise(TREND_SIZE, 8, 7)),
        ("checker".to_string(), checker_blob(TREND_SIZE, 16, 7)),
        ("photo".to_string(), crop),
    ]
}

/// Checkerboard of `cell`-pixel squares overlaid with a few soft colored
/// blobs. The grid is shifted off the origin so its edges do not line up
/// with power-of-two blocks.
pub fn checker_blob(size: usize, cell: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<[f64; 6]> = (0..4)
        .map(|_| {
            [
                rng.gen_range(0.2..0.8) * size as f64,
                rng.gen_range(0.2..0.8) * size as f64,
                rng.gen_range(0.08..0.2) * size as f64,
                rng.gen::<f64>(),
                rng.gen::<f64>(),
                rng.gen::<f64>(),
            ]
        })
        .collect();
    let shift = cell / 2 + 1;
    ImageBuffer::from_fn(size, size, 3, |r, c, ch| {
        let base = if ((r + shift) / cell + (c + shift) / cell) % 2 == 0 { 0.75 } else { 0.25 };
        let mut v = 0.6 * base;
        for [bx, by, rad, cr, cg, cb] in &blobs {
            let d2 = (c as f64 + 0.5 - bx).powi(2) + (r as f64 + 0.5 - by).powi(2);
            let wgt = (-d2 / (2.0 * rad * rad)).exp();
            v += 0.4 * wgt * [cr, cg, cb][ch];
        }
        v.clamp(0.0, 1.0)
    })
}

fn normalize(img: &mut ImageBuffer, lo: f64, hi: f64) {
    let min = img.data().iter().copied().fold(f64::INFINITY, f64::min);
    let max = img.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(1e-12);
    for v in img.data_mut() {
        *v = lo + (hi - lo) * (*v - min) / span;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic_and_in_range() {
        for img in [band_limited_noise(32, 6, 1), checker_blob(32, 8, 1)] {
            assert_eq!(img.shape(), (32, 32, 3));
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(band_limited_noise(16, 4, 3), band_limited_noise(16, 4, 3));
        assert_ne!(checker_blob(16, 4, 3), checker_blob(16, 4, 4));
    }
}
