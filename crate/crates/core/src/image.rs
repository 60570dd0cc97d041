//! Row-major `H x W x C` raster of `f64` samples.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("image dimensions must be non-zero (got {height}x{width}x{channels})")]
    ZeroDimension { height: usize, width: usize, channels: usize },
    #[error("data length {got} does not match {height}x{width}x{channels}")]
    DataLength { height: usize, width: usize, channels: usize, got: usize },
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("shape mismatch: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize, usize), b: (usize, usize, usize) },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(ImageError::ZeroDimension { height, width, channels });
        }
        if data.len() != height * width * channels {
            return Err(ImageError::DataLength { height, width, channels, got: data.len() });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite { index });
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "image dimensions must be non-zero");
        Self { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        let mut img = Self::zeros(height, width, channels);
        img.data.fill(value);
        img
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Self::zeros(height, width, channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    img.data[(r * width + c) * channels + ch] = f(r, c, ch);
                }
            }
        }
        img
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        let i = self.index(row, col, ch);
        self.data[i] = v;
    }

    pub fn same_shape(&self, other: &Self) -> Result<(), ImageError> {
        if self.shape() != other.shape() {
            return Err(ImageError::ShapeMismatch { a: self.shape(), b: other.shape() });
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.shape(), other.shape());
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Self { data, ..*self }
    }

    /// Anisotropic total variation summed over channels.
    pub fn total_variation(&self) -> f64 {
        let mut tv = 0.0;
        for r in 0..self.height {
            for c in 0..self.width {
                for ch in 0..self.channels {
                    let v = self.get(r, c, ch);
                    if c + 1 < self.width {
                        tv += (self.get(r, c + 1, ch) - v).abs();
                    }
                    if r + 1 < self.height {
                        tv += (self.get(r + 1, c, ch) - v).abs();
                    }
                }
            }
        }
        tv
    }

    /// Largest window of dims divisible by `multiple`, centered.
    pub fn center_crop_to_multiple(&self, multiple: usize) -> Self {
        let h = self.height / multiple * multiple;
        let w = self.width / multiple * multiple;
        assert!(h > 0 && w > 0, "image smaller than crop multiple {multiple}");
        let r0 = (self.height - h) / 2;
        let c0 = (self.width - w) / 2;
        Self::from_fn(h, w, self.channels, |r, c, ch| self.get(r + r0, c + c0, ch))
    }

    /// Replaces every `block x block` tile with its per-channel mean.
    pub fn block_mean(&self, block: usize) -> Self {
        assert!(self.height % block == 0 && self.width % block == 0);
        let mut out = Self::zeros(self.height, self.width, self.channels);
        let area = (block * block) as f64;
        for br in (0..self.height).step_by(block) {
            for bc in (0..self.width).step_by(block) {
                for ch in 0..self.channels {
                    let mut s = 0.0;
                    for r in br..br + block {
                        for c in bc..bc + block {
                            s += self.get(r, c, ch);
                        }
                    }
                    for r in br..br + block {
                        for c in bc..bc + block {
                            out.set(r, c, ch, s / area);
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructor_checks() {
        assert!(ImageBuffer::new(0, 2, 1, vec![]).is_err());
        assert!(matches!(
            ImageBuffer::new(2, 2, 1, vec![0.0; 3]),
            Err(ImageError::DataLength { got: 3, .. })
        ));
        assert!(matches!(
            ImageBuffer::new(1, 2, 1, vec![0.0, f64::INFINITY]),
            Err(ImageError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn crop_is_centered() {
        let img = ImageBuffer::from_fn(7, 10, 1, |r, c, _| (r * 10 + c) as f64);
        let crop = img.center_crop_to_multiple(4);
        assert_eq!(crop.shape(), (4, 8, 1));
        assert_eq!(crop.get(0, 0, 0), 11.0);
    }

    #[test]
    fn block_mean_of_ramp() {
        let img = ImageBuffer::from_fn(2, 4, 1, |r, c, _| (r * 4 + c) as f64);
        let bm = img.block_mean(2);
        assert_eq!(bm.data(), &[2.5, 2.5, 4.5, 4.5, 2.5, 2.5, 4.5, 4.5]);
    }
}
