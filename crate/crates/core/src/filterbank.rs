//! Two-channel analysis/synthesis filter bank with a learnable high-pass
//! analysis filter and perfect-reconstruction residual losses.
//!
//! Filters are finite tap sequences read as polynomials in `z^-1`: the tap at
//! index `n` is the coefficient of `z^-n`. The two residuals are
//!
//! ```text
//! alias(z) = Ls(z) La(-z) + Hs(z) Ha(-z)
//! dist(z)  = Ls(z) La(z)  + Hs(z) Ha(z) - 2 z^-d,   d = taps - 1
//! ```
//!
//! where `Ha` is the *effective* analysis high-pass: `alpha * base` in
//! [`LearnMode::Scale`] and the free taps in [`LearnMode::Whole`]. Both
//! residuals are affine in `Ha`, so the loss `|alias|^2 + |dist|^2` is a
//! quadratic and its gradient is computed in closed form.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("filter must have at least one tap")]
    Empty,
    #[error("tap {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("filter lengths differ: {0:?}")]
    LengthMismatch(Vec<usize>),
}

/// Finite real coefficient sequence indexed by delay.
#[derive(Clone, PartialEq)]
pub struct FilterTaps(Vec<f64>);

impl FilterTaps {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, FilterError> {
        if coeffs.is_empty() {
            return Err(FilterError::Empty);
        }
        if let Some((index, &value)) = coeffs.iter().enumerate().find(|(_, c)| !c.is_finite()) {
            return Err(FilterError::NonFinite { index, value });
        }
        Ok(Self(coeffs))
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len >= 1, "filter must have at least one tap");
        Self(vec![0.0; len])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self(self.0.iter().map(|c| c * k).collect())
    }

    /// Squared L2 norm of the coefficient sequence.
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn add(&self, other: &Self) -> Self {
        let n = self.len().max(other.len());
        let coeffs = (0..n)
            .map(|i| self.0.get(i).unwrap_or(&0.0) + other.0.get(i).unwrap_or(&0.0))
            .collect();
        Self(coeffs)
    }
}

impl fmt::Debug for FilterTaps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

/// Polynomial product of two tap sequences (full linear convolution).
pub fn poly_conv(a: &FilterTaps, b: &FilterTaps) -> FilterTaps {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.0.iter().enumerate() {
        for (j, y) in b.0.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    FilterTaps(out)
}

/// Substitutes `z -> -z`: the tap at delay `n` is multiplied by `(-1)^n`.
pub fn alternate_signs(a: &FilterTaps) -> FilterTaps {
    FilterTaps(
        a.0.iter()
            .enumerate()
            .map(|(n, &c)| if n % 2 == 1 { -c } else { c })
            .collect(),
    )
}

/// Which part of the analysis high-pass is learnable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LearnMode {
    /// A single scalar multiplies the frozen base high-pass.
    Scale,
    /// Every high-pass analysis tap is free.
    Whole,
}

impl LearnMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnMode::Scale => "scale",
            LearnMode::Whole => "whole",
        }
    }
}

impl fmt::Display for LearnMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LearnMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scale" => Ok(LearnMode::Scale),
            "whole" => Ok(LearnMode::Whole),
            other => Err(format!("unknown mode `{other}` (expected scale or whole)")),
        }
    }
}

/// Gradient of the PR loss with respect to the learnable state.
#[derive(Debug, Clone, PartialEq)]
pub enum PrGrad {
    Scale(f64),
    Whole(Vec<f64>),
}

/// Analysis/synthesis filter bank. The base high-pass is frozen; what is
/// learned depends on [`LearnMode`].
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    lo_a: FilterTaps,
    hi_a_base: FilterTaps,
    lo_s: FilterTaps,
    hi_s: FilterTaps,
    alpha: f64,
    hi_a_free: FilterTaps,
    mode: LearnMode,
}

impl FilterBank {
    pub fn new(
        lo_a: FilterTaps,
        hi_a_base: FilterTaps,
        lo_s: FilterTaps,
        hi_s: FilterTaps,
        mode: LearnMode,
        init_alpha: f64,
    ) -> Result<Self, FilterError> {
        let lens = vec![lo_a.len(), hi_a_base.len(), lo_s.len(), hi_s.len()];
        if lens.iter().any(|&l| l != lens[0]) {
            return Err(FilterError::LengthMismatch(lens));
        }
        if !init_alpha.is_finite() {
            return Err(FilterError::NonFinite { index: 0, value: init_alpha });
        }
        let hi_a_free = match mode {
            LearnMode::Scale => FilterTaps::zeros(hi_a_base.len()),
            LearnMode::Whole => hi_a_base.scaled(init_alpha),
        };
        let alpha = match mode {
            LearnMode::Scale => init_alpha,
            LearnMode::Whole => 0.0,
        };
        Ok(Self { lo_a, hi_a_base, lo_s, hi_s, alpha, hi_a_free, mode })
    }

    /// Orthonormal Haar bank (taps of magnitude 1/sqrt 2) whose synthesis
    /// pair cancels both residuals exactly at `alpha = 1`. Whole mode starts
    /// from the free high-pass `init_alpha * base`.
    pub fn haar(mode: LearnMode, init_alpha: f64) -> Self {
        let s = FRAC_1_SQRT_2;
        let taps = |a: f64, b: f64| FilterTaps(vec![a, b]);
        Self::new(taps(s, s), taps(s, -s), taps(s, s), taps(-s, s), mode, init_alpha)
            .expect("Haar taps are well formed")
    }

    pub fn mode(&self) -> LearnMode {
        self.mode
    }

    pub fn lowpass_analysis(&self) -> &FilterTaps {
        &self.lo_a
    }

    pub fn highpass_base(&self) -> &FilterTaps {
        &self.hi_a_base
    }

    pub fn lowpass_synthesis(&self) -> &FilterTaps {
        &self.lo_s
    }

    pub fn highpass_synthesis(&self) -> &FilterTaps {
        &self.hi_s
    }

    pub fn tap_len(&self) -> usize {
        self.lo_a.len()
    }

    /// Delay of the distortion target `2 z^-d`.
    pub fn delay(&self) -> usize {
        self.tap_len() - 1
    }

    /// Scale factor in Scale mode. In Whole mode this is the projection of
    /// the free taps onto the base high-pass, which equals 1 exactly when the
    /// free taps coincide with the base.
    pub fn alpha(&self) -> f64 {
        match self.mode {
            LearnMode::Scale => self.alpha,
            LearnMode::Whole => {
                let dot: f64 = self
                    .hi_a_free
                    .0
                    .iter()
                    .zip(&self.hi_a_base.0)
                    .map(|(a, b)| a * b)
                    .sum();
                dot / self.hi_a_base.norm_sq()
            }
        }
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        assert_eq!(self.mode, LearnMode::Scale, "alpha is only learnable in scale mode");
        self.alpha = alpha;
    }

    pub fn free_taps(&self) -> &FilterTaps {
        &self.hi_a_free
    }

    pub fn set_free_taps(&mut self, taps: FilterTaps) {
        assert_eq!(self.mode, LearnMode::Whole, "free taps are only learnable in whole mode");
        assert_eq!(taps.len(), self.hi_a_base.len());
        self.hi_a_free = taps;
    }

    /// Analysis high-pass actually applied to the signal.
    pub fn effective_highpass(&self) -> FilterTaps {
        match self.mode {
            LearnMode::Scale => self.hi_a_base.scaled(self.alpha),
            LearnMode::Whole => self.hi_a_free.clone(),
        }
    }

    /// `Ls(z) La(-z) + Hs(z) Ha(-z)`; zero iff aliasing cancels.
    pub fn alias_residual(&self) -> FilterTaps {
        let h = self.effective_highpass();
        poly_conv(&self.lo_s, &alternate_signs(&self.lo_a))
            .add(&poly_conv(&self.hi_s, &alternate_signs(&h)))
    }

    /// `Ls(z) La(z) + Hs(z) Ha(z) - 2 z^-d`; zero iff the bank is a pure delay.
    pub fn dist_residual(&self) -> FilterTaps {
        let h = self.effective_highpass();
        let mut r = poly_conv(&self.lo_s, &self.lo_a).add(&poly_conv(&self.hi_s, &h));
        r.0[self.delay()] -= 2.0;
        r
    }

    pub fn pr_loss(&self) -> f64 {
        self.alias_residual().norm_sq() + self.dist_residual().norm_sq()
    }

    /// Gradient of [`pr_loss`](Self::pr_loss) with respect to each tap of the
    /// effective high-pass, regardless of mode.
    pub fn pr_grad_effective(&self) -> Vec<f64> {
        let alias = self.alias_residual();
        let dist = self.dist_residual();
        let hs = self.hi_s.coeffs();
        (0..self.tap_len())
            .map(|k| {
                let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
                hs.iter()
                    .enumerate()
                    .map(|(j, &g)| 2.0 * g * (sign * alias.0[j + k] + dist.0[j + k]))
                    .sum()
            })
            .collect()
    }

    pub fn pr_grad(&self) -> PrGrad {
        let g = self.pr_grad_effective();
        match self.mode {
            LearnMode::Scale => PrGrad::Scale(chain_to_alpha(&g, &self.hi_a_base)),
            LearnMode::Whole => PrGrad::Whole(g),
        }
    }

    /// One plain gradient-descent step on the learnable state. `grad` must
    /// match the mode.
    pub fn descend(&mut self, grad: &PrGrad, lr: f64) {
        match (self.mode, grad) {
            (LearnMode::Scale, PrGrad::Scale(g)) => self.alpha -= lr * g,
            (LearnMode::Whole, PrGrad::Whole(g)) => {
                assert_eq!(g.len(), self.hi_a_free.len());
                for (t, d) in self.hi_a_free.0.iter_mut().zip(g) {
                    *t -= lr * d;
                }
            }
            (mode, grad) => panic!("gradient {grad:?} does not match mode {mode}"),
        }
    }
}

/// Chain rule from effective high-pass taps to the scale factor.
pub(crate) fn chain_to_alpha(tap_grad: &[f64], base: &FilterTaps) -> f64 {
    tap_grad.iter().zip(base.coeffs()).map(|(g, b)| g * b).sum()
}

impl PrGrad {
    pub fn scaled(&self, k: f64) -> PrGrad {
        match self {
            PrGrad::Scale(g) => PrGrad::Scale(g * k),
            PrGrad::Whole(g) => PrGrad::Whole(g.iter().map(|x| x * k).collect()),
        }
    }

    pub fn add(&self, other: &PrGrad) -> PrGrad {
        match (self, other) {
            (PrGrad::Scale(a), PrGrad::Scale(b)) => PrGrad::Scale(a + b),
            (PrGrad::Whole(a), PrGrad::Whole(b)) => {
                PrGrad::Whole(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            _ => panic!("cannot add gradients of different modes"),
        }
    }
}
