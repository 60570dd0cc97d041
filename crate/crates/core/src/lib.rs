//! Learnable multi-level Haar DWT frequency modulation, plus a small 2D
//! Gaussian image-fitting trainer used to measure how the modulation
//! curriculum affects primitive growth.

pub mod cli;
pub mod corpus;
pub mod curriculum;
pub mod filterbank;
pub mod image;
pub mod pngio;
pub mod splat2d;
pub mod transform;

pub use filterbank::{FilterBank, FilterTaps, LearnMode, PrGrad};
pub use image::ImageBuffer;
