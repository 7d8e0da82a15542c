//! Row-major sample grids shared by the satellite map, ground images and SSD heatmaps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("raster dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("raster must have 1 or 3 channels, got {0}")]
    Channels(usize),
    #[error("expected {expected} samples for the declared geometry, got {actual}")]
    SampleCount { expected: usize, actual: usize },
    #[error("sample {index} = {value} lies outside [0, 255]")]
    SampleRange { index: usize, value: f64 },
    #[error("pixel pitch must be positive and finite, got {0}")]
    Pitch(f64),
}

/// Intensity grid with 1 (gray) or 3 (RGB) interleaved channels.
///
/// Samples are real valued so grayscale conversion and interpolation never
/// round prematurely. Sample `(x, y)` of a single-channel raster has its
/// center at the continuous coordinate `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<f64>,
    pixel_pitch: Option<f64>,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        samples: Vec<f64>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyDimensions { width, height });
        }
        if channels != 1 && channels != 3 {
            return Err(RasterError::Channels(channels));
        }
        let expected = width * height * channels;
        if samples.len() != expected {
            return Err(RasterError::SampleCount {
                expected,
                actual: samples.len(),
            });
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=255.0).contains(*v))
        {
            return Err(RasterError::SampleRange { index, value });
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
            pixel_pitch: None,
        })
    }

    /// Single-channel raster filled with `value`.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, RasterError> {
        Self::new(width, height, 1, vec![value; width * height])
    }

    pub fn with_pixel_pitch(mut self, pitch: f64) -> Result<Self, RasterError> {
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(RasterError::Pitch(pitch));
        }
        self.pixel_pitch = Some(pitch);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn pixel_pitch(&self) -> Option<f64> {
        self.pixel_pitch
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.samples[(y * self.width + x) * self.channels + channel]
    }

    /// Gray value at integer pixel `(x, y)`; `None` outside the grid.
    #[inline]
    pub fn gray_at(&self, x: i64, y: i64) -> Option<f64> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        Some(self.samples[(y as usize * self.width + x as usize) * self.channels])
    }

    /// Bilinear interpolation of channel 0 at continuous sample coordinates.
    ///
    /// Returns `None` when the point lies outside `[0, w-1] x [0, h-1]`.
    /// Integer coordinates reproduce the stored sample exactly.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        let taps = BilinearTaps::new(x, y, self.width, self.height)?;
        Some(taps.apply(&self.samples, self.width, self.channels))
    }
}

/// Precomputed bilinear footprint of one continuous sample position.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BilinearTaps {
    pub x0: usize,
    pub y0: usize,
    pub fx: f64,
    pub fy: f64,
}

impl BilinearTaps {
    pub fn new(x: f64, y: f64, width: usize, height: usize) -> Option<Self> {
        if !(x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64) {
            return None;
        }
        let x0 = (x.floor() as usize).min(width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(height.saturating_sub(2));
        Some(Self {
            x0,
            y0,
            fx: x - x0 as f64,
            fy: y - y0 as f64,
        })
    }

    #[inline]
    pub fn apply(&self, samples: &[f64], width: usize, channels: usize) -> f64 {
        let at = |x: usize, y: usize| samples[(y * width + x) * channels];
        let x1 = if self.fx > 0.0 { self.x0 + 1 } else { self.x0 };
        let y1 = if self.fy > 0.0 { self.y0 + 1 } else { self.y0 };
        let top = at(self.x0, self.y0) * (1.0 - self.fx) + at(x1, self.y0) * self.fx;
        if self.fy == 0.0 {
            return top;
        }
        let bottom = at(self.x0, y1) * (1.0 - self.fx) + at(x1, y1) * self.fx;
        top * (1.0 - self.fy) + bottom * self.fy
    }
}
