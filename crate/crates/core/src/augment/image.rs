use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `height × width × channels` image with pixels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::shape("1 or 3 channels", format!("{channels} channels")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::shape(
                format!("{height}x{width}x{channels} pixels"),
                format!("{} values", pixels.len()),
            ));
        }
        let mut img = Self {
            height,
            width,
            channels,
            pixels,
        };
        img.clamp();
        Ok(img)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self {
            height,
            width,
            channels,
            pixels: vec![value.clamp(0.0, 1.0); height * width * channels],
        }
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

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, ch: usize) -> f32 {
        self.pixels[(r * self.width + c) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, ch: usize, v: f32) {
        self.pixels[(r * self.width + c) * self.channels + ch] = v;
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    pub(crate) fn clamp(&mut self) {
        for p in &mut self.pixels {
            *p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        }
    }

    /// Bilinear sample at fractional `(y, x)`; taps outside the image read `fill`.
    pub(crate) fn sample(&self, y: f64, x: f64, ch: usize, fill: f32) -> f32 {
        let y0 = y.floor();
        let x0 = x.floor();
        let fy = y - y0;
        let fx = x - x0;
        let tap = |r: f64, c: f64| -> f64 {
            if r < 0.0 || c < 0.0 || r >= self.height as f64 || c >= self.width as f64 {
                fill as f64
            } else {
                self.get(r as usize, c as usize, ch) as f64
            }
        };
        let mut v = (1.0 - fy) * (1.0 - fx) * tap(y0, x0);
        if fx > 0.0 {
            v += (1.0 - fy) * fx * tap(y0, x0 + 1.0);
        }
        if fy > 0.0 {
            v += fy * (1.0 - fx) * tap(y0 + 1.0, x0);
            if fx > 0.0 {
                v += fy * fx * tap(y0 + 1.0, x0 + 1.0);
            }
        }
        v as f32
    }

    /// Median of the four corner pixels of channel `ch`.
    pub(crate) fn corner_median(&self, ch: usize) -> f32 {
        let (h, w) = (self.height - 1, self.width - 1);
        let mut c = [
            self.get(0, 0, ch),
            self.get(0, w, ch),
            self.get(h, 0, ch),
            self.get(h, w, ch),
        ];
        c.sort_by(f32::total_cmp);
        0.5 * (c[1] + c[2])
    }
}
