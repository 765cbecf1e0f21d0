use serde::{Deserialize, Serialize};

use super::image::Image;
use super::TransformLog;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Rotates about the image centre by `degrees` (counter-clockwise on screen),
/// bilinear resampling, uncovered pixels filled per channel with `fill`.
pub fn rotate(img: &Image, degrees: f64, fill: &[f32]) -> Image {
    if degrees == 0.0 {
        return img.clone();
    }
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (s, c) = degrees.to_radians().sin_cos();
    let mut out = Image::filled(h, w, ch, 0.0);
    for r in 0..h {
        for col in 0..w {
            let dy = r as f64 - cy;
            let dx = col as f64 - cx;
            // inverse map: destination → source
            let sx = cx + c * dx + s * dy;
            let sy = cy - s * dx + c * dy;
            for k in 0..ch {
                out.set(r, col, k, img.sample(sy, sx, k, fill[k]));
            }
        }
    }
    out.clamp();
    out
}

/// Rotation by an angle drawn from `Uniform(-max_degrees, max_degrees)`,
/// background filled with the corner-pixel median.
pub fn restricted_rotation(img: &Image, max_degrees: f64, rng: &mut Rng) -> (Image, f64) {
    if max_degrees == 0.0 {
        return (img.clone(), 0.0);
    }
    let angle = rng.uniform_range(-max_degrees, max_degrees);
    let fill: Vec<f32> = (0..img.channels()).map(|k| img.corner_median(k)).collect();
    (rotate(img, angle, &fill), angle)
}

/// Crops the `height × width` window at `(top, left)` and resizes it to
/// `out_h × out_w` with bilinear interpolation (half-pixel centres).
pub fn crop_resize(
    img: &Image,
    top: usize,
    left: usize,
    height: usize,
    width: usize,
    out_h: usize,
    out_w: usize,
) -> Result<Image> {
    if height == 0 || width == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::CropTooSmall { height, width });
    }
    if top + height > img.height() || left + width > img.width() {
        return Err(Error::shape(
            format!("crop inside {}x{}", img.height(), img.width()),
            format!("{height}x{width} at ({top}, {left})"),
        ));
    }
    let sy = height as f64 / out_h as f64;
    let sx = width as f64 / out_w as f64;
    let ch = img.channels();
    let mut out = Image::filled(out_h, out_w, ch, 0.0);
    for r in 0..out_h {
        let y = (top as f64 + (r as f64 + 0.5) * sy - 0.5)
            .clamp(top as f64, (top + height - 1) as f64);
        for c in 0..out_w {
            let x = (left as f64 + (c as f64 + 0.5) * sx - 0.5)
                .clamp(left as f64, (left + width - 1) as f64);
            for k in 0..ch {
                out.set(r, c, k, img.sample(y, x, k, 0.0));
            }
        }
    }
    out.clamp();
    Ok(out)
}

const CROP_ATTEMPTS: usize = 10;

/// Random crop covering `Uniform(scale)` of the area with aspect ratio in
/// `[3/4, 4/3]` (log-uniform), resized to `out_h × out_w`. Falls back to the
/// whole image when no sampled window fits.
pub fn random_resized_crop(
    img: &Image,
    scale: (f64, f64),
    out_h: usize,
    out_w: usize,
    rng: &mut Rng,
) -> Result<(Image, TransformLog)> {
    let (h, w) = (img.height() as f64, img.width() as f64);
    let (lr0, lr1) = ((3.0f64 / 4.0).ln(), (4.0f64 / 3.0).ln());
    for _ in 0..CROP_ATTEMPTS {
        let area = rng.uniform_range(scale.0, scale.1) * h * w;
        let ratio = rng.uniform_range(lr0, lr1).exp();
        let cw = (area * ratio).sqrt().round() as usize;
        let chh = (area / ratio).sqrt().round() as usize;
        if cw < 1 || chh < 1 {
            return Err(Error::CropTooSmall {
                height: chh,
                width: cw,
            });
        }
        if cw <= img.width() && chh <= img.height() {
            let top = rng.below(img.height() - chh + 1);
            let left = rng.below(img.width() - cw + 1);
            let out = crop_resize(img, top, left, chh, cw, out_h, out_w)?;
            return Ok((
                out,
                TransformLog::Crop {
                    top,
                    left,
                    height: chh,
                    width: cw,
                },
            ));
        }
    }
    let out = crop_resize(img, 0, 0, img.height(), img.width(), out_h, out_w)?;
    Ok((
        out,
        TransformLog::Crop {
            top: 0,
            left: 0,
            height: img.height(),
            width: img.width(),
        },
    ))
}

pub fn hflip(img: &Image) -> Image {
    let mut out = img.clone();
    for r in 0..img.height() {
        for c in 0..img.width() {
            for k in 0..img.channels() {
                out.set(r, c, k, img.get(r, img.width() - 1 - c, k));
            }
        }
    }
    out
}

/// Appearance transforms and their application probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppearanceJitter {
    /// Probability of applying the brightness/contrast/hue/saturation group.
    pub color_jitter_prob: f64,
    /// Factor drawn from `Uniform(1 - b, 1 + b)`.
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Hue shift drawn from `Uniform(-h, h)` turns, `h <= 0.5`.
    pub hue: f64,
    pub gray_prob: f64,
    pub blur_prob: f64,
    pub blur_sigma: (f64, f64),
    pub solarize_prob: f64,
    pub solarize_threshold: f64,
}

impl AppearanceJitter {
    pub fn none() -> Self {
        Self {
            color_jitter_prob: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.0,
            gray_prob: 0.0,
            blur_prob: 0.0,
            blur_sigma: (0.1, 2.0),
            solarize_prob: 0.0,
            solarize_threshold: 0.5,
        }
    }

    pub fn standard() -> Self {
        Self {
            color_jitter_prob: 0.8,
            brightness: 0.4,
            contrast: 0.4,
            saturation: 0.2,
            hue: 0.1,
            gray_prob: 0.2,
            blur_prob: 0.5,
            blur_sigma: (0.1, 1.0),
            solarize_prob: 0.1,
            solarize_threshold: 0.5,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let probs = [
            ("color_jitter_prob", self.color_jitter_prob),
            ("gray_prob", self.gray_prob),
            ("blur_prob", self.blur_prob),
            ("solarize_prob", self.solarize_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("appearance.{name}"), "must lie in [0, 1]"));
            }
        }
        for (name, v) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("appearance.{name}"), "must lie in [0, 1]"));
            }
        }
        if !(0.0..=0.5).contains(&self.hue) {
            return Err(Error::config("appearance.hue", "must lie in [0, 0.5]"));
        }
        if !(self.blur_sigma.0 > 0.0 && self.blur_sigma.0 <= self.blur_sigma.1) {
            return Err(Error::config("appearance.blur_sigma", "need 0 < lo <= hi"));
        }
        Ok(())
    }
}

pub fn adjust_brightness(img: &Image, factor: f32) -> Image {
    let mut out = img.clone();
    out.pixels_mut().iter_mut().for_each(|p| *p *= factor);
    out.clamp();
    out
}

fn luma(img: &Image, r: usize, c: usize) -> f32 {
    if img.channels() == 1 {
        img.get(r, c, 0)
    } else {
        0.299 * img.get(r, c, 0) + 0.587 * img.get(r, c, 1) + 0.114 * img.get(r, c, 2)
    }
}

/// Blends with the mean grey level: `f·x + (1 − f)·mean`.
pub fn adjust_contrast(img: &Image, factor: f32) -> Image {
    let n = (img.height() * img.width()) as f64;
    let mut mean = 0.0f64;
    for r in 0..img.height() {
        for c in 0..img.width() {
            mean += luma(img, r, c) as f64;
        }
    }
    let mean = (mean / n) as f32;
    let mut out = img.clone();
    out.pixels_mut()
        .iter_mut()
        .for_each(|p| *p = factor * *p + (1.0 - factor) * mean);
    out.clamp();
    out
}

/// Saturation blend with the grey image; no-op on single-channel images.
pub fn adjust_saturation(img: &Image, factor: f32) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let mut out = img.clone();
    for r in 0..img.height() {
        for c in 0..img.width() {
            let g = luma(img, r, c);
            for k in 0..3 {
                out.set(r, c, k, factor * img.get(r, c, k) + (1.0 - factor) * g);
            }
        }
    }
    out.clamp();
    out
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as u32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Hue rotation by `shift` turns; no-op on single-channel images.
pub fn adjust_hue(img: &Image, shift: f32) -> Image {
    if img.channels() == 1 || shift == 0.0 {
        return img.clone();
    }
    let mut out = img.clone();
    for r in 0..img.height() {
        for c in 0..img.width() {
            let (h, s, v) = rgb_to_hsv(img.get(r, c, 0), img.get(r, c, 1), img.get(r, c, 2));
            let (nr, ng, nb) = hsv_to_rgb(h + shift, s, v);
            out.set(r, c, 0, nr);
            out.set(r, c, 1, ng);
            out.set(r, c, 2, nb);
        }
    }
    out.clamp();
    out
}

/// Grey conversion; no-op on single-channel images.
pub fn to_grayscale(img: &Image) -> Image {
    adjust_saturation(img, 0.0)
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let radius = (2.0 * sigma).ceil().max(1.0) as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let ksum: f64 = kernel.iter().sum();
    let (h, w, ch) = (img.height() as isize, img.width() as isize, img.channels());
    let pass = |src: &Image, horizontal: bool| {
        let mut out = src.clone();
        for r in 0..h {
            for c in 0..w {
                for k in 0..ch {
                    let mut acc = 0.0f64;
                    for (t, kv) in kernel.iter().enumerate() {
                        let o = t as isize - radius;
                        let (rr, cc) = if horizontal {
                            (r, (c + o).clamp(0, w - 1))
                        } else {
                            ((r + o).clamp(0, h - 1), c)
                        };
                        acc += kv * src.get(rr as usize, cc as usize, k) as f64;
                    }
                    out.set(r as usize, c as usize, k, (acc / ksum) as f32);
                }
            }
        }
        out
    };
    let mut out = pass(&pass(img, true), false);
    out.clamp();
    out
}

/// Pixels at or above `threshold` are inverted.
pub fn solarize(img: &Image, threshold: f32) -> Image {
    let mut out = img.clone();
    out.pixels_mut()
        .iter_mut()
        .for_each(|p| {
            if *p >= threshold {
                *p = 1.0 - *p
            }
        });
    out
}

/// Brightness → contrast → hue/saturation → colour drop → blur → solarize,
/// each applied with its configured probability.
pub fn appearance_jitter(
    img: &Image,
    jitter: &AppearanceJitter,
    rng: &mut Rng,
    log: &mut Vec<TransformLog>,
) -> Image {
    let mut out = img.clone();
    if rng.bernoulli(jitter.color_jitter_prob) {
        let b = rng.uniform_range(1.0 - jitter.brightness, 1.0 + jitter.brightness);
        let c = rng.uniform_range(1.0 - jitter.contrast, 1.0 + jitter.contrast);
        let s = rng.uniform_range(1.0 - jitter.saturation, 1.0 + jitter.saturation);
        let hshift = rng.uniform_range(-jitter.hue, jitter.hue);
        out = adjust_brightness(&out, b as f32);
        out = adjust_contrast(&out, c as f32);
        log.push(TransformLog::Brightness { factor: b });
        log.push(TransformLog::Contrast { factor: c });
        if out.channels() == 3 {
            out = adjust_hue(&out, hshift as f32);
            out = adjust_saturation(&out, s as f32);
            log.push(TransformLog::HueSaturation {
                hue_shift: hshift,
                saturation: s,
            });
        }
    }
    if rng.bernoulli(jitter.gray_prob) && out.channels() == 3 {
        out = to_grayscale(&out);
        log.push(TransformLog::ColorDrop);
    }
    if rng.bernoulli(jitter.blur_prob) {
        let sigma = rng.uniform_range(jitter.blur_sigma.0, jitter.blur_sigma.1);
        out = gaussian_blur(&out, sigma);
        log.push(TransformLog::Blur { sigma });
    }
    if rng.bernoulli(jitter.solarize_prob) {
        out = solarize(&out, jitter.solarize_threshold as f32);
        log.push(TransformLog::Solarize {
            threshold: jitter.solarize_threshold,
        });
    }
    out.clamp();
    out
}
