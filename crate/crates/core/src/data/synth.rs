use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

use super::{train_count, ClassLists, Dataset, Generator, PayloadSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub n_base: usize,
    pub n_novel: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Radius of the sphere the class means are drawn on.
    pub separation: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlyphParams {
    pub n_base: usize,
    pub n_novel: usize,
    pub size: usize,
    pub per_class: usize,
    pub seed: u64,
    /// Global multiplier on every per-sample perturbation; 0 renders each
    /// class identically.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default = "default_stroke")]
    pub stroke_width: f64,
    #[serde(default = "default_width_jitter")]
    pub width_jitter: f64,
    #[serde(default = "default_rotation_jitter")]
    pub rotation_jitter_deg: f64,
    #[serde(default = "default_scale_jitter")]
    pub scale_jitter: f64,
    #[serde(default = "default_shift_jitter")]
    pub shift_jitter: f64,
    #[serde(default = "default_point_jitter")]
    pub point_jitter: f64,
}

fn default_jitter() -> f64 {
    1.0
}
fn default_stroke() -> f64 {
    1.6
}
fn default_width_jitter() -> f64 {
    0.25
}
fn default_rotation_jitter() -> f64 {
    8.0
}
fn default_scale_jitter() -> f64 {
    0.08
}
fn default_shift_jitter() -> f64 {
    0.06
}
fn default_point_jitter() -> f64 {
    0.03
}

impl GlyphParams {
    pub fn new(n_base: usize, n_novel: usize, size: usize, per_class: usize, seed: u64) -> Self {
        Self {
            n_base,
            n_novel,
            size,
            per_class,
            seed,
            jitter: default_jitter(),
            stroke_width: default_stroke(),
            width_jitter: default_width_jitter(),
            rotation_jitter_deg: default_rotation_jitter(),
            scale_jitter: default_scale_jitter(),
            shift_jitter: default_shift_jitter(),
            point_jitter: default_point_jitter(),
        }
    }
}

fn check_counts(n_base: usize, n_novel: usize, per_class: usize) -> Result<()> {
    if n_base + n_novel == 0 {
        return Err(Error::config("dataset.n_base", "need at least one class"));
    }
    let train = train_count(per_class);
    if train == 0 || train == per_class {
        return Err(Error::config("dataset.per_class", "too few samples for a train/test split"));
    }
    Ok(())
}

fn assemble(
    name: &str,
    n_base: usize,
    n_novel: usize,
    per_class: usize,
    payload: PayloadSpec,
    generator: Generator,
    mut sample: impl FnMut(usize, usize) -> Vec<f32>,
) -> Result<Dataset> {
    let n_classes = n_base + n_novel;
    let n_train = train_count(per_class);
    let width = payload.width();
    let (mut train, mut train_y) = (Vec::new(), Vec::new());
    let (mut test, mut test_y) = (Vec::new(), Vec::new());
    for c in 0..n_classes {
        for j in 0..per_class {
            let row = sample(c, j);
            if j < n_train {
                train.extend(row);
                train_y.push(c);
            } else {
                test.extend(row);
                test_y.push(c);
            }
        }
    }
    Dataset::new(
        name,
        ClassLists {
            base: (0..n_base).collect(),
            novel: (n_base..n_classes).collect(),
        },
        payload,
        (Matrix::new(train_y.len(), width, train)?, train_y),
        (Matrix::new(test_y.len(), width, test)?, test_y),
        Some(generator),
    )
}

/// Isotropic unit-variance Gaussian classes with means on a sphere.
pub fn synth_gaussians(p: &GaussianParams) -> Result<Dataset> {
    check_counts(p.n_base, p.n_novel, p.per_class)?;
    if p.dim == 0 {
        return Err(Error::config("dataset.dim", "must be positive"));
    }
    if !(p.separation >= 0.0 && p.separation.is_finite()) {
        return Err(Error::config("dataset.separation", "must be non-negative"));
    }
    let root = Rng::new(p.seed, 0);
    let n_classes = p.n_base + p.n_novel;
    let mut mean_rng = root.child(0);
    let means: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| {
            let v: Vec<f64> = (0..p.dim).map(|_| mean_rng.normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / norm * p.separation).collect()
        })
        .collect();
    let mut rngs: Vec<Rng> = (0..n_classes).map(|c| root.child(1 + c as u64)).collect();
    assemble(
        "gaussians",
        p.n_base,
        p.n_novel,
        p.per_class,
        PayloadSpec::vector(p.dim),
        Generator::Gaussians(p.clone()),
        |c, _| means[c].iter().map(|m| (m + rngs[c].normal()) as f32).collect(),
    )
}

/// Polyline stroke skeleton in unit coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct GlyphTemplate {
    pub points: Vec<(f64, f64)>,
}

impl GlyphTemplate {
    /// 3 to 5 connected strokes.
    pub fn random(rng: &mut Rng) -> Self {
        let segments = 3 + rng.below(3);
        let points = (0..=segments)
            .map(|_| (rng.uniform_range(0.2, 0.8), rng.uniform_range(0.2, 0.8)))
            .collect();
        Self { points }
    }

    /// Renders with per-sample perturbations scaled by `p.jitter`.
    pub fn render(&self, p: &GlyphParams, rng: &mut Rng) -> Vec<f32> {
        let j = p.jitter;
        let mut sym = |a: f64| if j == 0.0 || a == 0.0 { 0.0 } else { rng.uniform_range(-a * j, a * j) };
        let angle = sym(p.rotation_jitter_deg).to_radians();
        let scale = 1.0 + sym(p.scale_jitter);
        let (tx, ty) = (sym(p.shift_jitter), sym(p.shift_jitter));
        let width = p.stroke_width * (1.0 + sym(p.width_jitter));
        let (sn, cs) = angle.sin_cos();
        let size = p.size as f64;
        let pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .map(|&(x, y)| {
                let (x, y) = (x + sym(p.point_jitter) - 0.5, y + sym(p.point_jitter) - 0.5);
                let (rx, ry) = (cs * x - sn * y, sn * x + cs * y);
                ((0.5 + scale * rx + tx) * size, (0.5 + scale * ry + ty) * size)
            })
            .collect();
        let half = width / 2.0;
        let mut out = vec![0.0f32; p.size * p.size];
        for r in 0..p.size {
            for c in 0..p.size {
                let (px, py) = (c as f64 + 0.5, r as f64 + 0.5);
                let d = pts
                    .windows(2)
                    .map(|w| segment_distance((px, py), w[0], w[1]))
                    .fold(f64::INFINITY, f64::min);
                out[r * p.size + c] = (half + 0.5 - d).clamp(0.0, 1.0) as f32;
            }
        }
        out
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Grayscale stroke glyphs, one random template per class.
pub fn synth_glyphs(p: &GlyphParams) -> Result<Dataset> {
    check_counts(p.n_base, p.n_novel, p.per_class)?;
    if p.size < 16 {
        return Err(Error::config("dataset.size", "glyphs need size >= 16"));
    }
    if !(p.jitter >= 0.0 && p.stroke_width > 0.0) {
        return Err(Error::config("dataset.jitter", "jitter must be >= 0 and stroke width > 0"));
    }
    let root = Rng::new(p.seed, 0);
    let n_classes = p.n_base + p.n_novel;
    let mut template_rng = root.child(0);
    let templates: Vec<GlyphTemplate> = (0..n_classes).map(|_| GlyphTemplate::random(&mut template_rng)).collect();
    let mut rngs: Vec<Rng> = (0..n_classes).map(|c| root.child(1 + c as u64)).collect();
    assemble(
        "glyphs",
        p.n_base,
        p.n_novel,
        p.per_class,
        PayloadSpec::image(p.size, p.size, 1),
        Generator::Glyphs(p.clone()),
        |c, _| templates[c].render(p, &mut rngs[c]),
    )
}
