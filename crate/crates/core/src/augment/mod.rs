//! Stochastic multi-view construction for self-distillation.
//!
//! Natural images get multi-crop views; symbolic images keep their structure
//! and get restricted rotations on the local views instead. Raw feature
//! vectors (the synthetic Gaussian data) get additive noise and masking.

mod image;
mod transforms;

use serde::{Deserialize, Serialize};

pub use image::Image;
pub use transforms::{
    adjust_brightness, adjust_contrast, adjust_hue, adjust_saturation, appearance_jitter,
    crop_resize, gaussian_blur, hflip, random_resized_crop, restricted_rotation, rotate, solarize,
    to_grayscale, AppearanceJitter,
};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::par::{self, Exec};

/// One entry of a view's provenance log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TransformLog {
    Crop {
        top: usize,
        left: usize,
        height: usize,
        width: usize,
    },
    Flip,
    Rotation { degrees: f64 },
    Brightness { factor: f64 },
    Contrast { factor: f64 },
    HueSaturation { hue_shift: f64, saturation: f64 },
    ColorDrop,
    Blur { sigma: f64 },
    Solarize { threshold: f64 },
    Noise { std: f64 },
    Dropout { prob: f64 },
}

impl TransformLog {
    pub fn name(&self) -> &'static str {
        match self {
            TransformLog::Crop { .. } => "crop",
            TransformLog::Flip => "flip",
            TransformLog::Rotation { .. } => "rotation",
            TransformLog::Brightness { .. } => "brightness",
            TransformLog::Contrast { .. } => "contrast",
            TransformLog::HueSaturation { .. } => "hue_saturation",
            TransformLog::ColorDrop => "color_drop",
            TransformLog::Blur { .. } => "blur",
            TransformLog::Solarize { .. } => "solarize",
            TransformLog::Noise { .. } => "noise",
            TransformLog::Dropout { .. } => "dropout",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Natural,
    Symbolic,
}

/// Per-domain augmentation recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugPreset {
    pub domain: Domain,
    pub crop: bool,
    pub flip: bool,
    pub rotation: bool,
    pub max_rotation_deg: f64,
    pub global_scale: (f64, f64),
    pub local_scale: (f64, f64),
    pub appearance: AppearanceJitter,
}

impl AugPreset {
    /// Crops, flips and appearance changes; no rotation.
    pub fn natural() -> Self {
        Self {
            domain: Domain::Natural,
            crop: true,
            flip: true,
            rotation: false,
            max_rotation_deg: 0.0,
            global_scale: (0.5, 1.0),
            local_scale: (0.15, 0.4),
            appearance: AppearanceJitter::standard(),
        }
    }

    /// Restricted rotation and appearance changes; no crop, no flip.
    pub fn symbolic() -> Self {
        Self {
            domain: Domain::Symbolic,
            crop: false,
            flip: false,
            rotation: true,
            max_rotation_deg: 25.0,
            global_scale: (1.0, 1.0),
            local_scale: (1.0, 1.0),
            appearance: AppearanceJitter::standard(),
        }
    }

    /// Every stochastic part switched off.
    pub fn identity(domain: Domain) -> Self {
        Self {
            domain,
            crop: false,
            flip: false,
            rotation: false,
            max_rotation_deg: 0.0,
            global_scale: (1.0, 1.0),
            local_scale: (1.0, 1.0),
            appearance: AppearanceJitter::none(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.domain {
            Domain::Symbolic if self.crop || self.flip => {
                return Err(Error::config(
                    "augment.crop",
                    "the symbolic preset never crops or flips",
                ))
            }
            Domain::Natural if self.rotation => {
                return Err(Error::config(
                    "augment.rotation",
                    "the natural preset never rotates",
                ))
            }
            _ => {}
        }
        if !(0.0..180.0).contains(&self.max_rotation_deg) {
            return Err(Error::config("augment.max_rotation_deg", "must lie in [0, 180)"));
        }
        for (name, (lo, hi)) in [
            ("augment.global_scale", self.global_scale),
            ("augment.local_scale", self.local_scale),
        ] {
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return Err(Error::config(name, "need 0 < lo <= hi <= 1"));
            }
        }
        self.appearance.validate()
    }
}

/// Noise-and-mask views for raw feature vectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VectorAug {
    pub global_noise: f64,
    pub global_dropout: f64,
    pub local_noise: f64,
    pub local_dropout: f64,
}

impl Default for VectorAug {
    fn default() -> Self {
        Self {
            global_noise: 0.3,
            global_dropout: 0.1,
            local_noise: 0.6,
            local_dropout: 0.3,
        }
    }
}

impl VectorAug {
    pub fn validate(&self) -> Result<()> {
        if self.global_noise < 0.0 || self.local_noise < 0.0 {
            return Err(Error::config("augment.noise", "must be non-negative"));
        }
        for (name, p) in [
            ("augment.global_dropout", self.global_dropout),
            ("augment.local_dropout", self.local_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::config(name, "must lie in [0, 1)"));
            }
        }
        Ok(())
    }

    fn view(&self, x: &[f32], noise: f64, dropout: f64, rng: &mut Rng) -> (Vec<f32>, Vec<TransformLog>) {
        let mut log = Vec::new();
        let mut out = x.to_vec();
        if noise > 0.0 {
            out.iter_mut()
                .for_each(|v| *v += (noise * rng.normal()) as f32);
            log.push(TransformLog::Noise { std: noise });
        }
        if dropout > 0.0 {
            out.iter_mut().for_each(|v| {
                if rng.bernoulli(dropout) {
                    *v = 0.0
                }
            });
            log.push(TransformLog::Dropout { prob: dropout });
        }
        (out, log)
    }
}

/// Two global views plus `n` local views of one input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSet<V> {
    pub globals: [V; 2],
    pub locals: Vec<V>,
    /// Transform log per view: globals first, then locals.
    pub provenance: Vec<Vec<TransformLog>>,
}

impl<V> ViewSet<V> {
    pub fn n_views(&self) -> usize {
        2 + self.locals.len()
    }

    /// Views in canonical order: both globals, then the locals.
    pub fn views(&self) -> impl Iterator<Item = &V> {
        self.globals.iter().chain(self.locals.iter())
    }

    pub fn provenance_json(&self) -> String {
        serde_json::to_string(&self.provenance).expect("provenance serializes")
    }
}

fn geometric(
    img: &Image,
    preset: &AugPreset,
    scale: (f64, f64),
    allow_rotation: bool,
    rng: &mut Rng,
    log: &mut Vec<TransformLog>,
) -> Result<Image> {
    let mut out = img.clone();
    if preset.crop {
        let (c, entry) = random_resized_crop(&out, scale, img.height(), img.width(), rng)?;
        out = c;
        log.push(entry);
    }
    if preset.flip && rng.bernoulli(0.5) {
        out = hflip(&out);
        log.push(TransformLog::Flip);
    }
    if allow_rotation && preset.rotation && preset.max_rotation_deg > 0.0 {
        let (r, degrees) = restricted_rotation(&out, preset.max_rotation_deg, rng);
        out = r;
        log.push(TransformLog::Rotation { degrees });
    }
    Ok(out)
}

/// Builds the view set for one image. Global views are never rotated.
pub fn build_view_set(
    img: &Image,
    preset: &AugPreset,
    n_local: usize,
    rng: &mut Rng,
) -> Result<ViewSet<Image>> {
    if n_local == 0 {
        return Err(Error::config("augment.n_local", "need at least one local view"));
    }
    let mut provenance = Vec::with_capacity(2 + n_local);
    let mut make = |scale, rotate: bool, rng: &mut Rng| -> Result<Image> {
        let mut log = Vec::new();
        let g = geometric(img, preset, scale, rotate, rng, &mut log)?;
        let out = appearance_jitter(&g, &preset.appearance, rng, &mut log);
        provenance.push(log);
        Ok(out)
    };
    let g1 = make(preset.global_scale, false, rng)?;
    let g2 = make(preset.global_scale, false, rng)?;
    let locals = (0..n_local)
        .map(|_| make(preset.local_scale, true, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(ViewSet {
        globals: [g1, g2],
        locals,
        provenance,
    })
}

pub fn build_vector_view_set(
    x: &[f32],
    aug: &VectorAug,
    n_local: usize,
    rng: &mut Rng,
) -> Result<ViewSet<Vec<f32>>> {
    if n_local == 0 {
        return Err(Error::config("augment.n_local", "need at least one local view"));
    }
    let (g1, l1) = aug.view(x, aug.global_noise, aug.global_dropout, rng);
    let (g2, l2) = aug.view(x, aug.global_noise, aug.global_dropout, rng);
    let mut provenance = vec![l1, l2];
    let mut locals = Vec::with_capacity(n_local);
    for _ in 0..n_local {
        let (v, l) = aug.view(x, aug.local_noise, aug.local_dropout, rng);
        locals.push(v);
        provenance.push(l);
    }
    Ok(ViewSet {
        globals: [g1, g2],
        locals,
        provenance,
    })
}

/// How a flat payload row is turned into views.
#[derive(Clone, Debug, PartialEq)]
pub enum ViewPolicy {
    Image {
        preset: AugPreset,
        height: usize,
        width: usize,
        channels: usize,
    },
    Vector(VectorAug),
}

impl ViewPolicy {
    pub fn views(&self, payload: &[f32], n_local: usize, rng: &mut Rng) -> Result<ViewSet<Vec<f32>>> {
        match self {
            ViewPolicy::Vector(aug) => build_vector_view_set(payload, aug, n_local, rng),
            ViewPolicy::Image {
                preset,
                height,
                width,
                channels,
            } => {
                let img = Image::new(*height, *width, *channels, payload.to_vec())?;
                let vs = build_view_set(&img, preset, n_local, rng)?;
                let [a, b] = vs.globals;
                Ok(ViewSet {
                    globals: [a.into_pixels(), b.into_pixels()],
                    locals: vs.locals.into_iter().map(Image::into_pixels).collect(),
                    provenance: vs.provenance,
                })
            }
        }
    }

    /// View sets for the selected rows of `payloads`; row `i` draws from
    /// `base.child(streams[i])`, so results are independent of scheduling.
    pub fn batch_views(
        &self,
        exec: Exec,
        payloads: &Matrix<f32>,
        rows: &[usize],
        streams: &[u64],
        n_local: usize,
        base: &Rng,
    ) -> Result<Vec<ViewSet<Vec<f32>>>> {
        par::map_range(exec, 0..rows.len(), |i| {
            let mut rng = base.child(streams[i]);
            self.views(payloads.row(rows[i]), n_local, &mut rng)
        })
        .into_iter()
        .collect()
    }
}

/// Stacks view `v` of every view set into an `n × width` matrix.
pub fn stack_view(sets: &[ViewSet<Vec<f32>>], v: usize) -> Result<Matrix<f32>> {
    let rows: Vec<&[f32]> = sets
        .iter()
        .map(|s| {
            if v < 2 {
                &s.globals[v][..]
            } else {
                &s.locals[v - 2][..]
            }
        })
        .collect();
    Matrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn glyph() -> Image {
        let mut img = Image::filled(12, 12, 1, 0.0);
        for i in 2..10 {
            img.set(i, 3, 0, 1.0);
            img.set(2, i, 0, 1.0);
        }
        img
    }

    #[test]
    fn disabled_preset_copies_input() {
        let img = glyph();
        let mut rng = Rng::new(1, 0);
        let vs = build_view_set(&img, &AugPreset::identity(Domain::Natural), 3, &mut rng).unwrap();
        assert!(vs.views().all(|v| *v == img));
        assert_eq!(vs.n_views(), 5);
    }

    #[test]
    fn symbolic_never_crops_or_flips() {
        let img = glyph();
        let preset = AugPreset::symbolic();
        preset.validate().unwrap();
        let mut rng = Rng::new(2, 0);
        for _ in 0..20 {
            let vs = build_view_set(&img, &preset, 4, &mut rng).unwrap();
            for log in &vs.provenance {
                assert!(log.iter().all(|e| e.name() != "crop" && e.name() != "flip"));
            }
            for log in &vs.provenance[..2] {
                assert!(log.iter().all(|e| e.name() != "rotation"));
            }
            for log in &vs.provenance[2..] {
                let rot = log.iter().find_map(|e| match e {
                    TransformLog::Rotation { degrees } => Some(*degrees),
                    _ => None,
                });
                assert!(rot.unwrap().abs() <= preset.max_rotation_deg);
            }
        }
    }

    #[test]
    fn natural_never_rotates_and_is_deterministic() {
        let mut rng = Rng::new(3, 0);
        let img = Image::new(10, 10, 3, (0..300).map(|_| rng.uniform() as f32).collect()).unwrap();
        let preset = AugPreset::natural();
        let a = build_view_set(&img, &preset, 4, &mut Rng::new(7, 9)).unwrap();
        let b = build_view_set(&img, &preset, 4, &mut Rng::new(7, 9)).unwrap();
        assert_eq!(a, b);
        assert!(a.provenance.iter().flatten().all(|e| e.name() != "rotation"));
        assert!(a
            .views()
            .all(|v| v.pixels().iter().all(|p| (0.0..=1.0).contains(p))));
    }

    #[test]
    fn preset_invariants_validated() {
        let mut p = AugPreset::symbolic();
        p.crop = true;
        assert!(p.validate().is_err());
        let mut q = AugPreset::natural();
        q.rotation = true;
        assert!(q.validate().is_err());
        assert!(AugPreset::natural().validate().is_ok());
        assert!(build_view_set(&glyph(), &AugPreset::symbolic(), 0, &mut Rng::new(0, 0)).is_err());
    }

    #[test]
    fn batch_views_are_schedule_independent() {
        let mut rng = Rng::new(4, 0);
        let payloads = Matrix::from_fn(6, 8, |_, _| rng.normal() as f32);
        let policy = ViewPolicy::Vector(VectorAug::default());
        let base = Rng::new(5, 1);
        let rows = [4usize, 1, 3];
        let streams = [40u64, 10, 30];
        let a = policy.batch_views(Exec::Parallel, &payloads, &rows, &streams, 2, &base).unwrap();
        let b = policy.batch_views(Exec::Sequential, &payloads, &rows, &streams, 2, &base).unwrap();
        assert_eq!(a, b);
        let single = policy.views(payloads.row(1), 2, &mut base.child(10)).unwrap();
        assert_eq!(a[1], single);
        let m = stack_view(&a, 3).unwrap();
        assert_eq!(m.shape(), (3, 8));
        assert_eq!(m.row(0), &a[0].locals[1][..]);
    }
}
