use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{AugPreset, Domain, VectorAug, ViewPolicy};
use crate::data::{GaussianParams, GlyphParams, PayloadKind, PayloadSpec};
use crate::distill::HeadConfig;
use crate::error::{Error, Result};
use crate::nn::Activation;
use crate::prototypes::BootstrapScope;
use crate::selftrain::SelfTrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DatasetSpec {
    Gaussians(GaussianParams),
    Glyphs(GlyphParams),
    /// A manifest file or the directory holding `manifest.json`.
    Manifest { path: PathBuf },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    /// Symbolic for glyphs, natural for every other image dataset.
    #[default]
    Auto,
    Natural,
    Symbolic,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub preset: PresetName,
    pub max_rotation_deg: Option<f64>,
    pub n_local: usize,
    pub vector: VectorAug,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            preset: PresetName::Auto,
            max_rotation_deg: None,
            n_local: 4,
            vector: VectorAug::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            embed_dim: 64,
            activation: Activation::Relu,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub epochs: usize,
    pub batch_size: usize,
    /// Learning rate at batch size 256; scaled linearly with the batch size.
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_epochs: usize,
    pub weight_decay: f64,
    pub lambda: f64,
    pub beta: f64,
    pub bootstrap: BootstrapScope,
    pub teacher_momentum: f64,
    /// Step size of the separation gradient on the prototypes.
    pub pas_lr: f64,
    /// Log clustering accuracy of the unlabelled features every this many
    /// epochs (0 disables).
    pub eval_every: usize,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 128,
            base_lr: 0.0005,
            min_lr: 1e-6,
            warmup_epochs: 2,
            weight_decay: 0.04,
            lambda: 0.1,
            beta: 0.99,
            bootstrap: BootstrapScope::EveryEpoch,
            teacher_momentum: 0.996,
            pas_lr: 1.0,
            eval_every: 5,
        }
    }
}

impl Stage1Config {
    pub fn lr(&self) -> f64 {
        self.base_lr * self.batch_size as f64 / 256.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub instdis: bool,
    pub catdis: bool,
    pub pst: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self { instdis: true, catdis: true, pst: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    /// Base classes; defaults to the dataset's own base list.
    #[serde(default)]
    pub base_classes: Option<Vec<usize>>,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub stage1: Stage1Config,
    #[serde(default)]
    pub head: HeadConfig,
    #[serde(default)]
    pub stage2: SelfTrainConfig,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default = "default_parallel")]
    pub parallel: bool,
    /// Not part of the run identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_parallel() -> bool {
    true
}

impl RunConfig {
    /// Desk-scale defaults on a Gaussian dataset.
    pub fn desk(dataset: DatasetSpec, seed: u64) -> Self {
        Self {
            seed,
            dataset,
            base_classes: None,
            augment: AugmentConfig::default(),
            network: NetworkConfig::default(),
            stage1: Stage1Config::default(),
            head: HeadConfig::default(),
            stage2: SelfTrainConfig::default(),
            ablation: Ablation::default(),
            parallel: true,
            out_dir: None,
        }
    }

    /// The full-size recipe: 100 epochs at batch 256, 512-d embeddings.
    pub fn full_scale(dataset: DatasetSpec, seed: u64) -> Self {
        let mut c = Self::desk(dataset, seed);
        c.network = NetworkConfig { hidden: vec![1024, 1024], embed_dim: 512, activation: Activation::Relu };
        c.stage1.epochs = 100;
        c.stage1.batch_size = 256;
        c.stage1.base_lr = 0.0005;
        c.stage1.warmup_epochs = 10;
        c.stage1.lambda = 0.1;
        c.stage2.batch_size = 256;
        c.stage2.n_iters = 2;
        c.stage2.epochs_per_iter = 2;
        c.stage2.lr = 0.05;
        c
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::ConfigInvalid {
            field: origin.display().to_string(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 over the canonical JSON of everything except the output
    /// directory, hex encoded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let value = serde_json::to_value(&c).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn exec(&self) -> crate::par::Exec {
        if self.parallel {
            crate::par::Exec::default()
        } else {
            crate::par::Exec::Sequential
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s1 = &self.stage1;
        if s1.batch_size == 0 {
            return Err(Error::config("stage1.batch_size", "must be positive"));
        }
        if !(s1.base_lr >= 0.0 && s1.base_lr.is_finite()) || s1.min_lr < 0.0 {
            return Err(Error::config("stage1.base_lr", "learning rates must be non-negative"));
        }
        if !(0.0..1.0).contains(&s1.beta) {
            return Err(Error::config("stage1.beta", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&s1.teacher_momentum) {
            return Err(Error::config("stage1.teacher_momentum", "must lie in [0, 1]"));
        }
        if s1.lambda < 0.0 || s1.pas_lr < 0.0 || s1.weight_decay < 0.0 {
            return Err(Error::config("stage1.lambda", "lambda, pas_lr and weight_decay must be non-negative"));
        }
        if self.network.embed_dim == 0 || self.network.hidden.contains(&0) {
            return Err(Error::config("network", "widths must be positive"));
        }
        if self.augment.n_local == 0 {
            return Err(Error::config("augment.n_local", "need at least one local view"));
        }
        if self.augment.max_rotation_deg.is_some_and(|d| !(0.0..=180.0).contains(&d)) {
            return Err(Error::config("augment.max_rotation_deg", "must lie in [0, 180]"));
        }
        self.augment.vector.validate()?;
        self.head.validate()?;
        self.stage2.validate()?;
        match &self.dataset {
            DatasetSpec::Gaussians(p) if p.separation < 0.0 || p.dim == 0 => {
                Err(Error::config("dataset", "gaussians need dim > 0 and separation >= 0"))
            }
            DatasetSpec::Glyphs(p) if p.size < 16 => Err(Error::config("dataset.size", "glyphs need size >= 16")),
            _ => Ok(()),
        }
    }

    pub fn image_preset(&self) -> AugPreset {
        let glyphs = matches!(self.dataset, DatasetSpec::Glyphs(_));
        let mut preset = match self.augment.preset {
            PresetName::Auto if glyphs => AugPreset::symbolic(),
            PresetName::Auto | PresetName::Natural => AugPreset::natural(),
            PresetName::Symbolic => AugPreset::symbolic(),
            PresetName::Identity => AugPreset::identity(if glyphs { Domain::Symbolic } else { Domain::Natural }),
        };
        if let Some(d) = self.augment.max_rotation_deg {
            preset.max_rotation_deg = d;
        }
        preset
    }

    pub fn view_policy(&self, payload: &PayloadSpec) -> Result<ViewPolicy> {
        Ok(match payload.kind {
            PayloadKind::Vector => ViewPolicy::Vector(self.augment.vector),
            PayloadKind::Image => {
                let preset = self.image_preset();
                preset.validate()?;
                ViewPolicy::Image {
                    preset,
                    height: payload.shape[0],
                    width: payload.shape[1],
                    channels: payload.shape[2],
                }
            }
        })
    }
}
