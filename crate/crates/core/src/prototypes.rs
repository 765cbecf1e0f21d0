//! Online prototypes for novel classes on the unit hypersphere, the pairwise
//! angular-separation loss, and the joint category loss.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{l2_normalize, log_softmax, normalize_rows, pdm, Matrix, Real, Rng};

/// When uniform bootstrap labels replace assignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapScope {
    /// First batch of every epoch.
    #[default]
    EveryEpoch,
    FirstEpochOnly,
    Off,
}

impl BootstrapScope {
    pub fn applies(self, epoch: usize, batch: usize) -> bool {
        batch == 0
            && match self {
                BootstrapScope::EveryEpoch => true,
                BootstrapScope::FirstEpochOnly => epoch == 0,
                BootstrapScope::Off => false,
            }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeBank<T = f32> {
    protos: Matrix<T>,
    beta: f64,
    steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoBatch {
    pub labels: Vec<usize>,
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BankSidecar {
    beta: f64,
    steps: u64,
    k: usize,
    dim: usize,
}

impl<T: Real> PrototypeBank<T> {
    /// Prototypes start as the L2-normalized novel classifier rows.
    pub fn init_from_classifier(novel_weights: &Matrix<T>, beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::config("prototypes.beta", "must lie in [0, 1)"));
        }
        if novel_weights.rows() == 0 {
            return Err(Error::DegenerateInput("no novel classes".into()));
        }
        Ok(Self {
            protos: normalize_rows(novel_weights)?,
            beta,
            steps: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.protos.rows()
    }

    pub fn dim(&self) -> usize {
        self.protos.cols()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn prototypes(&self) -> &Matrix<T> {
        &self.protos
    }

    pub fn max_norm_error(&self) -> f64 {
        self.protos
            .iter_rows()
            .map(|r| (r.iter().map(|v| v.widen() * v.widen()).sum::<f64>().sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Replaces every prototype (rows are re-normalized).
    pub fn replace(&mut self, protos: &Matrix<T>) -> Result<()> {
        if protos.shape() != self.protos.shape() {
            return Err(Error::shape(self.protos.shape_str(), protos.shape_str()));
        }
        self.protos = normalize_rows(protos)?;
        Ok(())
    }

    /// Cosine argmax per feature row; ties go to the lowest index.
    pub fn assign(&self, features: &Matrix<T>) -> Result<PseudoBatch> {
        if features.cols() != self.dim() {
            return Err(Error::shape(format!("width {}", self.dim()), features.shape_str()));
        }
        let mut labels = Vec::with_capacity(features.rows());
        let mut scores = Vec::with_capacity(features.rows());
        for f in features.iter_rows() {
            let f = l2_normalize(f)?;
            let mut best = (0usize, f64::NEG_INFINITY);
            for (c, p) in self.protos.iter_rows().enumerate() {
                let cos: f64 = p.iter().zip(&f).map(|(a, b)| a.widen() * b.widen()).sum();
                if cos > best.1 {
                    best = (c, cos);
                }
            }
            labels.push(best.0);
            scores.push(best.1.clamp(-1.0, 1.0));
        }
        Ok(PseudoBatch { labels, scores })
    }

    /// Per-sample EMA in batch order followed by re-projection to the sphere.
    pub fn ema_update(&mut self, features: &Matrix<T>, labels: &[usize]) -> Result<()> {
        if features.cols() != self.dim() || features.rows() != labels.len() {
            return Err(Error::shape(
                format!("{} rows of width {}", labels.len(), self.dim()),
                features.shape_str(),
            ));
        }
        let k = self.k();
        if let Some(&bad) = labels.iter().find(|&&c| c >= k) {
            return Err(Error::LabelOutOfRange { label: bad, bound: k });
        }
        let b = self.beta;
        for (f, &c) in features.iter_rows().zip(labels) {
            let mixed: Vec<f64> = self
                .protos
                .row(c)
                .iter()
                .zip(f)
                .map(|(p, x)| b * p.widen() + (1.0 - b) * x.widen())
                .collect();
            let unit = l2_normalize(&mixed)?;
            for (dst, v) in self.protos.row_mut(c).iter_mut().zip(unit) {
                *dst = T::lift(v);
            }
        }
        self.steps += 1;
        Ok(())
    }

    /// Gradient step on the prototypes followed by re-projection.
    pub fn apply_gradient(&mut self, grad: &Matrix<T>, lr: f64) -> Result<()> {
        if grad.shape() != self.protos.shape() {
            return Err(Error::shape(self.protos.shape_str(), grad.shape_str()));
        }
        let mut next = self.protos.clone();
        next.axpy(T::lift(-lr), grad)?;
        self.protos = normalize_rows(&next)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        pdm::write(path, &self.protos.cast::<f32>())?;
        let side = BankSidecar {
            beta: self.beta,
            steps: self.steps,
            k: self.k(),
            dim: self.dim(),
        };
        let json_path = path.with_extension("json");
        let text = serde_json::to_string_pretty(&side).map_err(|e| Error::Json {
            path: json_path.clone(),
            source: e,
        })?;
        std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let protos = pdm::read(path)?;
        let json_path = path.with_extension("json");
        let text = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let side: BankSidecar = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: json_path.clone(),
            source: e,
        })?;
        if (side.k, side.dim) != protos.shape() {
            return Err(Error::Malformed {
                what: json_path.display().to_string(),
                reason: "sidecar shape disagrees with matrix".into(),
            });
        }
        let mut bank = Self::init_from_classifier(&protos.cast(), side.beta)?;
        bank.steps = side.steps;
        Ok(bank)
    }
}

/// i.i.d. uniform labels in `0..k`.
pub fn bootstrap_uniform(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    assert!(k >= 1, "bootstrap needs at least one class");
    (0..n).map(|_| rng.below(k)).collect()
}

#[derive(Clone, Debug)]
pub struct PasLoss<T = f32> {
    pub value: f64,
    pub grad: Matrix<T>,
    /// Argmax partner per row.
    pub partners: Vec<usize>,
}

/// `M = PPᵀ − 2I`, loss is the mean over rows of the row maximum.
pub fn pas_loss<T: Real>(protos: &Matrix<T>) -> PasLoss<T> {
    let (k, d) = protos.shape();
    let mut grad = Matrix::zeros(k, d);
    let mut partners = Vec::with_capacity(k);
    let mut value = 0.0;
    if k == 0 {
        return PasLoss { value, grad, partners };
    }
    let inv_k = 1.0 / k as f64;
    for i in 0..k {
        let pi = protos.row(i);
        let mut best = (0usize, f64::NEG_INFINITY);
        for j in 0..k {
            let mut m: f64 = pi.iter().zip(protos.row(j)).map(|(a, b)| a.widen() * b.widen()).sum();
            if i == j {
                m -= 2.0;
            }
            if m > best.1 {
                best = (j, m);
            }
        }
        value += best.1 * inv_k;
        partners.push(best.0);
        let j = best.0;
        if i == j {
            for (g, p) in grad.row_mut(i).iter_mut().zip(pi) {
                *g += T::lift(2.0 * p.widen() * inv_k);
            }
        } else {
            let pj: Vec<T> = protos.row(j).to_vec();
            for (g, p) in grad.row_mut(i).iter_mut().zip(&pj) {
                *g += T::lift(p.widen() * inv_k);
            }
            let pi: Vec<T> = pi.to_vec();
            for (g, p) in grad.row_mut(j).iter_mut().zip(&pi) {
                *g += T::lift(p.widen() * inv_k);
            }
        }
    }
    PasLoss { value, grad, partners }
}

#[derive(Clone, Debug)]
pub struct CrossEntropy<T = f32> {
    pub value: f64,
    pub d_logits: Matrix<T>,
}

/// `Σ_i w_i · CE(logits_i, y_i) / denom`, gradient with respect to the logits.
/// `weights` of `None` means all ones.
pub fn weighted_cross_entropy<T: Real>(
    logits: &Matrix<T>,
    labels: &[usize],
    weights: Option<&[f64]>,
    denom: f64,
) -> Result<CrossEntropy<T>> {
    let (n, c) = logits.shape();
    if labels.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::shape(format!("{n} labels"), format!("{}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::LabelOutOfRange { label: bad, bound: c });
    }
    let mut d_logits = Matrix::zeros(n, c);
    let mut value = 0.0;
    for i in 0..n {
        let w = weights.map_or(1.0, |w| w[i]);
        let ls = log_softmax(logits.row(i), 1.0);
        value -= w * ls[labels[i]] / denom;
        if w == 0.0 {
            continue;
        }
        for (j, (g, l)) in d_logits.row_mut(i).iter_mut().zip(&ls).enumerate() {
            let onehot = if j == labels[i] { 1.0 } else { 0.0 };
            *g = T::lift(w * (l.exp() - onehot) / denom);
        }
    }
    Ok(CrossEntropy { value, d_logits })
}

/// Where a classification target came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// Human label, a base class id.
    Labelled(usize),
    /// Online pseudo label, already offset past the base classes.
    Pseudo(usize),
}

impl Target {
    pub fn class(self) -> usize {
        match self {
            Target::Labelled(c) | Target::Pseudo(c) => c,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CategoryLoss<T = f32> {
    pub value: f64,
    pub cls: f64,
    pub pas: f64,
    pub d_logits: Matrix<T>,
    /// Gradient of `λ·L_pas` with respect to the prototypes.
    pub d_protos: Matrix<T>,
}

/// Cross-entropy over the combined batch plus `λ` times the separation loss.
pub fn category_loss<T: Real>(
    logits: &Matrix<T>,
    targets: &[Target],
    n_base: usize,
    lambda: f64,
    protos: &Matrix<T>,
) -> Result<CategoryLoss<T>> {
    let c = logits.cols();
    for t in targets {
        let ok = match *t {
            Target::Labelled(y) => y < n_base,
            Target::Pseudo(y) => (n_base..c).contains(&y),
        };
        if !ok {
            let bound = match t {
                Target::Labelled(_) => n_base,
                Target::Pseudo(_) => c,
            };
            return Err(Error::LabelOutOfRange { label: t.class(), bound });
        }
    }
    if targets.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let labels: Vec<usize> = targets.iter().map(|t| t.class()).collect();
    let ce = weighted_cross_entropy(logits, &labels, None, targets.len() as f64)?;
    let pas = pas_loss(protos);
    let mut d_protos = pas.grad;
    d_protos.scale(T::lift(lambda));
    Ok(CategoryLoss {
        value: ce.value + lambda * pas.value,
        cls: ce.value,
        pas: pas.value,
        d_logits: ce.d_logits,
        d_protos,
    })
}

/// Share of the batch assigned to the most frequent label.
pub fn modal_fraction(labels: &[usize], k: usize) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let counts = label_counts(labels, k);
    *counts.iter().max().unwrap_or(&0) as f64 / labels.len() as f64
}

/// Entropy (nats) of the empirical label distribution.
pub fn assignment_entropy(labels: &[usize], k: usize) -> f64 {
    let n = labels.len() as f64;
    label_counts(labels, k)
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn label_counts(labels: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0usize; k.max(labels.iter().map(|&l| l + 1).max().unwrap_or(0))];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}
