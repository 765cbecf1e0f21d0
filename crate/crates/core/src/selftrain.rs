//! Stage II: offline pseudo labels, prototype-rectified losses and the
//! iterated self-training loop.

use serde::{Deserialize, Serialize};

use crate::augment::{stack_view, ViewPolicy};
use crate::clustering::{argmax_rows, ClusterMethod, ClusterResult};
use crate::data::{LabelledSet, UnlabelledSet};
use crate::error::{Error, Result};
use crate::nn::{LrSchedule, Network, OptimizerKind, OptimizerState, Params};
use crate::numerics::{normalize_rows, Matrix, Real, Rng};
use crate::par::Exec;
use crate::prototypes::weighted_cross_entropy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Clustering,
    Classifier,
}

/// Novel-class pseudo labels with the prototype snapshot they are rectified
/// against. The snapshot is never modified while training on these labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelSet {
    /// Novel-class index in `0..K`.
    pub labels: Vec<usize>,
    /// `max(0, cos)` against the snapshot at creation time.
    pub weights: Vec<f64>,
    pub source: LabelSource,
    prototypes: Matrix<f32>,
}

impl PseudoLabelSet {
    pub fn new(labels: Vec<usize>, features: &Matrix<f32>, prototypes: Matrix<f32>, source: LabelSource) -> Result<Self> {
        let k = prototypes.rows();
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label: bad, bound: k });
        }
        let prototypes = normalize_rows(&prototypes)?;
        let weights = rectification_weights(features, &labels, &prototypes)?;
        Ok(Self { labels, weights, source, prototypes })
    }

    pub fn prototypes(&self) -> &Matrix<f32> {
        &self.prototypes
    }

    pub fn k(&self) -> usize {
        self.prototypes.rows()
    }
}

/// `w_i = max(0, cos(p_{y_i}, f_i))`; a zero feature row gets weight 0.
pub fn rectification_weights<T: Real>(features: &Matrix<T>, labels: &[usize], prototypes: &Matrix<T>) -> Result<Vec<f64>> {
    if features.rows() != labels.len() || features.cols() != prototypes.cols() {
        return Err(Error::shape(
            format!("{} rows of width {}", labels.len(), prototypes.cols()),
            features.shape_str(),
        ));
    }
    labels
        .iter()
        .zip(features.iter_rows())
        .map(|(&c, f)| {
            if c >= prototypes.rows() {
                return Err(Error::LabelOutOfRange { label: c, bound: prototypes.rows() });
            }
            let p = prototypes.row(c);
            let (mut dot, mut nf, mut np) = (0.0f64, 0.0f64, 0.0f64);
            for (a, b) in p.iter().zip(f) {
                let (a, b) = (a.widen(), b.widen());
                dot += a * b;
                nf += b * b;
                np += a * a;
            }
            let denom = (nf * np).sqrt();
            Ok(if denom > 1e-12 { (dot / denom).max(0.0) } else { 0.0 })
        })
        .collect()
}

/// Clusters the unlabelled features; normalized centroids become the new
/// prototypes.
pub fn offline_pseudo_labels(
    exec: Exec,
    features: &Matrix<f32>,
    k: usize,
    method: &ClusterMethod,
    seed: u64,
) -> Result<(PseudoLabelSet, ClusterResult)> {
    let unit = normalize_rows(features)?;
    let clusters = method.run(exec, &unit, k, seed)?;
    let centroids: Matrix<f32> = class_mean_prototypes(&unit, &clusters.labels, k, Some(&clusters.centroids.cast()))?;
    let set = PseudoLabelSet::new(clusters.labels.clone(), &unit, centroids, LabelSource::Clustering)?;
    Ok((set, clusters))
}

/// Normalized per-class means; an empty class keeps `fallback`'s row.
pub fn class_mean_prototypes(
    features: &Matrix<f32>,
    labels: &[usize],
    k: usize,
    fallback: Option<&Matrix<f32>>,
) -> Result<Matrix<f32>> {
    let d = features.cols();
    let mut sums = Matrix::<f64>::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (f, &c) in features.iter_rows().zip(labels) {
        counts[c] += 1;
        for (s, v) in sums.row_mut(c).iter_mut().zip(f) {
            *s += *v as f64;
        }
    }
    let mut out = Matrix::<f32>::zeros(k, d);
    for c in 0..k {
        let norm = sums.row(c).iter().map(|v| v * v).sum::<f64>().sqrt();
        if counts[c] > 0 && norm > 1e-12 {
            for (o, s) in out.row_mut(c).iter_mut().zip(sums.row(c)) {
                *o = (s / norm) as f32;
            }
        } else if let Some(fb) = fallback {
            out.row_mut(c).copy_from_slice(fb.row(c));
        } else {
            return Err(Error::DegenerateInput(format!("class {c} has no members and no fallback")));
        }
    }
    normalize_rows(&out)
}

#[derive(Clone, Debug)]
pub struct RectifiedLoss<T = f32> {
    /// Unnormalized sum over the batch.
    pub sum: f64,
    pub d_logits: Matrix<T>,
    pub weights: Vec<f64>,
}

/// `Σ_i w_i · CE(logits_i, n_base + y_i)` with weights from the frozen
/// prototypes; the weights carry no gradient. `scale` multiplies the gradient.
pub fn rectified_loss<T: Real>(
    logits: &Matrix<T>,
    labels: &[usize],
    features: &Matrix<T>,
    prototypes: &Matrix<T>,
    n_base: usize,
    scale: f64,
) -> Result<RectifiedLoss<T>> {
    let weights = rectification_weights(features, labels, prototypes)?;
    let targets: Vec<usize> = labels.iter().map(|&l| l + n_base).collect();
    let ce = weighted_cross_entropy(logits, &targets, Some(&weights), 1.0)?;
    let mut d_logits = ce.d_logits;
    d_logits.scale(T::lift(scale));
    Ok(RectifiedLoss { sum: ce.value, d_logits, weights })
}

#[derive(Clone, Debug)]
pub struct Stage2Loss<T = f32> {
    pub value: f64,
    pub ce_sum: f64,
    pub rect_sum: f64,
    pub d_labelled: Matrix<T>,
    pub d_unlabelled: Matrix<T>,
    pub weights: Vec<f64>,
}

/// `(Σ CE over the labelled portion + Σ rectified CE over the unlabelled
/// portion) / (n_l + n_u)`.
#[allow(clippy::too_many_arguments)]
pub fn stage2_loss<T: Real>(
    labelled_logits: &Matrix<T>,
    labelled_y: &[usize],
    unlabelled_logits: &Matrix<T>,
    pseudo: &[usize],
    unlabelled_features: &Matrix<T>,
    prototypes: &Matrix<T>,
    n_base: usize,
) -> Result<Stage2Loss<T>> {
    let (nl, nu) = (labelled_y.len(), pseudo.len());
    if nl + nu == 0 {
        return Err(Error::EmptyBatch);
    }
    let denom = (nl + nu) as f64;
    if let Some(&bad) = labelled_y.iter().find(|&&y| y >= n_base) {
        return Err(Error::LabelOutOfRange { label: bad, bound: n_base });
    }
    let ce = weighted_cross_entropy(labelled_logits, labelled_y, None, 1.0)?;
    let mut d_labelled = ce.d_logits;
    d_labelled.scale(T::lift(1.0 / denom));
    let rect = rectified_loss(unlabelled_logits, pseudo, unlabelled_features, prototypes, n_base, 1.0 / denom)?;
    Ok(Stage2Loss {
        value: (ce.value + rect.sum) / denom,
        ce_sum: ce.value,
        rect_sum: rect.sum,
        d_labelled,
        d_unlabelled: rect.d_logits,
        weights: rect.weights,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelfTrainConfig {
    pub n_iters: usize,
    pub epochs_per_iter: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Train on one augmented global view instead of the raw payload.
    pub augment: bool,
    pub clustering: ClusterMethod,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        Self {
            n_iters: 2,
            epochs_per_iter: 2,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            augment: true,
            clustering: ClusterMethod::default(),
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("stage2.batch_size", "must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("stage2.lr", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("stage2.momentum", "must lie in [0, 1)"));
        }
        self.clustering.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    pub source: LabelSource,
    pub loss: f64,
    pub ce: f64,
    pub rect: f64,
    pub mean_weight: f64,
    /// Pseudo labels that differ from the previous iteration's.
    pub relabelled: usize,
}

/// Novel-class argmax of the classifier over the unlabelled payloads.
pub fn classifier_labels(net: &Network<f32>, x: &Matrix<f32>) -> Result<Vec<usize>> {
    let logits = net.forward(x)?.logits;
    Ok(argmax_rows(&logits, net.n_base()..net.n_classes()))
}

/// Iterated self-training. Iteration 1 trains on `initial`; later iterations
/// relabel through the classifier's novel rows. The prototype snapshot of
/// every iteration is the normalized per-class mean of the current features.
/// `on_iter` sees the network after every iteration.
#[allow(clippy::too_many_arguments)]
pub fn self_train(
    exec: Exec,
    net: &mut Network<f32>,
    labelled: &LabelledSet,
    unlabelled: &UnlabelledSet,
    initial: PseudoLabelSet,
    cfg: &SelfTrainConfig,
    policy: &ViewPolicy,
    rng: &Rng,
    mut on_iter: impl FnMut(&Network<f32>, &PseudoLabelSet, &IterationLog) -> Result<()>,
) -> Result<Vec<IterationLog>> {
    cfg.validate()?;
    let (nl, nu) = (labelled.x.rows(), unlabelled.x.rows());
    if nl + nu == 0 {
        return Err(Error::EmptyBatch);
    }
    let n_base = net.n_base();
    let k = net.n_novel();
    if initial.k() != k || initial.labels.len() != nu {
        return Err(Error::shape(format!("{nu} labels over {k} classes"), format!("{} over {}", initial.labels.len(), initial.k())));
    }
    let n_batches = (nl + nu).div_ceil(cfg.batch_size);
    let total_steps = (cfg.n_iters * cfg.epochs_per_iter * n_batches) as u64;
    let schedule = LrSchedule { base_lr: cfg.lr, warmup_steps: 0, total_steps, floor_lr: 0.0 };
    let mut opt = OptimizerState::for_params(OptimizerKind::sgd(cfg.momentum, cfg.weight_decay), &net.param_slices());

    let mut pseudo = initial;
    let mut logs = Vec::with_capacity(cfg.n_iters);
    for iter in 1..=cfg.n_iters {
        let mut relabelled = 0;
        if iter >= 2 {
            let labels = classifier_labels(net, &unlabelled.x)?;
            relabelled = labels.iter().zip(&pseudo.labels).filter(|(a, b)| a != b).count();
            let feats = normalize_rows(&net.features(&unlabelled.x)?)?;
            let protos = class_mean_prototypes(&feats, &labels, k, Some(pseudo.prototypes()))?;
            pseudo = PseudoLabelSet::new(labels, &feats, protos, LabelSource::Classifier)?;
        }
        let snapshot = pseudo.prototypes().clone();
        let (mut loss_sum, mut ce_sum, mut rect_sum, mut w_sum, mut seen) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for epoch in 0..cfg.epochs_per_iter {
            let mut erng = rng.child(((iter as u64) << 32) | epoch as u64);
            let mut lab_order: Vec<usize> = (0..nl).collect();
            let mut unl_order: Vec<usize> = (0..nu).collect();
            erng.shuffle(&mut lab_order);
            erng.shuffle(&mut unl_order);
            let view_rng = erng.child(0);
            for b in 0..n_batches {
                let lrows = &lab_order[b * nl / n_batches..(b + 1) * nl / n_batches];
                let urows = &unl_order[b * nu / n_batches..(b + 1) * nu / n_batches];
                if lrows.is_empty() && urows.is_empty() {
                    continue;
                }
                let prepare = |x: &Matrix<f32>, rows: &[usize], offset: u64| -> Result<Matrix<f32>> {
                    if !cfg.augment || rows.is_empty() {
                        return Ok(x.select_rows(rows));
                    }
                    let streams: Vec<u64> = rows.iter().map(|&r| offset + r as u64).collect();
                    let sets = policy.batch_views(exec, x, rows, &streams, 1, &view_rng)?;
                    stack_view(&sets, 0)
                };
                let xl = prepare(&labelled.x, lrows, 0)?;
                let xu = prepare(&unlabelled.x, urows, nl as u64)?;
                let x = Matrix::vstack(&[&xl, &xu])?;
                let fwd = net.forward(&x)?;
                let split = lrows.len();
                let yl: Vec<usize> = lrows.iter().map(|&r| labelled.y[r]).collect();
                let yu: Vec<usize> = urows.iter().map(|&r| pseudo.labels[r]).collect();
                let fu = fwd.features.slice_rows(split..x.rows());
                let loss = stage2_loss(
                    &fwd.logits.slice_rows(0..split),
                    &yl,
                    &fwd.logits.slice_rows(split..x.rows()),
                    &yu,
                    &fu,
                    &snapshot,
                    n_base,
                )?;
                let d_logits = Matrix::vstack(&[&loss.d_labelled, &loss.d_unlabelled])?;
                let d_features = Matrix::zeros(x.rows(), net.embed_dim());
                let grads = net.backward(&fwd.tape, &d_features, &d_logits)?;
                let lr = schedule.lr_at(opt.steps());
                opt.step(&mut net.param_slices_mut(), &grads.slices(), lr)?;
                loss_sum += loss.value * x.rows() as f64;
                ce_sum += loss.ce_sum;
                rect_sum += loss.rect_sum;
                w_sum += loss.weights.iter().sum::<f64>();
                seen += x.rows();
            }
        }
        debug_assert_eq!(&snapshot, pseudo.prototypes());
        let seen_f = seen.max(1) as f64;
        let log = IterationLog {
            iter,
            source: pseudo.source,
            loss: loss_sum / seen_f,
            ce: ce_sum / seen_f,
            rect: rect_sum / seen_f,
            mean_weight: w_sum / (cfg.epochs_per_iter * nu).max(1) as f64,
            relabelled,
        };
        on_iter(net, &pseudo, &log)?;
        logs.push(log);
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_weights_reduce_to_summed_ce() {
        let mut rng = Rng::new(0, 0);
        let z = Matrix::from_fn(3, 4, |_, _| rng.normal());
        let protos = Matrix::from_rows(&[[1.0f64, 0.0], [0.0, 1.0]]).unwrap();
        let feats = Matrix::from_rows(&[[2.0f64, 0.0], [0.0, 3.0], [1.0, 0.0]]).unwrap();
        let labels = [0, 1, 0];
        let r = rectified_loss(&z, &labels, &feats, &protos, 2, 1.0).unwrap();
        assert_eq!(r.weights, vec![1.0, 1.0, 1.0]);
        let plain = weighted_cross_entropy(&z, &[2, 3, 2], None, 1.0).unwrap();
        assert!((r.sum - plain.value).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_feature_contributes_nothing() {
        let z = Matrix::from_rows(&[[0.3f64, -1.0, 2.0]]).unwrap();
        let protos = Matrix::from_rows(&[[1.0f64, 0.0]]).unwrap();
        let feats = Matrix::from_rows(&[[0.0f64, 5.0]]).unwrap();
        let r = rectified_loss(&z, &[0], &feats, &protos, 2, 1.0).unwrap();
        assert_eq!(r.sum, 0.0);
        assert!(r.d_logits.as_slice().iter().all(|&g| g == 0.0));
        let anti = Matrix::from_rows(&[[-1.0f64, 0.0]]).unwrap();
        assert_eq!(rectified_loss(&z, &[0], &anti, &protos, 2, 1.0).unwrap().weights, vec![0.0]);
    }

    #[test]
    fn rectified_gradient_matches_finite_differences() {
        let mut rng = Rng::new(1, 0);
        let z = Matrix::from_fn(5, 6, |_, _| rng.normal());
        let feats = Matrix::from_fn(5, 3, |_, _| rng.normal());
        let protos = normalize_rows(&Matrix::from_fn(3, 3, |_, _| rng.normal())).unwrap();
        let labels = [0, 2, 1, 1, 0];
        let base = rectified_loss(&z, &labels, &feats, &protos, 3, 1.0).unwrap();
        let h = 1e-6;
        for idx in 0..30 {
            let mut up = z.clone();
            up.as_mut_slice()[idx] += h;
            let mut dn = z.clone();
            dn.as_mut_slice()[idx] -= h;
            let fd = (rectified_loss(&up, &labels, &feats, &protos, 3, 1.0).unwrap().sum
                - rectified_loss(&dn, &labels, &feats, &protos, 3, 1.0).unwrap().sum)
                / (2.0 * h);
            let an = base.d_logits.as_slice()[idx];
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-3));
        }
        assert!(matches!(rectified_loss(&z, &[0, 3, 1, 1, 0], &feats, &protos, 3, 1.0), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn stage2_examples() {
        let mut rng = Rng::new(2, 0);
        let zl = Matrix::from_fn(3, 5, |_, _| rng.normal());
        let empty = Matrix::<f64>::zeros(0, 5);
        let protos = Matrix::from_rows(&[[1.0f64, 0.0], [0.0, 1.0], [0.6, 0.8]]).unwrap();
        let nof = Matrix::<f64>::zeros(0, 2);
        let only_l = stage2_loss(&zl, &[0, 1, 1], &empty, &[], &nof, &protos, 2).unwrap();
        let mean_ce = weighted_cross_entropy(&zl, &[0, 1, 1], None, 3.0).unwrap();
        assert!((only_l.value - mean_ce.value).abs() < 1e-12);

        let zu = Matrix::from_fn(3, 5, |_, _| rng.normal());
        let feats = Matrix::from_fn(3, 2, |_, _| rng.normal());
        let pseudo = [2, 0, 1];
        let mixed = stage2_loss(&zl, &[0, 1, 1], &zu, &pseudo, &feats, &protos, 2).unwrap();
        let mut oracle = 0.0;
        for i in 0..3 {
            let r = zl.row(i);
            let lse = r.iter().map(|v| v.exp()).sum::<f64>().ln();
            oracle += lse - r[[0, 1, 1][i]];
        }
        for i in 0..3 {
            let p = protos.row(pseudo[i]);
            let f = feats.row(i);
            let cos = (p[0] * f[0] + p[1] * f[1]) / (f[0] * f[0] + f[1] * f[1]).sqrt();
            let r = zu.row(i);
            let lse = r.iter().map(|v| v.exp()).sum::<f64>().ln();
            oracle += cos.max(0.0) * (lse - r[2 + pseudo[i]]);
        }
        assert!((mixed.value - oracle / 6.0).abs() < 1e-12);
        assert!(matches!(stage2_loss(&empty, &[], &empty, &[], &nof, &protos, 2), Err(Error::EmptyBatch)));
    }

    #[test]
    fn unit_weights_give_joint_mean_ce() {
        let mut rng = Rng::new(3, 0);
        let zl = Matrix::from_fn(2, 4, |_, _| rng.normal());
        let zu = Matrix::from_fn(2, 4, |_, _| rng.normal());
        let protos = Matrix::from_rows(&[[1.0f64, 0.0], [0.0, 1.0]]).unwrap();
        let feats = Matrix::from_rows(&[[0.0f64, 2.0], [1.0, 0.0]]).unwrap();
        let s = stage2_loss(&zl, &[0, 1], &zu, &[1, 0], &feats, &protos, 2).unwrap();
        let all = Matrix::vstack(&[&zl, &zu]).unwrap();
        let joint = weighted_cross_entropy(&all, &[0, 1, 3, 2], None, 4.0).unwrap();
        assert!((s.value - joint.value).abs() < 1e-12);
    }

    #[test]
    fn stage2_gradient_matches_finite_differences() {
        let mut rng = Rng::new(4, 0);
        let zl = Matrix::from_fn(2, 5, |_, _| rng.normal());
        let zu = Matrix::from_fn(3, 5, |_, _| rng.normal());
        let feats = Matrix::from_fn(3, 4, |_, _| rng.normal());
        let protos = normalize_rows(&Matrix::from_fn(3, 4, |_, _| rng.normal())).unwrap();
        let (yl, yu) = ([1, 0], [2, 0, 1]);
        let f = |zl: &Matrix<f64>, zu: &Matrix<f64>| stage2_loss(zl, &yl, zu, &yu, &feats, &protos, 2).unwrap();
        let base = f(&zl, &zu);
        let h = 1e-6;
        for idx in 0..10 {
            let (mut up, mut dn) = (zl.clone(), zl.clone());
            up.as_mut_slice()[idx] += h;
            dn.as_mut_slice()[idx] -= h;
            let fd = (f(&up, &zu).value - f(&dn, &zu).value) / (2.0 * h);
            let an = base.d_labelled.as_slice()[idx];
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-3));
        }
        for idx in 0..15 {
            let (mut up, mut dn) = (zu.clone(), zu.clone());
            up.as_mut_slice()[idx] += h;
            dn.as_mut_slice()[idx] -= h;
            let fd = (f(&zl, &up).value - f(&zl, &dn).value) / (2.0 * h);
            let an = base.d_unlabelled.as_slice()[idx];
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-3));
        }
    }

    #[test]
    fn order_invariance() {
        let mut rng = Rng::new(5, 0);
        let zu = Matrix::from_fn(4, 4, |_, _| rng.normal());
        let feats = Matrix::from_fn(4, 2, |_, _| rng.normal());
        let protos = Matrix::from_rows(&[[1.0f64, 0.0], [0.0, 1.0]]).unwrap();
        let zl = Matrix::<f64>::zeros(0, 4);
        let a = stage2_loss(&zl, &[], &zu, &[0, 1, 1, 0], &feats, &protos, 2).unwrap();
        let perm = [3, 1, 0, 2];
        let b = stage2_loss(&zl, &[], &zu.select_rows(&perm), &[0, 1, 0, 1], &feats.select_rows(&perm), &protos, 2).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
    }

    #[test]
    fn offline_labels_on_blobs() {
        let mut rng = Rng::new(6, 0);
        let centers = [[5.0f32, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 5.0]];
        let truth: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let x = Matrix::from_fn(60, 3, |i, j| centers[truth[i]][j] + 0.2 * rng.normal() as f32);
        let (set, _) = offline_pseudo_labels(Exec::Sequential, &x, 3, &ClusterMethod::default(), 0).unwrap();
        assert_eq!(crate::clustering::hungarian_acc(&set.labels, &truth, 3).unwrap().acc, 1.0);
        assert!(set.weights.iter().all(|w| (0.0..=1.0).contains(w)));

        let (one, _) = offline_pseudo_labels(Exec::Sequential, &x, 1, &ClusterMethod::default(), 0).unwrap();
        assert!(one.labels.iter().all(|&l| l == 0));
        let unit = normalize_rows(&x).unwrap();
        let mean: Vec<f64> = (0..3).map(|j| unit.as_slice().iter().skip(j).step_by(3).map(|&v| v as f64).sum::<f64>()).collect();
        let n = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..3 {
            assert!((one.prototypes().get(0, j) as f64 - mean[j] / n).abs() < 1e-5);
        }
    }
}
