//! Run configuration and the end-to-end driver behind the command line:
//! dataset synthesis, stage I, stage II and evaluation with on-disk artifacts.

mod config;
mod stage1;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::{confusion, confusion_csv, eval_splits, hungarian_acc, kmeans, EvalSet, KMeansConfig, SplitAcc};
use crate::data::{make_splits, synth_gaussians, synth_glyphs, Dataset, DatasetSplit};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Network, OptimizerKind};
use crate::numerics::{pdm, Matrix, Rng};
use crate::prototypes::PrototypeBank;
use crate::selftrain::{offline_pseudo_labels, self_train, IterationLog, LabelSource};

pub use config::{
    Ablation, AugmentConfig, DatasetSpec, NetworkConfig, PresetName, RunConfig, Stage1Config,
};
pub use stage1::{train_stage1, EpochLog, Stage1Inputs, Stage1State};

pub const METRICS: &str = "metrics.jsonl";
pub const ACC: &str = "acc.json";
pub const CONFUSION: &str = "confusion.csv";
pub const EMBEDDINGS: &str = "embeddings.csv";
const STAMP: &str = "run.json";

pub fn stage1_dir(out: &Path) -> PathBuf {
    out.join("checkpoint").join("stage1")
}

pub fn final_dir(out: &Path) -> PathBuf {
    out.join("checkpoint").join("final")
}

/// Identity of the run that produced a checkpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStamp {
    pub config_hash: String,
    pub stage: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub stage: u8,
    /// Whether the novel-train accuracy comes from clustering the features or
    /// from the classifier's novel head.
    pub novel_train_source: LabelSource,
    pub novel_train: f64,
    pub test_old: f64,
    pub test_new: f64,
    pub test_all: f64,
    pub baseline_raw_kmeans: f64,
    pub novel_matching: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct MetricLine<'a, T: Serialize> {
    config_hash: &'a str,
    stage: u8,
    #[serde(flatten)]
    record: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub novel_train: f64,
    pub test_old: f64,
    pub test_new: f64,
    pub test_all: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<IterationLog>,
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| Error::CheckpointMissing {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })
}

fn append_metric<T: Serialize>(out: &Path, hash: &str, stage: u8, record: T) -> Result<()> {
    let path = out.join(METRICS);
    let line = serde_json::to_string(&MetricLine { config_hash: hash, stage, record })
        .map_err(|e| Error::Json { path: path.clone(), source: e })?;
    let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
}

pub fn resolve_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.dataset {
        DatasetSpec::Gaussians(p) => synth_gaussians(p),
        DatasetSpec::Glyphs(p) => synth_glyphs(p),
        DatasetSpec::Manifest { path } => Dataset::load(path),
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<(Dataset, DatasetSplit)> {
    let ds = resolve_dataset(cfg)?;
    let base = cfg.base_classes.clone().unwrap_or_else(|| ds.manifest.classes.base.clone());
    let split = make_splits(&ds, &base)?;
    Ok((ds, split))
}

fn eval_set(split: &DatasetSplit) -> EvalSet<'_> {
    EvalSet {
        unlabelled_x: &split.unlabelled.x,
        unlabelled_y: split.truth.reveal(),
        test_x: &split.test.x,
        test_y: &split.test.y,
        n_base: split.n_base,
        n_novel: split.n_novel,
    }
}

/// Ground truth of the unlabelled split as novel-class indices.
fn novel_truth(split: &DatasetSplit) -> Vec<usize> {
    split.truth.reveal().iter().map(|&y| y - split.n_base).collect()
}

/// Clustering accuracy of the unlabelled features under the configured
/// stage-II clustering method.
pub fn feature_clustering_acc(cfg: &RunConfig, net: &Network<f32>, split: &DatasetSplit) -> Result<f64> {
    let feats = net.features(&split.unlabelled.x)?;
    let (pseudo, _) = offline_pseudo_labels(cfg.exec(), &feats, split.n_novel, &cfg.stage2.clustering, cfg.seed)?;
    Ok(hungarian_acc(&pseudo.labels, &novel_truth(split), split.n_novel)?.acc)
}

pub fn raw_kmeans_acc(cfg: &RunConfig, split: &DatasetSplit) -> Result<f64> {
    let r = kmeans(cfg.exec(), &split.unlabelled.x, &KMeansConfig::new(split.n_novel, cfg.seed))?;
    Ok(hungarian_acc(&r.labels, &novel_truth(split), split.n_novel)?.acc)
}

/// Stage-I models report clustering accuracy of their features on the
/// unlabelled split; stage-II models report their classifier's accuracy.
pub fn evaluate(cfg: &RunConfig, net: &Network<f32>, split: &DatasetSplit, stage: u8) -> Result<(EvalReport, SplitAcc)> {
    if split.n_novel == 0 {
        return Err(Error::DegenerateInput("evaluation needs at least one novel class".into()));
    }
    let acc = eval_splits(net, &eval_set(split))?;
    let (source, novel_train) = if stage == 1 {
        (LabelSource::Clustering, feature_clustering_acc(cfg, net, split)?)
    } else {
        (LabelSource::Classifier, acc.novel_train)
    };
    let report = EvalReport {
        config_hash: cfg.hash(),
        stage,
        novel_train_source: source,
        novel_train,
        test_old: acc.test_old,
        test_new: acc.test_new,
        test_all: acc.test_all,
        baseline_raw_kmeans: raw_kmeans_acc(cfg, split)?,
        novel_matching: acc.test_new_report.matching.clone(),
    };
    Ok((report, acc))
}

fn check_stamp(cfg: &RunConfig, dir: &Path) -> Result<RunStamp> {
    let stamp: RunStamp = read_json(&dir.join(STAMP))?;
    if stamp.config_hash != cfg.hash() {
        return Err(Error::config(
            "config",
            format!("checkpoint {} was produced by config {}, not {}", dir.display(), stamp.config_hash, cfg.hash()),
        ));
    }
    Ok(stamp)
}

fn save_checkpoint(dir: &Path, net: &Network<f32>, stamp: &RunStamp, optimizer: OptimizerKind, steps: u64) -> Result<()> {
    checkpoint::save(dir, net, optimizer, steps)?;
    write_json(&dir.join(STAMP), stamp)
}

/// Writes the configured dataset under `out/data`.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let ds = resolve_dataset(cfg)?;
    let dir = out.join("data");
    ds.save(&dir)?;
    Ok(dir)
}

pub fn cmd_stage1(cfg: &RunConfig, out: &Path) -> Result<Stage1State> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let metrics = out.join(METRICS);
    if metrics.exists() {
        fs::remove_file(&metrics).map_err(|e| Error::io(&metrics, e))?;
    }
    write_json(&out.join("config.json"), cfg)?;
    let (_, split) = prepare(cfg)?;
    let policy = cfg.view_policy(&split.payload)?;
    let hash = cfg.hash();
    let input = Stage1Inputs {
        labelled: &split.labelled,
        unlabelled: &split.unlabelled,
        n_base: split.n_base,
        n_novel: split.n_novel,
        policy: &policy,
    };
    let every = cfg.stage1.eval_every;
    let last = cfg.stage1.epochs.saturating_sub(1);
    let st = train_stage1(
        cfg.exec(),
        &input,
        &cfg.network,
        &cfg.stage1,
        &cfg.head,
        cfg.ablation,
        cfg.augment.n_local,
        cfg.seed,
        |st, log| {
            if every > 0 && split.n_novel > 0 && ((log.epoch + 1) % every == 0 || log.epoch == last) {
                log.kmeans_acc = Some(feature_clustering_acc(cfg, &st.student, &split)?);
            }
            append_metric(out, &hash, 1, log.clone())
        },
    )?;
    let dir = stage1_dir(out);
    let stamp = RunStamp { config_hash: hash, stage: 1 };
    save_checkpoint(&dir, &st.student, &stamp, OptimizerKind::adamw(cfg.stage1.weight_decay), st.steps)?;
    pdm::write(&dir.join("head_projection.pdm"), &st.head.projection)?;
    pdm::write(&dir.join("head_center.pdm"), &Matrix::new(1, st.teacher_head.center.len(), st.teacher_head.center.clone())?)?;
    if let Some(bank) = &st.bank {
        bank.save(&dir.join("prototypes.pdm"))?;
    }
    Ok(st)
}

pub fn load_prototypes(dir: &Path) -> Result<Option<PrototypeBank<f32>>> {
    let path = dir.join("prototypes.pdm");
    if path.exists() {
        PrototypeBank::load(&path).map(Some)
    } else {
        Ok(None)
    }
}

/// Self-training from the stage-I checkpoint; with `pst` off the stage-I
/// model is passed through unchanged.
pub fn cmd_stage2(cfg: &RunConfig, out: &Path) -> Result<Vec<IterationRecord>> {
    cfg.validate()?;
    let src = stage1_dir(out);
    check_stamp(cfg, &src)?;
    let (mut net, manifest) = checkpoint::load(&src)?;
    let (_, split) = prepare(cfg)?;
    if split.n_novel == 0 {
        return Err(Error::DegenerateInput("self-training needs at least one novel class".into()));
    }
    let hash = cfg.hash();
    let exec = cfg.exec();

    let feats = net.features(&split.unlabelled.x)?;
    let (pseudo, _) = offline_pseudo_labels(exec, &feats, split.n_novel, &cfg.stage2.clustering, cfg.seed)?;
    let (stage1_report, _) = evaluate(cfg, &net, &split, 1)?;
    let mut records = vec![IterationRecord {
        iter: 0,
        novel_train: stage1_report.novel_train,
        test_old: stage1_report.test_old,
        test_new: stage1_report.test_new,
        test_all: stage1_report.test_all,
        train: None,
    }];
    append_metric(out, &hash, 2, records[0].clone())?;

    let dst = final_dir(out);
    if !cfg.ablation.pst || cfg.stage2.n_iters == 0 {
        let stamp = RunStamp { config_hash: hash, stage: 1 };
        save_checkpoint(&dst, &net, &stamp, manifest.optimizer, manifest.step)?;
        return Ok(records);
    }

    let rng = Rng::new(cfg.seed, 2);
    net.reset_classifier(&mut rng.child(0));
    let policy = cfg.view_policy(&split.payload)?;
    let set = eval_set(&split);
    self_train(
        exec,
        &mut net,
        &split.labelled,
        &split.unlabelled,
        pseudo,
        &cfg.stage2,
        &policy,
        &rng.child(1),
        |net, _, log| {
            let acc = eval_splits(net, &set)?;
            let rec = IterationRecord {
                iter: log.iter,
                novel_train: acc.novel_train,
                test_old: acc.test_old,
                test_new: acc.test_new,
                test_all: acc.test_all,
                train: Some(log.clone()),
            };
            append_metric(out, &hash, 2, rec.clone())?;
            records.push(rec);
            Ok(())
        },
    )?;
    let stamp = RunStamp { config_hash: hash, stage: 2 };
    let kind = OptimizerKind::sgd(cfg.stage2.momentum, cfg.stage2.weight_decay);
    save_checkpoint(&dst, &net, &stamp, kind, manifest.step)?;
    Ok(records)
}

/// Writes `acc.json`, `confusion.csv` and `embeddings.csv` for a checkpoint
/// (default: the final one).
pub fn cmd_eval(cfg: &RunConfig, out: &Path, checkpoint_dir: Option<&Path>) -> Result<EvalReport> {
    cfg.validate()?;
    let default_dir = final_dir(out);
    let dir = checkpoint_dir.unwrap_or(&default_dir);
    let stamp = check_stamp(cfg, dir)?;
    let (net, _) = checkpoint::load(dir)?;
    let (_, split) = prepare(cfg)?;
    let (report, acc) = evaluate(cfg, &net, &split, stamp.stage)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join(ACC), &report)?;

    let nb = split.n_base;
    let logits = net.forward(&split.test.x)?.logits;
    let matching = &acc.test_new_report.matching;
    let mapped: Vec<usize> = crate::clustering::argmax_rows(&logits, 0..split.n_classes())
        .into_iter()
        .map(|p| if p < nb { p } else { nb + matching[p - nb] })
        .collect();
    let conf = confusion(&mapped, &split.test.y, split.n_classes());
    let path = out.join(CONFUSION);
    fs::write(&path, confusion_csv(&conf)).map_err(|e| Error::io(&path, e))?;

    let mut csv = String::from("split,label");
    for j in 0..net.embed_dim() {
        csv.push_str(&format!(",f{j}"));
    }
    csv.push('\n');
    for (name, x, y) in [
        ("labelled", &split.labelled.x, &split.labelled.y[..]),
        ("unlabelled", &split.unlabelled.x, split.truth.reveal()),
        ("test", &split.test.x, &split.test.y[..]),
    ] {
        if x.rows() == 0 {
            continue;
        }
        let f = net.features(x)?;
        for (row, label) in f.iter_rows().zip(y) {
            csv.push_str(&format!("{name},{label}"));
            for v in row {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
    }
    let path = out.join(EMBEDDINGS);
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

/// Stage I, stage II and evaluation in one go.
pub fn run_all(cfg: &RunConfig, out: &Path) -> Result<EvalReport> {
    cmd_stage1(cfg, out)?;
    cmd_stage2(cfg, out)?;
    cmd_eval(cfg, out, None)
}
