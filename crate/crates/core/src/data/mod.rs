//! Datasets, the on-disk manifest format, and base/novel splitting.

mod synth;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{pdm, Matrix};

pub use synth::{synth_gaussians, synth_glyphs, GaussianParams, GlyphParams, GlyphTemplate};

const TRAIN_FRACTION: f64 = 0.8;
const FILES: [&str; 4] = ["train.pdm", "train_labels.pdm", "test.pdm", "test_labels.pdm"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadKind {
    Vector,
    Image,
}

/// `shape` is `[dim]` for vectors and `[height, width, channels]` for images.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadSpec {
    pub kind: PayloadKind,
    pub shape: Vec<usize>,
}

impl PayloadSpec {
    pub fn vector(dim: usize) -> Self {
        Self { kind: PayloadKind::Vector, shape: vec![dim] }
    }

    pub fn image(height: usize, width: usize, channels: usize) -> Self {
        Self { kind: PayloadKind::Image, shape: vec![height, width, channels] }
    }

    pub fn width(&self) -> usize {
        self.shape.iter().product()
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            PayloadKind::Vector => self.shape.len() == 1,
            PayloadKind::Image => self.shape.len() == 3 && matches!(self.shape[2], 1 | 3),
        };
        if ok && self.width() > 0 {
            Ok(())
        } else {
            Err(Error::Malformed {
                what: "manifest payload".into(),
                reason: format!("bad {:?} shape {:?}", self.kind, self.shape),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLists {
    pub base: Vec<usize>,
    pub novel: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub labelled: usize,
    pub unlabelled: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Generator {
    Gaussians(GaussianParams),
    Glyphs(GlyphParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub classes: ClassLists,
    pub splits: SplitCounts,
    pub payload: PayloadSpec,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
}

/// Every sample with its ground-truth class, as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub train_x: Matrix<f32>,
    pub train_y: Vec<usize>,
    pub test_x: Matrix<f32>,
    pub test_y: Vec<usize>,
}

fn check_partition(classes: &ClassLists) -> Result<BTreeSet<usize>> {
    let mut all = BTreeSet::new();
    for &c in classes.base.iter().chain(&classes.novel) {
        if !all.insert(c) {
            return Err(Error::PartitionViolation(format!(
                "class {c} listed more than once across base and novel"
            )));
        }
    }
    Ok(all)
}

impl Dataset {
    /// Builds a dataset, deriving split counts from the class lists.
    pub fn new(
        name: impl Into<String>,
        classes: ClassLists,
        payload: PayloadSpec,
        train: (Matrix<f32>, Vec<usize>),
        test: (Matrix<f32>, Vec<usize>),
        generator: Option<Generator>,
    ) -> Result<Self> {
        let base: BTreeSet<usize> = classes.base.iter().copied().collect();
        let labelled = train.1.iter().filter(|c| base.contains(c)).count();
        let manifest = Manifest {
            name: name.into(),
            splits: SplitCounts {
                labelled,
                unlabelled: train.1.len() - labelled,
                test: test.1.len(),
            },
            classes,
            payload,
            files: FILES.iter().map(|s| s.to_string()).collect(),
            generator,
        };
        let ds = Self {
            manifest,
            train_x: train.0,
            train_y: train.1,
            test_x: test.0,
            test_y: test.1,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_classes(&self) -> usize {
        self.manifest.classes.base.len() + self.manifest.classes.novel.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        let all = check_partition(&m.classes)?;
        m.payload.validate()?;
        let bad = |reason: String| Error::Malformed { what: format!("dataset {}", m.name), reason };
        for (x, y, what) in [(&self.train_x, &self.train_y, "train"), (&self.test_x, &self.test_y, "test")] {
            if x.cols() != m.payload.width() {
                return Err(bad(format!("{what} width {} != payload {}", x.cols(), m.payload.width())));
            }
            if x.rows() != y.len() {
                return Err(bad(format!("{what} has {} rows but {} labels", x.rows(), y.len())));
            }
            if let Some(c) = y.iter().find(|c| !all.contains(c)) {
                return Err(bad(format!("{what} label {c} is not a listed class")));
            }
        }
        let base: BTreeSet<usize> = m.classes.base.iter().copied().collect();
        let labelled = self.train_y.iter().filter(|c| base.contains(c)).count();
        let counts = SplitCounts {
            labelled,
            unlabelled: self.train_y.len() - labelled,
            test: self.test_y.len(),
        };
        if counts != m.splits {
            return Err(bad(format!("split counts {:?} disagree with manifest {:?}", counts, m.splits)));
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let labels = |y: &[usize]| Matrix::new(y.len(), 1, y.iter().map(|&c| c as f32).collect());
        pdm::write(&dir.join(FILES[0]), &self.train_x)?;
        pdm::write(&dir.join(FILES[1]), &labels(&self.train_y)?)?;
        pdm::write(&dir.join(FILES[2]), &self.test_x)?;
        pdm::write(&dir.join(FILES[3]), &labels(&self.test_y)?)?;
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::Json { path: path.clone(), source: e })?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Reads `manifest.json` (a directory or the manifest file itself) and its
    /// payload files, validating everything.
    pub fn load(path: &Path) -> Result<Self> {
        let (dir, manifest_path) = if path.is_dir() {
            (path.to_path_buf(), path.join("manifest.json"))
        } else {
            (path.parent().unwrap_or(Path::new(".")).to_path_buf(), path.to_path_buf())
        };
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Json { path: manifest_path.clone(), source: e })?;
        check_partition(&manifest.classes)?;
        if manifest.files.len() != 4 {
            return Err(Error::Malformed {
                what: manifest_path.display().to_string(),
                reason: "files must list train, train labels, test, test labels".into(),
            });
        }
        let read = |i: usize| pdm::read(&dir.join(&manifest.files[i]));
        let to_labels = |m: Matrix<f32>, what: &str| -> Result<Vec<usize>> {
            if m.cols() != 1 {
                return Err(Error::Malformed { what: what.into(), reason: "labels must be one column".into() });
            }
            m.as_slice()
                .iter()
                .map(|&v| {
                    if v >= 0.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(Error::Malformed { what: what.into(), reason: format!("label {v} is not a class id") })
                    }
                })
                .collect()
        };
        let ds = Self {
            train_x: read(0)?,
            train_y: to_labels(read(1)?, &manifest.files[1])?,
            test_x: read(2)?,
            test_y: to_labels(read(3)?, &manifest.files[3])?,
            manifest,
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// Samples with labels (base-class training data or the test set).
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledSet {
    pub x: Matrix<f32>,
    pub y: Vec<usize>,
}

/// Unlabelled training payloads; carries no class information.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabelledSet {
    pub x: Matrix<f32>,
}

/// Ground truth for the unlabelled split, for evaluation only.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenTruth(Vec<usize>);

impl HiddenTruth {
    pub fn reveal(&self) -> &[usize] {
        &self.0
    }
}

/// Class ids are remapped so base classes come first (`0..n_base`) followed by
/// the novel classes (`n_base..n_base+n_novel`).
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub n_base: usize,
    pub n_novel: usize,
    /// `class_ids[global] = original class id`.
    pub class_ids: Vec<usize>,
    pub labelled: LabelledSet,
    pub unlabelled: UnlabelledSet,
    pub truth: HiddenTruth,
    pub test: LabelledSet,
    pub payload: PayloadSpec,
}

impl DatasetSplit {
    pub fn n_classes(&self) -> usize {
        self.n_base + self.n_novel
    }
}

/// Splits with the given base classes; every other listed class is novel.
pub fn make_splits(ds: &Dataset, base: &[usize]) -> Result<DatasetSplit> {
    let all = check_partition(&ds.manifest.classes)?;
    let mut seen = BTreeSet::new();
    for &b in base {
        if !all.contains(&b) {
            return Err(Error::PartitionViolation(format!("base class {b} is not in the dataset")));
        }
        if !seen.insert(b) {
            return Err(Error::PartitionViolation(format!("base class {b} repeated")));
        }
    }
    let mut class_ids: Vec<usize> = base.to_vec();
    class_ids.extend(all.iter().filter(|c| !seen.contains(c)));
    let global = |c: usize| class_ids.iter().position(|&k| k == c).expect("validated class");
    let n_base = base.len();

    let (mut lab_rows, mut lab_y, mut unl_rows, mut unl_y) = (vec![], vec![], vec![], vec![]);
    for (i, &c) in ds.train_y.iter().enumerate() {
        let g = global(c);
        if g < n_base {
            lab_rows.push(i);
            lab_y.push(g);
        } else {
            unl_rows.push(i);
            unl_y.push(g);
        }
    }
    Ok(DatasetSplit {
        n_base,
        n_novel: class_ids.len() - n_base,
        labelled: LabelledSet { x: ds.train_x.select_rows(&lab_rows), y: lab_y },
        unlabelled: UnlabelledSet { x: ds.train_x.select_rows(&unl_rows) },
        truth: HiddenTruth(unl_y),
        test: LabelledSet {
            x: ds.test_x.clone(),
            y: ds.test_y.iter().map(|&c| global(c)).collect(),
        },
        payload: ds.manifest.payload.clone(),
        class_ids,
    })
}

/// Number of training samples per class for `per_class` generated samples.
pub(crate) fn train_count(per_class: usize) -> usize {
    ((per_class as f64) * TRAIN_FRACTION).round() as usize
}
