//! Network checkpoints: one `PDM1` file per weight/bias plus `network.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Linear, Network, OptimizerKind};
use crate::error::{Error, Result};
use crate::numerics::{pdm, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkManifest {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub n_classes: usize,
    pub n_base: usize,
    pub optimizer: OptimizerKind,
    pub step: u64,
}

const MANIFEST: &str = "network.json";

fn write_linear(dir: &Path, name: &str, l: &Linear<f32>) -> Result<()> {
    pdm::write(&dir.join(format!("{name}_weight.pdm")), &l.weight)?;
    let bias = Matrix::new(1, l.bias.len(), l.bias.clone())?;
    pdm::write(&dir.join(format!("{name}_bias.pdm")), &bias)
}

fn read_linear(dir: &Path, name: &str) -> Result<Linear<f32>> {
    let weight = pdm::read(&dir.join(format!("{name}_weight.pdm")))?;
    let bias = pdm::read(&dir.join(format!("{name}_bias.pdm")))?;
    if bias.rows() != 1 || bias.cols() != weight.rows() {
        return Err(Error::Malformed {
            what: format!("{name} bias"),
            reason: format!("{} does not match weight {}", bias.shape_str(), weight.shape_str()),
        });
    }
    Ok(Linear {
        weight,
        bias: bias.into_vec(),
    })
}

pub fn save(dir: &Path, net: &Network<f32>, optimizer: OptimizerKind, step: u64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, l) in net.layers().iter().enumerate() {
        write_linear(dir, &format!("layer{i}"), l)?;
    }
    write_linear(dir, "classifier", net.classifier())?;
    let manifest = NetworkManifest {
        widths: net.widths().to_vec(),
        activation: net.activation(),
        n_classes: net.n_classes(),
        n_base: net.n_base(),
        optimizer,
        step,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load(dir: &Path) -> Result<(Network<f32>, NetworkManifest)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::CheckpointMissing {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let manifest: NetworkManifest =
        serde_json::from_str(&text).map_err(|e| Error::Json { path, source: e })?;
    let layers = (0..manifest.widths.len().saturating_sub(1))
        .map(|i| read_linear(dir, &format!("layer{i}")))
        .collect::<Result<Vec<_>>>()?;
    let classifier = read_linear(dir, "classifier")?;
    let net = Network::from_parts(layers, classifier, manifest.n_base, manifest.activation)?;
    if net.widths() != manifest.widths.as_slice() || net.n_classes() != manifest.n_classes {
        return Err(Error::Malformed {
            what: dir.display().to_string(),
            reason: "weights disagree with the manifest".into(),
        });
    }
    Ok((net, manifest))
}
