//! Offline clustering back-ends and Hungarian-matched evaluation.

mod eval;
mod hungarian;
mod kmeans;
mod spectral;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub use eval::{argmax_rows, eval_splits, EvalSet, Predictor, SplitAcc};
pub use hungarian::{
    confusion, confusion_csv, hungarian_acc, max_weight_matching, AccReport,
};
pub use kmeans::{kmeans, KMeansConfig};
pub use spectral::{median_pairwise_distance, normalized_laplacian, spectral, SpectralConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub labels: Vec<usize>,
    /// `k × D`, in the input space.
    pub centroids: Matrix<f64>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step of the winning restart.
    pub history: Vec<f64>,
}

impl ClusterResult {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }
}

fn default_restarts() -> usize {
    10
}

fn default_max_iters() -> usize {
    300
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum ClusterMethod {
    KMeans {
        #[serde(default = "default_restarts")]
        restarts: usize,
        #[serde(default = "default_max_iters")]
        max_iters: usize,
    },
    Spectral {
        /// Affinity bandwidth; `None` uses the median pairwise distance.
        #[serde(default)]
        sigma: Option<f64>,
        #[serde(default = "default_restarts")]
        restarts: usize,
        #[serde(default = "default_max_iters")]
        max_iters: usize,
    },
}

impl Default for ClusterMethod {
    fn default() -> Self {
        ClusterMethod::KMeans {
            restarts: default_restarts(),
            max_iters: default_max_iters(),
        }
    }
}

impl ClusterMethod {
    pub fn spectral_default() -> Self {
        ClusterMethod::Spectral {
            sigma: None,
            restarts: default_restarts(),
            max_iters: default_max_iters(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClusterMethod::KMeans { .. } => "kmeans",
            ClusterMethod::Spectral { .. } => "spectral",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (restarts, iters) = match *self {
            ClusterMethod::KMeans { restarts, max_iters } => (restarts, max_iters),
            ClusterMethod::Spectral { sigma, restarts, max_iters } => {
                if sigma.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
                    return Err(Error::config("clustering.sigma", "must be positive"));
                }
                (restarts, max_iters)
            }
        };
        if restarts == 0 || iters == 0 {
            return Err(Error::config("clustering", "restarts and max_iters must be positive"));
        }
        Ok(())
    }

    pub fn run(
        &self,
        exec: crate::par::Exec,
        x: &Matrix<f32>,
        k: usize,
        seed: u64,
    ) -> Result<ClusterResult> {
        match *self {
            ClusterMethod::KMeans { restarts, max_iters } => kmeans(
                exec,
                x,
                &KMeansConfig { k, max_iters, restarts, seed },
            ),
            ClusterMethod::Spectral { sigma, restarts, max_iters } => spectral(
                exec,
                x,
                &SpectralConfig {
                    k,
                    sigma,
                    kmeans: KMeansConfig { k, max_iters, restarts, seed },
                },
            ),
        }
    }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
