use crate::error::{Error, Result};
use crate::numerics::{pairwise_sq_dists, sym_eigh, Matrix, Real};
use crate::par::Exec;

use super::{kmeans, ClusterResult, KMeansConfig};

const ISOLATION_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralConfig {
    pub k: usize,
    pub sigma: Option<f64>,
    pub kmeans: KMeansConfig,
}

/// Median of the distances over all unordered pairs.
pub fn median_pairwise_distance<T: Real>(exec: Exec, x: &Matrix<T>) -> f64 {
    let n = x.rows();
    let d2 = pairwise_sq_dists(exec, x, x);
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| d2[i * n + j].max(0.0).sqrt())
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len() / 2;
    if d.len() % 2 == 1 {
        d[m]
    } else {
        0.5 * (d[m - 1] + d[m])
    }
}

/// `I − D^{−1/2} A D^{−1/2}` for the Gaussian affinity with zero diagonal.
pub fn normalized_laplacian<T: Real>(exec: Exec, x: &Matrix<T>, sigma: f64) -> Result<Matrix<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::DegenerateInput(format!("bandwidth {sigma} must be positive")));
    }
    let n = x.rows();
    let d2 = pairwise_sq_dists(exec, x, x);
    let denom = 2.0 * sigma * sigma;
    let a = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (-d2[i * n + j] / denom).exp() });
    let mut inv_sqrt = Vec::with_capacity(n);
    for (i, row) in a.iter_rows().enumerate() {
        let deg: f64 = row.iter().sum();
        if deg < ISOLATION_FLOOR {
            return Err(Error::IsolatedPoint { index: i });
        }
        inv_sqrt.push(1.0 / deg.sqrt());
    }
    Ok(Matrix::from_fn(n, n, |i, j| {
        let m = a.get(i, j) * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 - m
        } else {
            -m
        }
    }))
}

/// Normalized spectral clustering: embed with the `k` smallest Laplacian
/// eigenvectors, row-normalize, then k-means. Centroids are the input-space
/// means of the resulting clusters.
pub fn spectral<T: Real>(exec: Exec, x: &Matrix<T>, cfg: &SpectralConfig) -> Result<ClusterResult> {
    let n = x.rows();
    if cfg.k == 0 || n < cfg.k {
        return Err(Error::DegenerateInput(format!(
            "spectral clustering needs 1 <= k <= n, got k={} n={n}",
            cfg.k
        )));
    }
    let sigma = match cfg.sigma {
        Some(s) => s,
        None => median_pairwise_distance(exec, x),
    };
    let lap = normalized_laplacian(exec, x, sigma)?;
    let eig = sym_eigh(&lap)?;
    let mut embed = Matrix::from_fn(n, cfg.k, |i, c| eig.vectors.get(i, c));
    for i in 0..n {
        let row = embed.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < ISOLATION_FLOOR {
            return Err(Error::DegenerateInput(format!("zero spectral embedding at row {i}")));
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    let km = kmeans(exec, &embed, &KMeansConfig { k: cfg.k, ..cfg.kmeans })?;

    let dim = x.cols();
    let mut centroids = Matrix::<f64>::zeros(cfg.k, dim);
    let mut counts = vec![0usize; cfg.k];
    for (i, &l) in km.labels.iter().enumerate() {
        counts[l] += 1;
        for (c, v) in centroids.row_mut(l).iter_mut().zip(x.row(i)) {
            *c += v.widen();
        }
    }
    let mut inertia = 0.0;
    for (j, &c) in counts.iter().enumerate() {
        let inv = 1.0 / c.max(1) as f64;
        centroids.row_mut(j).iter_mut().for_each(|v| *v *= inv);
    }
    for (i, &l) in km.labels.iter().enumerate() {
        inertia += x
            .row(i)
            .iter()
            .zip(centroids.row(l))
            .map(|(a, b)| (a.widen() - b) * (a.widen() - b))
            .sum::<f64>();
    }
    Ok(ClusterResult {
        labels: km.labels,
        centroids,
        inertia,
        iterations: km.iterations,
        history: km.history,
    })
}
