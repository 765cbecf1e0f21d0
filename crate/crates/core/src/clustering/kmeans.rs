use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real, Rng};
use crate::par::{self, Exec};

use super::ClusterResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, max_iters: 300, restarts: 10, seed }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding then Lloyd iterations; the restart with the lowest
/// inertia wins (ties to the earliest restart).
pub fn kmeans<T: Real>(exec: Exec, x: &Matrix<T>, cfg: &KMeansConfig) -> Result<ClusterResult> {
    let n = x.rows();
    if cfg.k == 0 || n < cfg.k {
        return Err(Error::DegenerateInput(format!(
            "k-means needs 1 <= k <= n, got k={} n={n}",
            cfg.k
        )));
    }
    if cfg.restarts == 0 || cfg.max_iters == 0 {
        return Err(Error::config("kmeans", "restarts and max_iters must be positive"));
    }
    let data: Matrix<f64> = x.cast();
    let base = Rng::new(cfg.seed, 0);
    let runs = par::map_range(exec, 0..cfg.restarts, |r| {
        lloyd(&data, cfg.k, cfg.max_iters, &mut base.child(r as u64))
    });
    let mut best = None::<ClusterResult>;
    for run in runs {
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus(x: &Matrix<f64>, k: usize, rng: &mut Rng) -> Matrix<f64> {
    let n = x.rows();
    let mut centers = Vec::with_capacity(k);
    centers.push(rng.below(n));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.below(n)
        };
        centers.push(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    x.select_rows(&centers)
}

fn assign(x: &Matrix<f64>, c: &Matrix<f64>) -> Vec<(usize, f64)> {
    (0..x.rows())
        .map(|i| {
            let xi = x.row(i);
            let mut best = (0, f64::INFINITY);
            for (j, cj) in c.iter_rows().enumerate() {
                let d = sq_dist(xi, cj);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect()
}

fn lloyd(x: &Matrix<f64>, k: usize, max_iters: usize, rng: &mut Rng) -> ClusterResult {
    let (n, dim) = x.shape();
    let mut centroids = plus_plus(x, k, rng);
    let mut labels: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let assigned = assign(x, &centroids);
        history.push(assigned.iter().map(|a| a.1).sum());
        let next: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        let converged = next == labels;
        labels = next;
        if converged || iterations == max_iters {
            break;
        }
        iterations += 1;

        let mut sums = Matrix::<f64>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums.row_mut(l).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let mut dist: Vec<f64> = assigned.iter().map(|a| a.1).collect();
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                for (c, s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *c = s * inv;
                }
            } else {
                let mut far = 0;
                for i in 1..n {
                    if dist[i] > dist[far] {
                        far = i;
                    }
                }
                centroids.row_mut(j).copy_from_slice(x.row(far));
                dist[far] = 0.0;
            }
        }
    }
    let inertia = *history.last().expect("one assignment");
    ClusterResult { labels, centroids, inertia, iterations, history }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_is_mean() {
        let x = Matrix::from_rows(&[[0.0f64, 1.0], [2.0, 3.0], [4.0, -1.0]]).unwrap();
        let r = kmeans(Exec::Sequential, &x, &KMeansConfig::new(1, 0)).unwrap();
        assert_eq!(r.labels, vec![0, 0, 0]);
        assert!((r.centroids.get(0, 0) - 2.0).abs() < 1e-12 && (r.centroids.get(0, 1) - 1.0).abs() < 1e-12);
        // per-axis variance 8/3 and 8/3, times n = 3
        assert!((r.inertia - 16.0).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_pairs_match_brute_force() {
        let pts = [0.0f64, 0.1, 10.0, 10.1];
        let x = Matrix::from_fn(4, 1, |i, _| pts[i]);
        let r = kmeans(Exec::Sequential, &x, &KMeansConfig::new(2, 3)).unwrap();
        let sse = |mask: u32| {
            let mut total = 0.0;
            for side in [0, 1] {
                let members: Vec<f64> = (0..4).filter(|&i| (mask >> i) & 1 == side).map(|i| pts[i]).collect();
                if members.is_empty() {
                    return f64::INFINITY;
                }
                let m = members.iter().sum::<f64>() / members.len() as f64;
                total += members.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
            }
            total
        };
        let (best_mask, best) = (1u32..15).map(|m| (m, sse(m))).min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert!((r.inertia - best).abs() < 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                let same_oracle = ((best_mask >> i) & 1) == ((best_mask >> j) & 1);
                assert_eq!(r.labels[i] == r.labels[j], same_oracle);
            }
        }
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let mut rng = Rng::new(1, 0);
        let x = Matrix::from_fn(6, 3, |_, _| rng.normal());
        let r = kmeans(Exec::Sequential, &x, &KMeansConfig::new(6, 1)).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut l = r.labels.clone();
        l.sort();
        assert_eq!(l, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn too_few_points() {
        let x = Matrix::<f64>::zeros(2, 2);
        assert!(matches!(kmeans(Exec::Sequential, &x, &KMeansConfig::new(3, 0)), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn duplicates_and_empty_clusters() {
        let x = Matrix::from_fn(10, 2, |i, _| if i < 9 { 1.0 } else { 5.0 });
        let r = kmeans(Exec::Sequential, &x, &KMeansConfig::new(3, 2)).unwrap();
        assert!(r.labels.iter().all(|&l| l < 3));
        assert!(r.centroids.is_finite());
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn inertia_never_increases_and_modes_agree() {
        let mut rng = Rng::new(4, 0);
        let x = Matrix::from_fn(300, 5, |i, _| rng.normal() + (i % 4) as f64 * 1.5);
        let cfg = KMeansConfig::new(4, 11);
        let a = kmeans(Exec::Sequential, &x, &cfg).unwrap();
        let b = kmeans(Exec::Parallel, &x, &cfg).unwrap();
        assert_eq!(a, b);
        for r in 0..cfg.restarts {
            let run = lloyd(&x, 4, 300, &mut Rng::new(11, 0).child(r as u64));
            assert!(run.history.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs()));
            assert!(a.inertia <= run.inertia);
        }
    }
}
