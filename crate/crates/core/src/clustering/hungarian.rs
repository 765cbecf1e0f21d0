use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hungarian-matched clustering accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccReport {
    pub acc: f64,
    /// `matching[cluster] = class`.
    pub matching: Vec<usize>,
    /// Row = true class, column = matched prediction.
    pub confusion: Vec<Vec<usize>>,
    pub n: usize,
}

/// Maximum-weight perfect matching on a square weight matrix; returns
/// `assignment[row] = column`. Shortest augmenting paths with potentials,
/// O(k³).
pub fn max_weight_matching(weights: &[Vec<f64>]) -> Vec<usize> {
    let k = weights.len();
    if k == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let mut u = vec![0.0f64; k + 1];
    let mut v = vec![0.0f64; k + 1];
    // p[j] = row matched to column j (1-based, 0 = free)
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=k {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; k];
    for j in 1..=k {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

fn check_labels(labels: &[usize], k: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= k) {
        Some(&label) => Err(Error::LabelOutOfRange { label, bound: k }),
        None => Ok(()),
    }
}

/// Best one-to-one relabelling of `pred` onto `truth`, both in `0..k`.
pub fn hungarian_acc(pred: &[usize], truth: &[usize], k: usize) -> Result<AccReport> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!("{} labels", truth.len()), format!("{}", pred.len())));
    }
    check_labels(pred, k)?;
    check_labels(truth, k)?;
    let mut contingency = vec![vec![0.0f64; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        contingency[p][t] += 1.0;
    }
    let matching = max_weight_matching(&contingency);
    let correct: f64 = (0..k).map(|c| contingency[c][matching[c]]).sum();
    let mapped: Vec<usize> = pred.iter().map(|&p| matching[p]).collect();
    let n = pred.len();
    Ok(AccReport {
        acc: if n == 0 { 0.0 } else { correct / n as f64 },
        matching,
        confusion: confusion(&mapped, truth, k),
        n,
    })
}

/// Counts with row = true class, column = predicted class.
pub fn confusion(pred: &[usize], truth: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        m[t][p] += 1;
    }
    m
}

pub fn confusion_csv(m: &[Vec<usize>]) -> String {
    let mut out = String::from("true\\pred");
    for j in 0..m.first().map_or(0, Vec::len) {
        out.push_str(&format!(",{j}"));
    }
    out.push('\n');
    for (i, row) in m.iter().enumerate() {
        out.push_str(&i.to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn relabelling() {
        let r = hungarian_acc(&[0, 0, 1, 1], &[1, 1, 0, 0], 2).unwrap();
        assert_eq!(r.acc, 1.0);
        assert_eq!(r.matching, vec![1, 0]);
        let same = hungarian_acc(&[2, 0, 1, 2], &[2, 0, 1, 2], 3).unwrap();
        assert_eq!(same.acc, 1.0);
        assert_eq!(same.matching, vec![0, 1, 2]);
        assert_eq!(same.confusion, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(hungarian_acc(&[0, 3], &[0, 1], 3), Err(Error::LabelOutOfRange { label: 3, bound: 3 })));
    }

    #[test]
    fn matches_factorial_brute_force() {
        let mut rng = Rng::new(0, 0);
        for _ in 0..200 {
            let k = 1 + rng.below(6);
            let n = 1 + rng.below(40);
            let pred: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
            let truth: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
            let best = permutations(k)
                .iter()
                .map(|perm| pred.iter().zip(&truth).filter(|(p, t)| perm[**p] == **t).count())
                .max()
                .unwrap();
            let r = hungarian_acc(&pred, &truth, k).unwrap();
            assert_eq!(r.acc, best as f64 / n as f64);
            let identity = pred.iter().zip(&truth).filter(|(p, t)| p == t).count();
            assert!(r.acc >= identity as f64 / n as f64);
        }
    }

    #[test]
    fn confusion_examples() {
        let truth = [0, 0, 1, 2, 2];
        assert_eq!(confusion(&truth, &truth, 3), vec![vec![2, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
        let m = confusion(&[1; 5], &truth, 3);
        assert_eq!(m, vec![vec![0, 2, 0], vec![0, 1, 0], vec![0, 2, 0]]);
        assert_eq!(m.iter().flatten().sum::<usize>(), 5);
        assert_eq!(confusion_csv(&m[..1]), "true\\pred,0,1,2\n0,0,2,0\n");
    }
}
