use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::numerics::{Matrix, Real};

use super::hungarian::{hungarian_acc, AccReport};

/// Anything producing `n × C` class scores.
pub trait Predictor {
    fn logits(&self, x: &Matrix<f32>) -> Result<Matrix<f32>>;
}

impl Predictor for Network<f32> {
    fn logits(&self, x: &Matrix<f32>) -> Result<Matrix<f32>> {
        Ok(self.forward(x)?.logits)
    }
}

/// Row argmax over columns `cols`, reported relative to `cols.start`; ties
/// go to the lowest column.
pub fn argmax_rows<T: Real>(m: &Matrix<T>, cols: std::ops::Range<usize>) -> Vec<usize> {
    m.iter_rows()
        .map(|r| {
            let mut best = cols.start;
            for j in cols.clone() {
                if r[j] > r[best] {
                    best = j;
                }
            }
            best - cols.start
        })
        .collect()
}

/// Evaluation data with global class ids (`0..n_base` base, then novel).
#[derive(Clone, Copy, Debug)]
pub struct EvalSet<'a> {
    pub unlabelled_x: &'a Matrix<f32>,
    pub unlabelled_y: &'a [usize],
    pub test_x: &'a Matrix<f32>,
    pub test_y: &'a [usize],
    pub n_base: usize,
    pub n_novel: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAcc {
    pub novel_train: f64,
    pub test_old: f64,
    pub test_new: f64,
    pub test_all: f64,
    pub novel_train_report: AccReport,
    pub test_new_report: AccReport,
}

/// Novel-train accuracy uses the novel head alone; the test metrics use the
/// full head. Old test samples count by identity, new ones through a matching
/// fitted on the novel test block; a novel sample predicted as a base class
/// is wrong.
pub fn eval_splits<P: Predictor + ?Sized>(model: &P, set: &EvalSet<'_>) -> Result<SplitAcc> {
    let (nb, nn) = (set.n_base, set.n_novel);
    let c = nb + nn;
    let to_novel = |y: &[usize]| -> Result<Vec<usize>> {
        y.iter()
            .map(|&l| {
                if (nb..c).contains(&l) {
                    Ok(l - nb)
                } else {
                    Err(Error::LabelOutOfRange { label: l, bound: c })
                }
            })
            .collect()
    };

    let lu = model.logits(set.unlabelled_x)?;
    if lu.cols() != c {
        return Err(Error::shape(format!("{c} logits"), lu.shape_str()));
    }
    let novel_train_report = hungarian_acc(&argmax_rows(&lu, nb..c), &to_novel(set.unlabelled_y)?, nn)?;

    let lt = model.logits(set.test_x)?;
    let pred = argmax_rows(&lt, 0..c);
    let (mut old_total, mut old_correct) = (0usize, 0usize);
    let (mut new_pred, mut new_truth) = (Vec::new(), Vec::new());
    let mut new_total = 0usize;
    for (&p, &y) in pred.iter().zip(set.test_y) {
        if y >= c {
            return Err(Error::LabelOutOfRange { label: y, bound: c });
        }
        if y < nb {
            old_total += 1;
            old_correct += usize::from(p == y);
        } else {
            new_total += 1;
            if p >= nb {
                new_pred.push(p - nb);
                new_truth.push(y - nb);
            }
        }
    }
    let test_new_report = hungarian_acc(&new_pred, &new_truth, nn)?;
    let new_correct = (test_new_report.acc * new_pred.len() as f64).round() as usize;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(SplitAcc {
        novel_train: novel_train_report.acc,
        test_old: ratio(old_correct, old_total),
        test_new: ratio(new_correct, new_total),
        test_all: ratio(old_correct + new_correct, old_total + new_total),
        novel_train_report,
        test_new_report,
    })
}
