use super::{Matrix, Real};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Norms below this are treated as the zero vector.
pub const ZERO_NORM_THRESHOLD: f64 = 1e-12;

fn norm64<T: Real>(v: &[T]) -> f64 {
    v.iter().map(|x| x.widen() * x.widen()).sum::<f64>().sqrt()
}

pub fn l2_normalize<T: Real>(v: &[T]) -> Result<Vec<T>> {
    let n = norm64(v);
    if v.is_empty() || !(n >= ZERO_NORM_THRESHOLD) {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok(v.iter().map(|x| T::lift(x.widen() / n)).collect())
}

/// Row-wise [`l2_normalize`].
pub fn normalize_rows<T: Real>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let mut out = m.clone();
    for i in 0..m.rows() {
        let r = l2_normalize(m.row(i))?;
        out.row_mut(i).copy_from_slice(&r);
    }
    Ok(out)
}

/// Cosine similarity between every row of `a` and every row of `b`.
pub fn pairwise_cosine<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols() != b.cols() {
        return Err(Error::shape(
            format!("width {}", a.cols()),
            format!("width {}", b.cols()),
        ));
    }
    let na: Vec<f64> = a.iter_rows().map(norm64).collect();
    let nb: Vec<f64> = b.iter_rows().map(norm64).collect();
    if let Some(&n) = na.iter().chain(&nb).find(|&&n| !(n >= ZERO_NORM_THRESHOLD)) {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok(Matrix::from_fn(a.rows(), b.rows(), |i, j| {
        let dot: f64 = a
            .row(i)
            .iter()
            .zip(b.row(j))
            .map(|(x, y)| x.widen() * y.widen())
            .sum();
        T::lift((dot / (na[i] * nb[j])).clamp(-1.0, 1.0))
    }))
}

/// Squared Euclidean distances between rows of `a` and rows of `b`, in 64-bit.
pub fn pairwise_sq_dists<T: Real>(exec: Exec, a: &Matrix<T>, b: &Matrix<T>) -> Vec<f64> {
    let m = b.rows();
    let rows = par::map_range(exec, 0..a.rows(), |i| {
        let ai = a.row(i);
        (0..m)
            .map(|j| {
                ai.iter()
                    .zip(b.row(j))
                    .map(|(x, y)| {
                        let d = x.widen() - y.widen();
                        d * d
                    })
                    .sum::<f64>()
            })
            .collect::<Vec<_>>()
    });
    rows.into_iter().flatten().collect()
}

/// Tempered softmax with max-subtraction.
pub fn softmax<T: Real>(logits: &[T], temperature: f64) -> Vec<T> {
    assert!(temperature > 0.0, "softmax temperature must be positive");
    let max = logits
        .iter()
        .fold(f64::NEG_INFINITY, |m, v| m.max(v.widen()));
    let exps: Vec<f64> = logits
        .iter()
        .map(|v| ((v.widen() - max) / temperature).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| T::lift(e / sum)).collect()
}

/// Tempered log-softmax with max-subtraction.
pub fn log_softmax<T: Real>(logits: &[T], temperature: f64) -> Vec<f64> {
    let max = logits
        .iter()
        .fold(f64::NEG_INFINITY, |m, v| m.max(v.widen()));
    let shifted: Vec<f64> = logits
        .iter()
        .map(|v| (v.widen() - max) / temperature)
        .collect();
    let lse = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
    shifted.into_iter().map(|s| s - lse).collect()
}

pub fn softmax_rows<T: Real>(m: &Matrix<T>, temperature: f64) -> Matrix<T> {
    let mut out = m.clone();
    for i in 0..m.rows() {
        let p = softmax(m.row(i), temperature);
        out.row_mut(i).copy_from_slice(&p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(l2_normalize(&[3.0f32, 4.0]).unwrap(), vec![0.6, 0.8]);
        assert_eq!(l2_normalize(&[0.0f32, 0.0, 5.0]).unwrap(), vec![0.0, 0.0, 1.0]);
        assert!(matches!(
            l2_normalize(&[1e-13f64, 0.0]),
            Err(Error::ZeroVector { .. })
        ));
        assert!(l2_normalize::<f32>(&[]).is_err());
    }

    #[test]
    fn cosine_examples() {
        let e1 = Matrix::from_rows(&[[1.0f32, 0.0]]).unwrap();
        let e2 = Matrix::from_rows(&[[0.0f32, 1.0]]).unwrap();
        assert_eq!(pairwise_cosine(&e1, &e2).unwrap().as_slice(), &[0.0]);
        let pm = Matrix::from_rows(&[[1.0f32, 0.0], [-1.0, 0.0]]).unwrap();
        assert_eq!(pairwise_cosine(&e1, &pm).unwrap().as_slice(), &[1.0, -1.0]);
        let d = Matrix::from_rows(&[[1.0f32, 1.0]]).unwrap();
        let want = (1.0f64 / 2.0f64.sqrt()) as f32;
        assert_eq!(want, 0.70710677);
        assert_eq!(pairwise_cosine(&d, &e1).unwrap().as_slice(), &[want]);
        let z = Matrix::from_rows(&[[0.0f32, 0.0]]).unwrap();
        assert!(pairwise_cosine(&e1, &z).is_err());
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0f64, 0.0], 1.0), vec![0.5, 0.5]);
        let p = softmax(&[1000.0f32, 0.0], 1.0);
        assert!((p[0] - 1.0).abs() < 1e-6 && p[1].abs() < 1e-6);
        // reference: exp(2k)/Σ exp(2j) for k = 1, 2, 3
        let z: f64 = [2.0f64, 4.0, 6.0].iter().map(|v| v.exp()).sum();
        let want: Vec<f64> = [2.0f64, 4.0, 6.0].iter().map(|v| v.exp() / z).collect();
        let got = softmax(&[1.0f64, 2.0, 3.0], 0.5);
        for ((g, w), lit) in got.iter().zip(&want).zip([0.01588, 0.11731, 0.86681]) {
            assert!((g - w).abs() < 1e-12);
            assert!((g - lit).abs() < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn cosine_self_has_unit_diagonal(data in prop::collection::vec(0.1f64..3.0, 12), signs in prop::collection::vec(any::<bool>(), 12)) {
            let v: Vec<f64> = data.iter().zip(&signs).map(|(x, s)| if *s { *x } else { -*x }).collect();
            let a = Matrix::new(4, 3, v).unwrap();
            let c = pairwise_cosine(&a, &a).unwrap();
            for i in 0..4 {
                prop_assert!((c.get(i, i) - 1.0).abs() < 1e-5);
            }
            prop_assert!(c.as_slice().iter().all(|x| x.abs() <= 1.0));
        }

        #[test]
        fn softmax_shift_invariant(logits in prop::collection::vec(-50.0f64..50.0, 1..8), shift in -100.0f64..100.0, t in 0.05f64..5.0) {
            let a = softmax(&logits, t);
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let b = softmax(&shifted, t);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-6);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
