//! Teacher–student self-distillation over view sets (instance discrimination).
//!
//! The teacher sees only the two global views; the student sees every view.
//! For each sample the loss sums the cross-entropy `H(P_t(x), P_s(x'))` over
//! every global view `x` and every other view `x' ≠ x`, averaged over the batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Params;
use crate::numerics::{softmax, Matrix, Real, Rng};

/// Floor applied inside `log` so saturated teachers stay finite.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Teacher,
    Student,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub out_dim: usize,
    pub student_temp: f64,
    pub teacher_temp: f64,
    pub center_momentum: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            out_dim: 256,
            student_temp: 0.1,
            teacher_temp: 0.04,
            center_momentum: 0.9,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.out_dim == 0 {
            return Err(Error::config("head.out_dim", "must be positive"));
        }
        if !(self.teacher_temp > 0.0 && self.teacher_temp < self.student_temp) {
            return Err(Error::config(
                "head.teacher_temp",
                "need 0 < teacher_temp < student_temp",
            ));
        }
        if !(0.0..1.0).contains(&self.center_momentum) {
            return Err(Error::config("head.center_momentum", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Linear projection head with a running centre for the teacher outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillHead<T = f32> {
    /// `out_dim × D`.
    pub projection: Matrix<T>,
    pub config: HeadConfig,
    pub center: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct HeadOutput<T = f32> {
    pub logits: Matrix<T>,
    pub probs: Matrix<T>,
}

#[derive(Clone, Debug)]
pub struct InstanceLoss<T = f32> {
    pub value: f64,
    /// Gradient per student view, same order as the input.
    pub d_student_logits: Vec<Matrix<T>>,
}

impl<T: Real> DistillHead<T> {
    pub fn new(embed_dim: usize, config: HeadConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let bound = 1.0 / (embed_dim as f64).sqrt();
        Ok(Self {
            projection: Matrix::from_fn(config.out_dim, embed_dim, |_, _| {
                T::lift(rng.uniform_range(-bound, bound))
            }),
            config,
            center: vec![T::zero(); config.out_dim],
        })
    }

    pub fn out_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn forward(&self, features: &Matrix<T>, role: Role) -> Result<HeadOutput<T>> {
        if features.cols() != self.projection.cols() {
            return Err(Error::shape(
                format!("feature width {}", self.projection.cols()),
                features.shape_str(),
            ));
        }
        let logits = features.matmul_nt(&self.projection)?;
        let mut probs = logits.clone();
        for i in 0..logits.rows() {
            let p = match role {
                Role::Student => softmax(logits.row(i), self.config.student_temp),
                Role::Teacher => {
                    let centered: Vec<T> = logits
                        .row(i)
                        .iter()
                        .zip(&self.center)
                        .map(|(&z, &c)| z - c)
                        .collect();
                    softmax(&centered, self.config.teacher_temp)
                }
            };
            probs.row_mut(i).copy_from_slice(&p);
        }
        Ok(HeadOutput { logits, probs })
    }

    /// Returns `(d_features, d_projection)` for upstream `d_logits`.
    pub fn backward(
        &self,
        features: &Matrix<T>,
        d_logits: &Matrix<T>,
    ) -> Result<(Matrix<T>, Matrix<T>)> {
        let d_features = d_logits.matmul(&self.projection)?;
        let d_projection = d_logits.matmul_tn(features)?;
        Ok((d_features, d_projection))
    }

    /// `center ← m·center + (1−m)·mean(teacher logits)`.
    pub fn update_center(&mut self, teacher_logits: &Matrix<T>) -> Result<()> {
        if teacher_logits.rows() == 0 {
            return Err(Error::DegenerateInput("empty teacher batch".into()));
        }
        if teacher_logits.cols() != self.center.len() {
            return Err(Error::shape(
                format!("width {}", self.center.len()),
                teacher_logits.shape_str(),
            ));
        }
        let n = teacher_logits.rows() as f64;
        let m = self.config.center_momentum;
        for (c, s) in self.center.iter_mut().zip(teacher_logits.column_sums()) {
            *c = T::lift(m * c.widen() + (1.0 - m) * s / n);
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> DistillHead<U> {
        DistillHead {
            projection: self.projection.cast(),
            config: self.config,
            center: self.center.iter().map(|c| U::lift(c.widen())).collect(),
        }
    }
}

impl<T: Real> Params<T> for DistillHead<T> {
    fn param_slices(&self) -> Vec<&[T]> {
        vec![self.projection.as_slice()]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![self.projection.as_mut_slice()]
    }
}

/// Cross-entropy of teacher rows against student rows over all
/// (global, other-view) pairs, divided by the batch size.
///
/// `teacher` holds the two global-view probability matrices; `student` holds
/// the student probabilities for every view, globals first. Gradients are
/// with respect to the student logits (pre-temperature); the teacher is a
/// constant.
pub fn instance_loss<T: Real>(
    teacher: &[Matrix<T>],
    student: &[Matrix<T>],
    student_temp: f64,
) -> Result<InstanceLoss<T>> {
    if teacher.len() != 2 {
        return Err(Error::ViewMismatch(format!(
            "teacher needs exactly 2 global views, got {}",
            teacher.len()
        )));
    }
    if student.len() < 2 {
        return Err(Error::ViewMismatch(format!(
            "student needs the 2 global views plus locals, got {}",
            student.len()
        )));
    }
    let shape = teacher[0].shape();
    if shape.0 == 0 {
        return Err(Error::DegenerateInput("empty batch".into()));
    }
    if teacher
        .iter()
        .chain(student.iter())
        .any(|m| m.shape() != shape)
    {
        return Err(Error::ViewMismatch(
            "all views must share the batch size and output width".into(),
        ));
    }
    let (n, k) = shape;
    let inv_n = 1.0 / n as f64;
    let mut value = 0.0f64;
    let mut grads: Vec<Matrix<T>> = student.iter().map(|_| Matrix::zeros(n, k)).collect();

    for (t, tp) in teacher.iter().enumerate() {
        for (v, sp) in student.iter().enumerate() {
            if v == t {
                continue;
            }
            let g = &mut grads[v];
            for i in 0..n {
                let a = tp.row(i);
                let s = sp.row(i);
                let mut active_mass = 0.0f64;
                for (&ak, &sk) in a.iter().zip(s) {
                    let sk = sk.widen();
                    if sk >= LOG_FLOOR {
                        active_mass += ak.widen();
                    }
                    value -= ak.widen() * sk.max(LOG_FLOOR).ln() * inv_n;
                }
                let gi = g.row_mut(i);
                for j in 0..k {
                    let sj = s[j].widen();
                    let aj = if sj >= LOG_FLOOR { a[j].widen() } else { 0.0 };
                    let d = (sj * active_mass - aj) * inv_n / student_temp;
                    gi[j] += T::lift(d);
                }
            }
        }
    }
    Ok(InstanceLoss {
        value,
        d_student_logits: grads,
    })
}
