use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Dense row-major 2-D array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T = f32> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Output rows handed to one parallel task by the matmul kernels.
const ROW_BLOCK: usize = 8;

impl<T: Real> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                format!("{} entries for {rows}x{cols}", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(
                    format!("row {i} of width {cols}"),
                    format!("width {}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        // chunks_exact(0) panics; a zero-width matrix still has `rows` empty rows
        let cols = self.cols;
        (0..self.rows).map(move |i| &self.data[i * cols..(i + 1) * cols])
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::lift(v.widen())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.widen().abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.widen() * v.widen())
            .sum::<f64>()
            .sqrt()
    }

    /// Copies rows `range` into a new matrix.
    pub fn slice_rows(&self, range: Range<usize>) -> Self {
        Self {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks matrices of equal width on top of each other.
    pub fn vstack(parts: &[&Matrix<T>]) -> Result<Self> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::shape(format!("width {cols}"), p.shape_str()));
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Self { rows, cols, data })
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: T, other: &Matrix<T>) -> Result<()> {
        self.check_same(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn add_row_vector(&mut self, v: &[T]) -> Result<()> {
        if v.len() != self.cols {
            return Err(Error::shape(
                format!("vector of length {}", self.cols),
                format!("length {}", v.len()),
            ));
        }
        for r in self.data.chunks_exact_mut(self.cols.max(1)) {
            for (a, &b) in r.iter_mut().zip(v) {
                *a += b;
            }
        }
        Ok(())
    }

    /// Column sums accumulated in 64-bit.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.cols];
        for r in self.iter_rows() {
            for (a, &v) in acc.iter_mut().zip(r) {
                *a += v.widen();
            }
        }
        acc
    }

    pub fn check_same(&self, other: &Matrix<T>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(self.shape_str(), other.shape_str()));
        }
        Ok(())
    }

    /// `self · other` for `self` n×k and `other` k×m.
    pub fn matmul(&self, other: &Matrix<T>) -> Result<Self> {
        self.matmul_with(Exec::default(), other)
    }

    pub fn matmul_with(&self, exec: Exec, other: &Matrix<T>) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::shape(
                format!("{}x_ · {}x_", self.rows, self.cols),
                format!("{} · {}", self.shape_str(), other.shape_str()),
            ));
        }
        let (k, m) = (self.cols, other.cols);
        let mut out = Self::zeros(self.rows, m);
        if m == 0 {
            return Ok(out);
        }
        let a = &self.data;
        let b = &other.data;
        par::for_each_chunk_mut(exec, &mut out.data, ROW_BLOCK * m, |blk, chunk| {
            for (r, out_row) in chunk.chunks_exact_mut(m).enumerate() {
                let i = blk * ROW_BLOCK + r;
                let a_row = &a[i * k..(i + 1) * k];
                for (kk, &s) in a_row.iter().enumerate() {
                    if s == T::zero() {
                        continue;
                    }
                    let b_row = &b[kk * m..(kk + 1) * m];
                    for (o, &bv) in out_row.iter_mut().zip(b_row) {
                        *o += s * bv;
                    }
                }
            }
        });
        Ok(out)
    }

    /// `self · otherᵀ` for `self` n×k and `other` m×k.
    pub fn matmul_nt(&self, other: &Matrix<T>) -> Result<Self> {
        self.matmul_nt_with(Exec::default(), other)
    }

    pub fn matmul_nt_with(&self, exec: Exec, other: &Matrix<T>) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::shape(
                format!("inner width {}", self.cols),
                format!("{} · {}ᵀ", self.shape_str(), other.shape_str()),
            ));
        }
        self.matmul_with(exec, &other.transpose())
    }

    /// `selfᵀ · other` for `self` n×p and `other` n×q.
    pub fn matmul_tn(&self, other: &Matrix<T>) -> Result<Self> {
        self.matmul_tn_with(Exec::default(), other)
    }

    pub fn matmul_tn_with(&self, exec: Exec, other: &Matrix<T>) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::shape(
                format!("shared row count {}", self.rows),
                format!("{}ᵀ · {}", self.shape_str(), other.shape_str()),
            ));
        }
        self.transpose().matmul_with(exec, other)
    }
}
