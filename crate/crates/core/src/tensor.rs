//! Dense row-major `f64` tensors and the handful of operations the lab needs.
//!
//! Tensors are plain owned buffers: no views, no strides, no broadcasting
//! beyond the row-wise bias add that the affine layer uses. Everything is
//! 64-bit so oracle comparisons can run at 1e-12 tolerances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major tensor of `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Population statistics over all elements of a tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub variance: f64,
    /// Mean of squared elements; equals `variance + mean^2`.
    pub energy: f64,
}

impl Tensor {
    /// Builds a tensor from a shape and a flat row-major buffer. A zero
    /// axis is allowed (an empty dataset split is a real case); element-wise
    /// reductions reject empty tensors instead.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::dim(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    /// 2-D convenience constructor from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::arg("from_rows: no rows"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("from_rows: ragged rows"));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Row count of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count of a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape[self.shape.len() - 1]
    }

    fn require_2d(&self, op: &str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(Error::dim(format!("{op}: expected 2-D, got {:?}", self.shape)));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.shape[1] + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.shape[self.shape.len() - 1];
        &self.data[i * c..(i + 1) * c]
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    /// Standard matrix product `self[N×K] · other[K×M]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (n, k) = self.require_2d("matmul lhs")?;
        let (k2, m) = other.require_2d("matmul rhs")?;
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul: inner dimensions disagree, lhs {:?} vs rhs {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; n * m];
        // ikj order keeps the rhs row contiguous in the inner loop.
        for i in 0..n {
            for kk in 0..k {
                let a = self.data[i * k + kk];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[kk * m..(kk + 1) * m];
                let orow = &mut out[i * m..(i + 1) * m];
                for j in 0..m {
                    orow[j] += a * brow[j];
                }
            }
        }
        Tensor::new(vec![n, m], out)
    }

    /// `self[N×K] · otherᵀ` where `other` is `[M×K]`; both operands are
    /// walked row-wise, which is the layout the affine layer stores.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        let (n, k) = self.require_2d("matmul_nt lhs")?;
        let (m, k2) = other.require_2d("matmul_nt rhs")?;
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul_nt: inner dimensions disagree, lhs {:?} vs rhs(T) {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let arow = &self.data[i * k..(i + 1) * k];
            for j in 0..m {
                let brow = &other.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for kk in 0..k {
                    acc += arow[kk] * brow[kk];
                }
                out[i * m + j] = acc;
            }
        }
        Tensor::new(vec![n, m], out)
    }

    /// `selfᵀ · other` where `self` is `[N×M]` and `other` is `[N×K]`.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        let (n, m) = self.require_2d("matmul_tn lhs")?;
        let (n2, k) = other.require_2d("matmul_tn rhs")?;
        if n != n2 {
            return Err(Error::dim(format!(
                "matmul_tn: leading dimensions disagree, lhs(T) {:?} vs rhs {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; m * k];
        for i in 0..n {
            let arow = &self.data[i * m..(i + 1) * m];
            let brow = &other.data[i * k..(i + 1) * k];
            for j in 0..m {
                let a = arow[j];
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out[j * k..(j + 1) * k];
                for kk in 0..k {
                    orow[kk] += a * brow[kk];
                }
            }
        }
        Tensor::new(vec![m, k], out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (n, m) = self.require_2d("transpose")?;
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Tensor::new(vec![m, n], out)
    }

    fn zip_with(&self, other: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "{op}: shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Tensor::new(self.shape.clone(), data)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    /// Adds a `[1×M]` row vector to every row of a `[N×M]` tensor.
    pub fn add_row_broadcast(&self, row: &Tensor) -> Result<Tensor> {
        let (n, m) = self.require_2d("add_row_broadcast lhs")?;
        if row.len() != m {
            return Err(Error::dim(format!(
                "add_row_broadcast: row of {} elements against {} columns",
                row.len(),
                m
            )));
        }
        let mut data = self.data.clone();
        for i in 0..n {
            for j in 0..m {
                data[i * m + j] += row.data[j];
            }
        }
        Tensor::new(vec![n, m], data)
    }

    /// Sums each column of a 2-D tensor into a `[1×M]` row.
    pub fn column_sums(&self) -> Result<Tensor> {
        let (n, m) = self.require_2d("column_sums")?;
        let mut out = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                out[j] += self.data[i * m + j];
            }
        }
        Tensor::new(vec![1, m], out)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Population mean, variance, and energy (mean of squares) over all
    /// elements. Mean and variance run through Welford's update; energy is
    /// accumulated directly so `energy = variance + mean²` is a genuine
    /// cross-check rather than a definition.
    pub fn reduce_stats(&self) -> Result<Stats> {
        if self.data.is_empty() {
            return Err(Error::arg("reduce_stats: empty tensor"));
        }
        let mut mean = 0.0;
        let mut m2 = 0.0;
        let mut sumsq = 0.0;
        for (idx, &x) in self.data.iter().enumerate() {
            let count = (idx + 1) as f64;
            let d = x - mean;
            mean += d / count;
            m2 += d * (x - mean);
            sumsq += x * x;
        }
        let n = self.data.len() as f64;
        Ok(Stats {
            mean,
            variance: m2 / n,
            energy: sumsq / n,
        })
    }
}
