//! Dense sample-major matrices for kernel norms and binarised truth values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-layer matrix of kernel activation norms, `n_samples × n_kernels`, sample-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormMatrix<T> {
    n_samples: usize,
    n_kernels: usize,
    data: Vec<T>,
}

impl<T: Scalar> NormMatrix<T> {
    /// Builds a matrix, rejecting negative or non-finite entries.
    pub fn new(n_samples: usize, n_kernels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n_samples * n_kernels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n_samples}x{n_kernels} norm matrix",
                data.len()
            )));
        }
        for (pos, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteNorm {
                    sample: pos / n_kernels.max(1),
                    kernel: pos % n_kernels.max(1),
                });
            }
            if *v < T::zero() {
                return Err(Error::InvalidDataset(format!(
                    "negative norm at sample {}, kernel {}",
                    pos / n_kernels,
                    pos % n_kernels
                )));
            }
        }
        Ok(Self {
            n_samples,
            n_kernels,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n_kernels = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_kernels) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), n_kernels, rows.concat())
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_kernels(&self) -> usize {
        self.n_kernels
    }

    #[inline]
    pub fn get(&self, sample: usize, kernel: usize) -> T {
        self.data[sample * self.n_kernels + kernel]
    }

    pub fn row(&self, sample: usize) -> &[T] {
        &self.data[sample * self.n_kernels..(sample + 1) * self.n_kernels]
    }

    pub fn column(&self, kernel: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.n_samples).map(move |i| self.get(i, kernel))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Keeps only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n_kernels);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Self {
            n_samples: rows.len(),
            n_kernels: self.n_kernels,
            data,
        }
    }
}

/// Binarised kernel truth values in `{1, -1}`, `n_samples × n_kernels`, sample-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitMatrix {
    n_samples: usize,
    n_kernels: usize,
    data: Vec<i8>,
}

impl BitMatrix {
    /// Builds a matrix from `±1` entries.
    pub fn new(n_samples: usize, n_kernels: usize, data: Vec<i8>) -> Result<Self> {
        if data.len() != n_samples * n_kernels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n_samples}x{n_kernels} bit matrix",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&b| b != 1 && b != -1) {
            return Err(Error::InvalidDataset(format!("bit value {bad} is not 1 or -1")));
        }
        Ok(Self {
            n_samples,
            n_kernels,
            data,
        })
    }

    pub fn from_bools(n_samples: usize, n_kernels: usize, bits: &[bool]) -> Result<Self> {
        Self::new(
            n_samples,
            n_kernels,
            bits.iter().map(|&b| if b { 1 } else { -1 }).collect(),
        )
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_kernels(&self) -> usize {
        self.n_kernels
    }

    #[inline]
    pub fn get(&self, sample: usize, kernel: usize) -> i8 {
        self.data[sample * self.n_kernels + kernel]
    }

    #[inline]
    pub fn is_true(&self, sample: usize, kernel: usize) -> bool {
        self.get(sample, kernel) == 1
    }

    pub fn row(&self, sample: usize) -> &[i8] {
        &self.data[sample * self.n_kernels..(sample + 1) * self.n_kernels]
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.data
    }
}
