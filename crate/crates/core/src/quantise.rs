//! Per-kernel thresholds and binarisation of kernel norms.
//!
//! A kernel is active on a sample when its activation norm strictly exceeds the
//! kernel's threshold, the mean norm over the training split. Output neurons are
//! treated as `1×1` kernels whose truth is the teacher's one-hot prediction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, OUTPUT_LAYER};
use crate::error::{Error, Result};
use crate::matrix::{BitMatrix, NormMatrix};
use crate::scalar::Scalar;

/// One threshold per kernel of a layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdVector<T>(Vec<T>);

impl<T: Scalar> ThresholdVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidParam(
                "thresholds must be finite and non-negative".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, kernel: usize) -> T {
        self.0[kernel]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

/// Sum of absolute values of an activation map (any shape, flattened).
pub fn l1_norm<T: Scalar>(activation: &[T]) -> Result<T> {
    let mut acc = T::zero();
    for &v in activation {
        if !v.is_finite() {
            return Err(Error::NonFinite);
        }
        acc = acc + v.abs();
    }
    Ok(acc)
}

/// Mean training norm of every kernel.
///
/// Sums are accumulated in `f64`, index-ascending, so the result does not depend
/// on the scalar type's precision or on scheduling.
pub fn compute_thresholds<T: Scalar>(
    norms: &NormMatrix<T>,
    train_idx: &[usize],
) -> Result<ThresholdVector<T>> {
    if train_idx.is_empty() {
        return Err(Error::EmptyTrainingSplit);
    }
    if let Some(&bad) = train_idx.iter().find(|&&i| i >= norms.n_samples()) {
        return Err(Error::OutOfRange {
            index: bad,
            limit: norms.n_samples(),
        });
    }
    let mut sums = vec![0f64; norms.n_kernels()];
    for &i in train_idx {
        for (s, v) in sums.iter_mut().zip(norms.row(i)) {
            *s += v.to_f64_lossless();
        }
    }
    let n = train_idx.len() as f64;
    ThresholdVector::new(
        sums.into_iter()
            .map(|s| T::from_f64_rounded(s / n))
            .collect(),
    )
}

/// Binarises one kernel norm: `1` iff `norm > threshold`.
#[inline]
pub fn quantise_value<T: Scalar>(norm: T, threshold: T) -> i8 {
    if norm > threshold {
        1
    } else {
        -1
    }
}

pub fn quantise<T: Scalar>(norms: &NormMatrix<T>, thresholds: &ThresholdVector<T>) -> Result<BitMatrix> {
    if norms.n_kernels() != thresholds.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} kernels but {} thresholds",
            norms.n_kernels(),
            thresholds.len()
        )));
    }
    let data = (0..norms.n_samples())
        .flat_map(|i| {
            norms
                .row(i)
                .iter()
                .zip(thresholds.as_slice())
                .map(|(&v, &t)| quantise_value(v, t))
        })
        .collect();
    BitMatrix::new(norms.n_samples(), norms.n_kernels(), data)
}

/// Binarises a single sample's norms.
pub fn quantise_row<T: Scalar>(row: &[T], thresholds: &ThresholdVector<T>) -> Result<Vec<i8>> {
    if row.len() != thresholds.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} norms but {} thresholds",
            row.len(),
            thresholds.len()
        )));
    }
    Ok(row
        .iter()
        .zip(thresholds.as_slice())
        .map(|(&v, &t)| quantise_value(v, t))
        .collect())
}

/// One-hot truth matrix of the teacher's predictions.
pub fn output_bits(predictions: &[usize], n_classes: usize) -> Result<BitMatrix> {
    let mut data = vec![-1i8; predictions.len() * n_classes];
    for (i, &c) in predictions.iter().enumerate() {
        if c >= n_classes {
            return Err(Error::OutOfRange {
                index: c,
                limit: n_classes,
            });
        }
        data[i * n_classes + c] = 1;
    }
    BitMatrix::new(predictions.len(), n_classes, data)
}

/// Bits (over all samples) and training thresholds for a set of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Binarised {
    pub bits: BTreeMap<String, BitMatrix>,
    /// Absent for the output layer.
    pub thresholds: BTreeMap<String, ThresholdVector<f32>>,
}

/// Binarises the named layers. Convolutional layers use thresholds from the
/// training split applied to every sample; `output` uses the teacher's predictions.
pub fn binarise_dataset(d: &Dataset, layers: &[&str]) -> Result<Binarised> {
    let mut out = Binarised {
        bits: BTreeMap::new(),
        thresholds: BTreeMap::new(),
    };
    for &name in layers {
        if out.bits.contains_key(name) {
            continue;
        }
        if name == OUTPUT_LAYER {
            out.bits
                .insert(name.to_string(), output_bits(d.teacher(), d.n_classes())?);
            continue;
        }
        let norms = d.norms(name)?;
        let th = compute_thresholds(norms, d.train()?)?;
        out.bits.insert(name.to_string(), quantise(norms, &th)?);
        out.thresholds.insert(name.to_string(), th);
    }
    Ok(out)
}
