//! Flat 64-bit latent vectors with an explicit shape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A latent state, velocity, displacement or basis vector.
///
/// Construction through [`LatentVector::new`] checks that the shape matches
/// the data length and that every entry is finite. Arithmetic helpers return
/// a [`Error::ShapeMismatch`] when operands disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLatent")]
pub struct LatentVector {
    data: Vec<f64>,
    shape: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLatent {
    data: Vec<f64>,
    shape: Vec<usize>,
}

impl TryFrom<RawLatent> for LatentVector {
    type Error = Error;

    fn try_from(raw: RawLatent) -> Result<Self> {
        LatentVector::new(raw.data, raw.shape)
    }
}

impl LatentVector {
    pub fn new(data: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || expected != data.len() {
            return Err(Error::InvalidShape {
                shape,
                len: data.len(),
            });
        }
        let v = Self { data, shape };
        v.ensure_finite()?;
        Ok(v)
    }

    /// One-dimensional vector.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let len = data.len();
        Self::new(data, vec![len])
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(vec![0.0; len], shape.to_vec())
    }

    /// Same shape as `self`, new data. Caller guarantees the length.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            data,
            shape: self.shape.clone(),
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn check_shape(&self, other: &LatentVector) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                actual: other.shape.clone(),
            });
        }
        Ok(())
    }

    fn zip_map(&self, other: &LatentVector, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(self.with_data(data))
    }

    pub fn add(&self, other: &LatentVector) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &LatentVector) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.with_data(self.data.iter().map(|x| s * x).collect())
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &LatentVector) -> Result<Self> {
        self.zip_map(other, |a, b| a + alpha * b)
    }

    pub fn dot(&self, other: &LatentVector) -> Result<f64> {
        self.check_shape(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// Cosine similarity; `None` when either vector has zero norm.
    pub fn cosine(&self, other: &LatentVector) -> Result<Option<f64>> {
        let d = self.dot(other)?;
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            return Ok(None);
        }
        Ok(Some((d / denom).clamp(-1.0, 1.0)))
    }

    /// Elementwise mean of equally shaped vectors, accumulated in index order.
    pub fn mean(vectors: &[LatentVector]) -> Result<Self> {
        let first = vectors.first().ok_or(Error::Empty("mean of no vectors"))?;
        let mut acc = first.data.clone();
        for v in &vectors[1..] {
            first.check_shape(v)?;
            for (a, b) in acc.iter_mut().zip(&v.data) {
                *a += b;
            }
        }
        let n = vectors.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(first.with_data(acc))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
