//! Dense row-major `f64` tensor.
//!
//! Image tensors are laid out `[H, W, C]` with channels innermost, so the
//! per-pixel channel vector is a contiguous slice.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidShape("shape has no dimensions".into()));
    }
    if let Some(pos) = shape.iter().position(|&d| d == 0) {
        return Err(Error::InvalidShape(format!(
            "dimension {pos} of {shape:?} is zero"
        )));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidShape(format!("{shape:?} overflows usize")))
}

impl Tensor {
    /// Tensor of the given shape with every element set to `fill`.
    pub fn new(shape: &[usize], fill: f64) -> Result<Self> {
        let len = checked_len(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![fill; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::new(shape, 0.0)
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = checked_len(shape)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "{} values cannot fill shape {shape:?} ({len} elements)",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Zero tensor with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Same values under a new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    /// Flat row-major offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        offset_of(&self.shape, index)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        let o = self.offset(index)?;
        self.data[o] = value;
        Ok(())
    }

    /// Element-wise application of `f`. Fails if `f` yields a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(offset, &x)| {
                let y = f(x);
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(Error::NumericRange { offset })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Element-wise combination of two equally shaped tensors.
    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot combine {:?} with {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .enumerate()
            .map(|(offset, (&a, &b))| {
                let y = f(a, b);
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(Error::NumericRange { offset })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// `self += alpha * other`, shapes must agree.
    pub fn add_scaled(&mut self, other: &Tensor, alpha: f64) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot accumulate {:?} into {:?}",
                other.shape, self.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Spatial dims and channels of an `[H, W, C]` tensor.
    pub fn hwc(&self) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::Shape(format!(
                "expected [H, W, C] tensor, got {:?}",
                self.shape
            ))),
        }
    }

    /// Spatial dims of an `[H, W]` tensor.
    pub fn hw(&self) -> Result<(usize, usize)> {
        match *self.shape.as_slice() {
            [h, w] => Ok((h, w)),
            _ => Err(Error::Shape(format!(
                "expected [H, W] tensor, got {:?}",
                self.shape
            ))),
        }
    }
}

/// Row-major flat offset of `index` within `shape`.
pub fn offset_of(shape: &[usize], index: &[usize]) -> Result<usize> {
    if index.len() != shape.len() {
        return Err(Error::Shape(format!(
            "index {index:?} has wrong rank for shape {shape:?}"
        )));
    }
    let mut offset = 0;
    for (&i, &d) in index.iter().zip(shape) {
        if i >= d {
            return Err(Error::Shape(format!(
                "index {index:?} out of bounds for shape {shape:?}"
            )));
        }
        offset = offset * d + i;
    }
    Ok(offset)
}

/// Inverse of [`offset_of`].
pub fn index_of(shape: &[usize], mut offset: usize) -> Result<Vec<usize>> {
    let len = checked_len(shape)?;
    if offset >= len {
        return Err(Error::Shape(format!(
            "offset {offset} out of bounds for shape {shape:?}"
        )));
    }
    let mut index = vec![0; shape.len()];
    for (slot, &d) in index.iter_mut().zip(shape).rev() {
        *slot = offset % d;
        offset /= d;
    }
    Ok(index)
}
