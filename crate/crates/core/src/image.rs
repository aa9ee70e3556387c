//! Dense row-major n-dimensional `f64` images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NdImage {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Advances `coords` through `shape` in row-major order. Returns false once
/// every position has been visited.
pub(crate) fn next_coords(coords: &mut [usize], shape: &[usize]) -> bool {
    for axis in (0..shape.len()).rev() {
        coords[axis] += 1;
        if coords[axis] < shape[axis] {
            return true;
        }
        coords[axis] = 0;
    }
    false
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for axis in (0..shape.len().saturating_sub(1)).rev() {
        strides[axis] = strides[axis + 1] * shape[axis + 1];
    }
    strides
}

impl NdImage {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::domain(format!("invalid image shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::domain(format!(
                "image of shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape, vec![value; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
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

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn offset(&self, coords: &[usize]) -> Option<usize> {
        if coords.len() != self.shape.len() || coords.iter().zip(&self.shape).any(|(c, s)| c >= s) {
            return None;
        }
        Some(coords.iter().zip(&self.shape).fold(0, |acc, (&c, &s)| acc * s + c))
    }

    pub fn get(&self, coords: &[usize]) -> Option<f64> {
        self.offset(coords).map(|i| self.data[i])
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copies the block starting at `origin` with extent `block`.
    pub fn extract_block(&self, origin: &[usize], block: &[usize]) -> Result<NdImage> {
        let d = self.dim();
        if origin.len() != d || block.len() != d {
            return Err(Error::domain("block rank does not match image rank"));
        }
        if (0..d).any(|a| block[a] == 0 || origin[a] + block[a] > self.shape[a]) {
            return Err(Error::domain(format!(
                "block {block:?} at {origin:?} exceeds image shape {:?}",
                self.shape
            )));
        }
        let strides = self.strides();
        let row = block[d - 1];
        let mut out = Vec::with_capacity(block.iter().product());
        // Iterate over all rows (every axis but the last).
        let outer = &block[..d - 1];
        let mut coords = vec![0usize; d - 1];
        loop {
            let start: usize = (0..d - 1)
                .map(|a| (origin[a] + coords[a]) * strides[a])
                .sum::<usize>()
                + origin[d - 1];
            out.extend_from_slice(&self.data[start..start + row]);
            if outer.is_empty() || !next_coords(&mut coords, outer) {
                break;
            }
        }
        NdImage::new(block.to_vec(), out)
    }

    /// Halves every axis by averaging each `2^dim` block.
    pub fn mean_pool2(&self) -> Result<NdImage> {
        if let Some(axis) = self.shape.iter().position(|s| s % 2 != 0) {
            return Err(Error::domain(format!(
                "axis {axis} has odd extent {}; cannot pool",
                self.shape[axis]
            )));
        }
        let d = self.dim();
        let half: Vec<usize> = self.shape.iter().map(|s| s / 2).collect();
        let out_strides = strides_of(&half);
        let mut out = vec![0.0; half.iter().product()];
        let mut coords = vec![0usize; d];
        for &v in &self.data {
            let o: usize = (0..d).map(|a| (coords[a] / 2) * out_strides[a]).sum();
            out[o] += v;
            next_coords(&mut coords, &self.shape);
        }
        let scale = 0.5f64.powi(d as i32);
        out.iter_mut().for_each(|v| *v *= scale);
        NdImage::new(half, out)
    }
}
