//! Flat parameter vectors with named block layouts.
//!
//! Model parameters, client updates, and detector weights all travel as one
//! contiguous `Vec<f64>` plus a layout that names contiguous blocks (weight
//! matrices, biases). Aggregators work coordinate-wise on the flat vector;
//! anomaly probes slice out a single named block.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One named contiguous slice of a parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// An ordered set of non-overlapping blocks covering `0..total_len`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    blocks: Vec<Block>,
    total_len: usize,
}

impl ParamLayout {
    /// Build a layout from (name, len) pairs laid out back to back.
    pub fn new(blocks: &[(&str, usize)]) -> Self {
        let mut out = Vec::with_capacity(blocks.len());
        let mut offset = 0;
        for (name, len) in blocks {
            out.push(Block {
                name: (*name).to_string(),
                offset,
                len: *len,
            });
            offset += len;
        }
        Self {
            blocks: out,
            total_len: offset,
        }
    }

    pub fn total_len(&self) -> usize {
        self.total_len
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// A parameter vector: flat values plus a shared layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<ParamLayout>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let values = vec![0.0; layout.total_len()];
        Self { values, layout }
    }

    /// Wrap existing values; their length must match the layout.
    pub fn from_values(layout: Arc<ParamLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::ShapeMismatch {
                what: "param values",
                got: values.len(),
                expected: layout.total_len(),
            });
        }
        Ok(Self { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    /// True when both vectors share one block structure.
    pub fn same_layout(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub fn block(&self, name: &str) -> Result<&[f64]> {
        let b = self
            .layout
            .block(name)
            .ok_or_else(|| Error::UnknownBlock(name.to_string()))?;
        Ok(&self.values[b.offset..b.offset + b.len])
    }

    pub fn block_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let b = self
            .layout
            .block(name)
            .cloned()
            .ok_or_else(|| Error::UnknownBlock(name.to_string()))?;
        Ok(&mut self.values[b.offset..b.offset + b.len])
    }

    /// self <- self * a
    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    /// self <- self + a * x
    pub fn axpy(&mut self, a: f64, x: &ParamVector) {
        debug_assert!(self.same_layout(x));
        for (v, xv) in self.values.iter_mut().zip(&x.values) {
            *v += a * xv;
        }
    }

    pub fn l2_distance(&self, other: &ParamVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
