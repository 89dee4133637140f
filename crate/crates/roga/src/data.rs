//! Row-major feature matrices and per-domain minibatches.

use crate::error::{Error, Result};

/// Dense row-major matrix of example features (rows = examples).
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting shape mismatches and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite feature {} at flat index {i}",
                data[i]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// New matrix holding the given rows of `self`, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

/// A minibatch of examples drawn from a single domain: an `N×d` feature
/// matrix, binary labels, and the domain identity.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBatch {
    features: Matrix,
    labels: Vec<u8>,
    domain_id: u32,
}

impl DomainBatch {
    pub fn new(features: Matrix, labels: Vec<u8>, domain_id: u32) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::InvalidInput("batch must contain at least one example".into()));
        }
        if labels.len() != features.rows() {
            return Err(Error::Dimension(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidInput(format!(
                "label {} at index {i} is not 0 or 1",
                labels[i]
            )));
        }
        Ok(Self {
            features,
            labels,
            domain_id,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn domain_id(&self) -> u32 {
        self.domain_id
    }

    /// Number of examples.
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least one example
    }

    /// Concatenates batches (in the given order) into one pooled batch
    /// tagged with `domain_id`. All batches must agree on feature width.
    pub fn concat(batches: &[DomainBatch], domain_id: u32) -> Result<DomainBatch> {
        let first = batches
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot pool zero batches".into()))?;
        let cols = first.features.cols();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for b in batches {
            if b.features.cols() != cols {
                return Err(Error::Dimension(format!(
                    "pooling feature widths {} and {cols}",
                    b.features.cols()
                )));
            }
            data.extend_from_slice(b.features.data());
            labels.extend_from_slice(&b.labels);
        }
        let rows = labels.len();
        DomainBatch::new(Matrix::new(rows, cols, data)?, labels, domain_id)
    }
}
