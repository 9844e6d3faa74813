//! Row-major probability matrices.

use serde::{Deserialize, Serialize};

use crate::envelope::validate_row;
use crate::error::{Error, Result};

/// Estimated class probabilities, one row per example and `k` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMatrix {
    k: usize,
    values: Vec<f64>,
}

impl ProbabilityMatrix {
    /// Wraps row-major `values`; every row is validated.
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || !values.len().is_multiple_of(k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: values.len(),
            });
        }
        let m = ProbabilityMatrix { k, values };
        for (i, row) in m.rows().enumerate() {
            validate_row(row, k, i)?;
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: bad.len(),
            });
        }
        Self::new(k, rows.concat())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.k)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> ProbabilityMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.k);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        ProbabilityMatrix { k: self.k, values }
    }

    /// Applies `f` to every row; rows produced by `f` are not revalidated.
    pub fn map_rows(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> ProbabilityMatrix {
        let mut values = Vec::with_capacity(self.values.len());
        for row in self.rows() {
            values.extend(f(row));
        }
        ProbabilityMatrix { k: self.k, values }
    }
}

/// Checks 1-based labels against the class count.
pub fn validate_labels(labels: &[u32], k: usize) -> Result<()> {
    match labels
        .iter()
        .enumerate()
        .find(|(_, &y)| y == 0 || y as usize > k)
    {
        Some((row, &label)) => Err(Error::InvalidLabel { row, label, k }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_and_validation() {
        let m = ProbabilityMatrix::from_rows(&[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.row(1), &[1.0, 0.0]);
        assert!(matches!(
            ProbabilityMatrix::from_rows(&[vec![0.7, 0.5]]),
            Err(Error::ProbabilityOutOfRange { row: 0, .. })
        ));
        assert!(matches!(
            ProbabilityMatrix::from_rows(&[vec![0.5, 0.5], vec![1.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(validate_labels(&[1, 2], 2).is_ok());
        assert!(matches!(
            validate_labels(&[1, 3], 2),
            Err(Error::InvalidLabel { row: 1, label: 3, k: 2 })
        ));
    }
}
