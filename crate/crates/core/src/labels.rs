//! Hard community assignments of features.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard labels `c ∈ [K]^P`, stored 0-based.
///
/// On disk labels are 1-based (`{"labels": [1, 2, ...]}`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAssignment {
    labels: Vec<usize>,
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct LabelsDoc {
    labels: Vec<usize>,
}

impl LabelAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::LabelOutOfRange { index, label, k });
        }
        Ok(Self { labels, k })
    }

    /// Number of communities is taken as `max(label) + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self { labels, k }
    }

    /// Argmax of each row, ties broken by the lowest index.
    pub fn from_membership(q: &DMatrix<f64>) -> Self {
        let labels = q
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect();
        Self {
            labels,
            k: q.ncols(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.labels
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// P×K indicator matrix `L`.
    pub fn one_hot(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.labels.len(), self.k);
        for (j, &l) in self.labels.iter().enumerate() {
            m[(j, l)] = 1.0;
        }
        m
    }

    /// Relabels so that community `k` becomes `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            labels: self.labels.iter().map(|&l| perm[l]).collect(),
            k: self.k,
        }
    }

    /// Selects the entries at `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            labels: indices.iter().map(|&j| self.labels[j]).collect(),
            k: self.k,
        }
    }

    pub fn to_json(&self) -> String {
        let doc = LabelsDoc {
            labels: self.labels.iter().map(|l| l + 1).collect(),
        };
        serde_json::to_string(&doc).expect("labels serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: LabelsDoc = serde_json::from_str(s)?;
        if doc.labels.contains(&0) {
            return Err(Error::Parse("labels are 1-based; found 0".into()));
        }
        Ok(Self::from_labels(
            doc.labels.into_iter().map(|l| l - 1).collect(),
        ))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
