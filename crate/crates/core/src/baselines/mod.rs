//! Classical baselines over flattened windows.

mod knn;
mod tree;

pub use knn::{knn_predict, Knn, DEFAULT_NEIGHBORS};
pub use tree::{dt_fit, dt_predict, DecisionTree, TreeConfig};

use thiserror::Error;

use crate::windowing::SampleWindow;
use crate::LabelPair;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BaselineError {
    #[error("empty training set")]
    EmptyTrain,
    #[error("k_neighbors must be in 1..={train}, got {k}")]
    Neighbors { k: usize, train: usize },
    #[error("feature length {found} differs from training length {expected}")]
    FeatureLength { expected: usize, found: usize },
}

/// A window's embeddings concatenated oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatSample {
    pub features: Vec<f64>,
    pub label: LabelPair,
}

impl FlatSample {
    pub fn from_window(window: &SampleWindow) -> Self {
        Self {
            features: window.flatten(),
            label: window.label,
        }
    }
}

pub fn flatten_all(windows: &[SampleWindow]) -> Vec<FlatSample> {
    windows.iter().map(FlatSample::from_window).collect()
}

/// Index of the largest count; ties go to the smallest index.
pub(crate) fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, c) in counts.iter().enumerate() {
        if *c > counts[best] {
            best = i;
        }
    }
    best
}
