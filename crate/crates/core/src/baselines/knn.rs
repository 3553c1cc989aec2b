use super::{majority, BaselineError, FlatSample};
use crate::{LabelPair, ACTIVITIES, RESIDENTS};

pub const DEFAULT_NEIGHBORS: usize = 5;

/// Brute-force Euclidean KNN with independent votes per head.
///
/// Equal distances are ordered by training index; equal votes go to the
/// smaller class index.
#[derive(Clone, Debug)]
pub struct Knn {
    train: Vec<FlatSample>,
    neighbors: usize,
}

impl Knn {
    pub fn new(train: Vec<FlatSample>, neighbors: usize) -> Result<Self, BaselineError> {
        if train.is_empty() {
            return Err(BaselineError::EmptyTrain);
        }
        if neighbors == 0 || neighbors > train.len() {
            return Err(BaselineError::Neighbors {
                k: neighbors,
                train: train.len(),
            });
        }
        let dim = train[0].features.len();
        if let Some(bad) = train.iter().find(|s| s.features.len() != dim) {
            return Err(BaselineError::FeatureLength {
                expected: dim,
                found: bad.features.len(),
            });
        }
        Ok(Self { train, neighbors })
    }

    pub fn predict(&self, query: &[f64]) -> Result<LabelPair, BaselineError> {
        let dim = self.train[0].features.len();
        if query.len() != dim {
            return Err(BaselineError::FeatureLength {
                expected: dim,
                found: query.len(),
            });
        }
        // Squared distance preserves the ordering.
        let mut dist: Vec<(f64, usize)> = self
            .train
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let d = s
                    .features
                    .iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d, i)
            })
            .collect();
        let k = self.neighbors;
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        let mut residents = [0usize; RESIDENTS];
        let mut activities = [0usize; ACTIVITIES];
        for &(_, i) in &dist[..k] {
            let l = self.train[i].label;
            residents[l.resident] += 1;
            activities[l.activity] += 1;
        }
        Ok(LabelPair::new(majority(&residents), majority(&activities)))
    }
}

pub fn knn_predict(
    train: &[FlatSample],
    query: &FlatSample,
    neighbors: usize,
) -> Result<LabelPair, BaselineError> {
    Knn::new(train.to_vec(), neighbors)?.predict(&query.features)
}
