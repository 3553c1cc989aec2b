//! CART classifier on the joint (resident, activity) class.

use super::{majority, BaselineError, FlatSample};
use crate::{LabelPair, ACTIVITIES, RESIDENTS};

const CLASSES: usize = RESIDENTS * ACTIVITIES;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    dim: usize,
}

fn gini(counts: &[usize; CLASSES], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    samples: &'a [FlatSample],
    config: TreeConfig,
    nodes: Vec<Node>,
}

struct BestSplit {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn class(&self, i: usize) -> usize {
        self.samples[i].label.composite()
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let mut counts = [0usize; CLASSES];
        for &i in idx.iter() {
            counts[self.class(i)] += 1;
        }
        let node = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: majority(&counts),
        });

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.config.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || idx.len() < 2 * self.config.min_leaf.max(1) {
            return node;
        }
        let Some(best) = self.best_split(idx) else {
            return node;
        };

        let feature = best.feature;
        let split = partition(idx, |i| self.samples[i].features[feature] <= best.threshold);
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[node] = Node::Split {
            feature,
            threshold: best.threshold,
            left,
            right,
        };
        node
    }

    /// Lowest weighted child Gini over every feature and midpoint threshold.
    fn best_split(&self, idx: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        let min_leaf = self.config.min_leaf.max(1);
        let dim = self.samples[idx[0]].features.len();
        let mut best: Option<BestSplit> = None;
        let mut column: Vec<(f64, usize)> = Vec::with_capacity(n);
        for f in 0..dim {
            column.clear();
            column.extend(idx.iter().map(|&i| (self.samples[i].features[f], self.class(i))));
            let first = column[0].0;
            if column.iter().all(|(v, _)| *v == first) {
                continue;
            }
            column.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut right = [0usize; CLASSES];
            for &(_, c) in &column {
                right[c] += 1;
            }
            let mut left = [0usize; CLASSES];
            for pos in 0..n - 1 {
                let c = column[pos].1;
                left[c] += 1;
                right[c] -= 1;
                let nl = pos + 1;
                if column[pos].0 == column[pos + 1].0 || nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let impurity = (nl as f64 * gini(&left, nl)
                    + (n - nl) as f64 * gini(&right, n - nl))
                    / n as f64;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    best = Some(BestSplit {
                        impurity,
                        feature: f,
                        threshold: 0.5 * (column[pos].0 + column[pos + 1].0),
                    });
                }
            }
        }
        best
    }
}

/// Stable in-place partition; returns the count satisfying `pred`.
fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| pred(i));
    let split = yes.len();
    idx[..split].copy_from_slice(&yes);
    idx[split..].copy_from_slice(&no);
    split
}

impl DecisionTree {
    pub fn fit(samples: &[FlatSample], config: TreeConfig) -> Result<Self, BaselineError> {
        if samples.is_empty() {
            return Err(BaselineError::EmptyTrain);
        }
        let dim = samples[0].features.len();
        if let Some(bad) = samples.iter().find(|s| s.features.len() != dim) {
            return Err(BaselineError::FeatureLength {
                expected: dim,
                found: bad.features.len(),
            });
        }
        let mut b = Builder {
            samples,
            config,
            nodes: Vec::new(),
        };
        let mut idx: Vec<usize> = (0..samples.len()).collect();
        b.grow(&mut idx, 0);
        Ok(Self { nodes: b.nodes, dim })
    }

    pub fn predict(&self, features: &[f64]) -> Result<LabelPair, BaselineError> {
        if features.len() != self.dim {
            return Err(BaselineError::FeatureLength {
                expected: self.dim,
                found: features.len(),
            });
        }
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                Node::Leaf { class } => return Ok(LabelPair::from_composite(*class)),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if features[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

pub fn dt_fit(samples: &[FlatSample], config: TreeConfig) -> Result<DecisionTree, BaselineError> {
    DecisionTree::fit(samples, config)
}

pub fn dt_predict(tree: &DecisionTree, query: &FlatSample) -> Result<LabelPair, BaselineError> {
    tree.predict(&query.features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(f: &[f64], r: usize, a: usize) -> FlatSample {
        FlatSample {
            features: f.to_vec(),
            label: LabelPair::new(r, a),
        }
    }

    #[test]
    fn pure_set_is_a_leaf() {
        let data = vec![s(&[0.0, 1.0], 1, 4), s(&[1.0, 0.0], 1, 4), s(&[1.0, 1.0], 1, 4)];
        let t = dt_fit(&data, TreeConfig::default()).unwrap();
        assert_eq!(t.depth(), 0);
        assert_eq!(t.predict(&[0.0, 0.0]).unwrap(), LabelPair::new(1, 4));
    }

    #[test]
    fn separable_pair_needs_one_split() {
        let data = vec![s(&[0.0], 0, 2), s(&[1.0], 1, 9)];
        let t = dt_fit(&data, TreeConfig::default()).unwrap();
        assert_eq!(t.depth(), 1);
        for d in &data {
            assert_eq!(dt_predict(&t, d).unwrap(), d.label);
        }
    }

    #[test]
    fn xor_needs_depth_two() {
        let data = vec![
            s(&[0.0, 0.0], 0, 0),
            s(&[0.0, 1.0], 0, 1),
            s(&[1.0, 0.0], 0, 1),
            s(&[1.0, 1.0], 0, 0),
        ];
        let t = dt_fit(&data, TreeConfig::default()).unwrap();
        for d in &data {
            assert_eq!(t.predict(&d.features).unwrap(), d.label);
        }
        let shallow = dt_fit(&data, TreeConfig { max_depth: Some(0), min_leaf: 1 }).unwrap();
        assert_eq!(shallow.depth(), 0);
    }

    #[test]
    fn min_leaf_blocks_small_children() {
        let data = vec![s(&[0.0], 0, 0), s(&[0.0], 0, 0), s(&[1.0], 0, 3)];
        let t = dt_fit(&data, TreeConfig { max_depth: None, min_leaf: 2 }).unwrap();
        assert_eq!(t.depth(), 0);
    }

    #[test]
    fn empty_rejected() {
        assert_eq!(dt_fit(&[], TreeConfig::default()).unwrap_err(), BaselineError::EmptyTrain);
    }
}
