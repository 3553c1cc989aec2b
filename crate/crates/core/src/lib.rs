//! Tree-structured 1D convolutional network for joint resident and activity
//! recognition from binary ambient-sensor event logs.
//!
//! Pipeline: [`casas`] parses and filters event logs, [`windowing`] turns each
//! ON event into a fixed-size history window, [`model`] folds the window
//! through a cascade of residual convolution modules into two softmax heads,
//! [`training`] fits it with Adam, and [`metrics`] scores predictions.
//! [`baselines`] provides KNN and decision-tree comparisons over the same
//! windows.

pub mod baselines;
pub mod casas;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod seed;
pub mod synth;
pub mod training;
pub mod windowing;

pub use casas::{LabelPair, SensorEvent, SensorVocabulary};
pub use model::{ModelParams, Prediction};
pub use numerics::Tensor;
pub use windowing::SampleWindow;

/// Number of residents in the label space.
pub const RESIDENTS: usize = 2;
/// Number of annotated activities in the label space.
pub const ACTIVITIES: usize = 15;
/// Default window size (target event plus seven predecessors).
pub const DEFAULT_WINDOW: usize = 8;
