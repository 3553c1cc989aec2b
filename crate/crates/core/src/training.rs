//! Joint loss, Adam, the epoch loop and the hyperparameter sweep.

use std::io::{self, Write};

use thiserror::Error;

use crate::model::{self, init_params, ModelError, ModelParams, Prediction};
use crate::numerics::{cross_entropy, NumericsError, ParamKind, ParamSet, Tape, Tensor};
use crate::seed::{self, splitmix64};
use crate::windowing::SampleWindow;
use crate::LabelPair;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("no training windows")]
    EmptyData,
    #[error("optimizer step with no parameters")]
    EmptyGradients,
    #[error("windows disagree on size or vocabulary")]
    InconsistentWindows,
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub l2_weight: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            l2_weight: 0.0004,
            learning_rate: 0.0002,
            epochs: 25,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

/// Two cross-entropies plus `l2_weight * Σ ‖W‖²` over weight tensors.
pub fn joint_loss(pred: &Prediction, label: LabelPair, params: &ParamSet, l2_weight: f64) -> Result<f64, NumericsError> {
    let ce = cross_entropy(&pred.resident_probs, label.resident)?
        + cross_entropy(&pred.activity_probs, label.activity)?;
    Ok(ce + l2_weight * l2_norm_sq(params))
}

/// Mean of [`joint_loss`] over `windows` under the current parameters.
pub fn dataset_loss(model: &ModelParams, windows: &[SampleWindow], l2_weight: f64) -> Result<f64, TrainError> {
    if windows.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let mut total = 0.0;
    for w in windows {
        let pred = model::predict(model, w)?;
        total += cross_entropy(&pred.resident_probs, w.label.resident)?
            + cross_entropy(&pred.activity_probs, w.label.activity)?;
    }
    Ok(total / windows.len() as f64 + l2_weight * l2_norm_sq(&model.params))
}

pub fn l2_norm_sq(params: &ParamSet) -> f64 {
    params
        .iter()
        .filter(|p| p.kind == ParamKind::Weight)
        .map(|p| p.value.sum_squares())
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }
}

/// Bias-corrected Adam update from the accumulated grads, which are then zeroed.
pub fn adam_step(
    params: &mut ParamSet,
    state: &mut AdamState,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<(), TrainError> {
    if params.is_empty() {
        return Err(TrainError::EmptyGradients);
    }
    assert_eq!(state.first.len(), params.len(), "optimizer state built for another model");
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.first).zip(&mut state.second) {
        let g = p.grad.data();
        let values = p.value.data_mut();
        for (i, (mi, vi)) in m.data_mut().iter_mut().zip(v.data_mut()).enumerate() {
            *mi = beta1 * *mi + (1.0 - beta1) * g[i];
            *vi = beta2 * *vi + (1.0 - beta2) * g[i] * g[i];
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            values[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
        p.grad.fill(0.0);
    }
    Ok(())
}

/// Forward and backward over one batch, accumulating the gradient of
/// `mean(CE) + L2` into the parameter grads. Returns that loss.
pub fn accumulate_batch(
    model: &mut ModelParams,
    batch: &[&SampleWindow],
    l2_weight: f64,
) -> Result<f64, TrainError> {
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for window in batch {
        let (loss, grads) = {
            let mut tape = Tape::new(&model.params);
            let loss = model::cross_entropy_graph(&mut tape, model, window)?;
            (tape.value(loss).data()[0], tape.backward(loss)?)
        };
        total += loss;
        model.params.accumulate(&grads, scale);
    }
    let mut loss = total * scale;
    if l2_weight != 0.0 {
        let (l2, grads) = {
            let mut tape = Tape::new(&model.params);
            let l2 = model::l2_graph(&mut tape, l2_weight).expect("model has weights");
            (tape.value(l2).data()[0], tape.backward(l2)?)
        };
        model.params.accumulate(&grads, 1.0);
        loss += l2;
    }
    Ok(loss)
}

fn content_key(window: &SampleWindow) -> Vec<u64> {
    let mut key: Vec<u64> = window
        .sensors()
        .into_iter()
        .map(|s| s.map_or(0, |v| v as u64 + 1))
        .collect();
    key.push(window.label.resident as u64);
    key.push(window.label.activity as u64);
    key
}

/// Epoch visiting order. Each window is ranked by a seeded hash of its own
/// content, so the order does not depend on how the windows were stored.
pub fn epoch_order(windows: &[SampleWindow], root_seed: u64, epoch: usize) -> Vec<usize> {
    let salt = seed::derive(seed::derive(root_seed, seed::STREAM_SHUFFLE), epoch as u64);
    let mut keyed: Vec<(u64, Vec<u64>, usize)> = windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let content = content_key(w);
            let h = content.iter().fold(salt, |h, v| splitmix64(h ^ v));
            (h, content, i)
        })
        .collect();
    keyed.sort();
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub avg_loss: f64,
    pub max_batch_loss: f64,
    pub min_batch_loss: f64,
}

pub fn batch_sizes(n: usize, batch_size: usize) -> Vec<usize> {
    (0..n)
        .step_by(batch_size)
        .map(|start| batch_size.min(n - start))
        .collect()
}

/// One pass over `windows` in seeded order, one Adam step per batch.
pub fn train_epoch(
    windows: &[SampleWindow],
    model: &mut ModelParams,
    state: &mut AdamState,
    config: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats, TrainError> {
    if windows.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let order = epoch_order(windows, config.seed, epoch);
    let mut losses = Vec::new();
    for (b, chunk) in order.chunks(config.batch_size.max(1)).enumerate() {
        let batch: Vec<&SampleWindow> = chunk.iter().map(|&i| &windows[i]).collect();
        let loss = accumulate_batch(model, &batch, config.l2_weight)?;
        if !loss.is_finite() {
            return Err(TrainError::NonFinite { epoch, batch: b });
        }
        adam_step(
            &mut model.params,
            state,
            config.learning_rate,
            config.adam_beta1,
            config.adam_beta2,
            config.adam_eps,
        )?;
        losses.push(loss);
    }
    Ok(EpochStats {
        epoch,
        avg_loss: losses.iter().sum::<f64>() / losses.len() as f64,
        max_batch_loss: losses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_batch_loss: losses.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: ModelParams,
    pub log: Vec<EpochStats>,
}

/// Window size and vocabulary shared by every window.
pub fn window_geometry(windows: &[SampleWindow]) -> Result<(usize, usize), TrainError> {
    let first = windows.first().ok_or(TrainError::EmptyData)?;
    let k = first.k();
    let vocab = first.target().len();
    let consistent = windows
        .iter()
        .all(|w| w.k() == k && w.embeddings.iter().all(|e| e.shape() == [1, vocab]));
    if consistent {
        Ok((k, vocab))
    } else {
        Err(TrainError::InconsistentWindows)
    }
}

/// Initializes from `config.seed` and trains for `config.epochs` epochs.
pub fn fit(windows: &[SampleWindow], config: &TrainConfig) -> Result<FitResult, TrainError> {
    fit_with(windows, config, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(
    windows: &[SampleWindow],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<FitResult, TrainError> {
    let (k, vocab) = window_geometry(windows)?;
    let mut model = init_params(k, vocab, config.seed)?;
    let mut state = AdamState::new(&model.params);
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let stats = train_epoch(windows, &mut model, &mut state, config, epoch)?;
        on_epoch(&stats);
        log.push(stats);
    }
    Ok(FitResult { model, log })
}

pub const LOSS_LOG_HEADER: &str = "epoch,avg_loss,max_batch_loss,min_batch_loss";

pub fn write_loss_log<W: Write>(mut out: W, log: &[EpochStats]) -> io::Result<()> {
    writeln!(out, "{LOSS_LOG_HEADER}")?;
    for s in log {
        writeln!(
            out,
            "{},{:?},{:?},{:?}",
            s.epoch + 1,
            s.avg_loss,
            s.max_batch_loss,
            s.min_batch_loss
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub batch_sizes: Vec<usize>,
    pub l2_weights: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub tuning_epochs: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        let steps = vec![0.0001, 0.0003, 0.0005, 0.0007, 0.0009];
        Self {
            batch_sizes: vec![64, 128, 256],
            l2_weights: steps.clone(),
            learning_rates: steps,
            tuning_epochs: 15,
        }
    }
}

impl SweepGrid {
    pub fn points(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for &a in &self.batch_sizes {
            for &b in &self.l2_weights {
                for &g in &self.learning_rates {
                    out.push((a, b, g));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub batch_size: usize,
    pub l2_weight: f64,
    pub learning_rate: f64,
    pub max_loss: f64,
    pub avg_loss: f64,
    pub min_loss: f64,
}

/// Trains one model per grid point for `grid.tuning_epochs` epochs and
/// summarizes its epoch losses.
pub fn sweep(
    windows: &[SampleWindow],
    grid: &SweepGrid,
    base: &TrainConfig,
    mut on_row: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>, TrainError> {
    let mut rows = Vec::new();
    for (batch_size, l2_weight, learning_rate) in grid.points() {
        let config = TrainConfig {
            batch_size,
            l2_weight,
            learning_rate,
            epochs: grid.tuning_epochs,
            ..base.clone()
        };
        let fit = fit(windows, &config)?;
        let losses: Vec<f64> = fit.log.iter().map(|s| s.avg_loss).collect();
        let n = losses.len().max(1) as f64;
        let row = SweepRow {
            batch_size,
            l2_weight,
            learning_rate,
            max_loss: losses.iter().copied().fold(f64::NAN, f64::max),
            avg_loss: losses.iter().sum::<f64>() / n,
            min_loss: losses.iter().copied().fold(f64::NAN, f64::min),
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "alpha,beta,gamma,max_loss,avg_loss,min_loss";

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:?},{:?},{:?}",
            r.batch_size, r.l2_weight, r.learning_rate, r.max_loss, r.avg_loss, r.min_loss
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ParamTensor;

    fn scalar_params(values: &[f64]) -> ParamSet {
        let mut ps = ParamSet::new();
        for (i, v) in values.iter().enumerate() {
            ps.insert(ParamTensor::new(
                format!("p{i}"),
                ParamKind::Weight,
                Tensor::from_vec(vec![*v]),
            ))
            .unwrap();
        }
        ps
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut ps = scalar_params(&[0.5]);
        ps.iter_mut().next().unwrap().grad.data_mut()[0] = 1.0;
        let mut st = AdamState::new(&ps);
        adam_step(&mut ps, &mut st, 0.0002, 0.9, 0.999, 1e-8).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        let expected = 0.5 - 0.0002 / (1.0 + 1e-8);
        let got = ps.iter().next().unwrap().value.data()[0];
        assert!((got - expected).abs() < 1e-15, "{got}");
        assert_eq!(st.step, 1);
        assert_eq!(ps.iter().next().unwrap().grad.data()[0], 0.0);
    }

    #[test]
    fn zero_grad_leaves_params_and_decays_moments() {
        let mut ps = scalar_params(&[0.5, -1.0]);
        let mut st = AdamState::new(&ps);
        st.first[0].data_mut()[0] = 0.2;
        st.second[0].data_mut()[0] = 0.04;
        st.step = 3;
        let before: Vec<f64> = ps.iter().map(|p| p.value.data()[0]).collect();
        // With nonzero moments the value still moves; only check decay here.
        adam_step(&mut ps, &mut st, 0.0, 0.9, 0.999, 1e-8).unwrap();
        let after: Vec<f64> = ps.iter().map(|p| p.value.data()[0]).collect();
        assert_eq!(before, after);
        assert!((st.first[0].data()[0] - 0.18).abs() < 1e-15);
        assert!((st.second[0].data()[0] - 0.04 * 0.999).abs() < 1e-15);

        let mut fresh = scalar_params(&[0.5, -1.0]);
        let mut st = AdamState::new(&fresh);
        adam_step(&mut fresh, &mut st, 0.01, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(fresh.iter().map(|p| p.value.data()[0]).collect::<Vec<_>>(), before);
    }

    #[test]
    fn identical_tensors_update_identically() {
        let mut ps = scalar_params(&[0.3, 0.3]);
        for p in ps.iter_mut() {
            p.grad.data_mut()[0] = -0.7;
        }
        let mut st = AdamState::new(&ps);
        adam_step(&mut ps, &mut st, 0.01, 0.9, 0.999, 1e-8).unwrap();
        let v: Vec<u64> = ps.iter().map(|p| p.value.data()[0].to_bits()).collect();
        assert_eq!(v[0], v[1]);
    }

    #[test]
    fn empty_params_rejected() {
        let mut ps = ParamSet::new();
        let mut st = AdamState::new(&ps);
        assert_eq!(
            adam_step(&mut ps, &mut st, 0.1, 0.9, 0.999, 1e-8),
            Err(TrainError::EmptyGradients)
        );
    }

    #[test]
    fn batch_partition() {
        assert_eq!(batch_sizes(300, 128), vec![128, 128, 44]);
        assert_eq!(batch_sizes(128, 128), vec![128]);
    }

    #[test]
    fn default_grid_has_75_points() {
        let g = SweepGrid::default();
        assert_eq!(g.points().len(), 75);
        assert_eq!(g.tuning_epochs, 15);
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.l2_weight, c.learning_rate, c.epochs), (128, 0.0004, 0.0002, 25));
        assert_eq!((c.adam_beta1, c.adam_beta2, c.adam_eps), (0.9, 0.999, 1e-8));
    }

    #[test]
    fn fit_rejects_empty() {
        assert!(matches!(fit(&[], &TrainConfig::default()), Err(TrainError::EmptyData)));
    }
}
