//! Per-event history windows.
//!
//! Every ON event becomes one sample: its own one-hot embedding preceded by
//! the `k - 1` events before it in the same file. Early events are
//! left-padded with all-zero embeddings so no event is dropped.

use std::io::{self, Write};

use crate::casas::{one_hot_index, LabelPair, SensorEvent};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SampleWindow {
    /// `k` tensors of shape `[1, vocab]`, oldest first; the last is the target.
    pub embeddings: Vec<Tensor>,
    pub label: LabelPair,
    pub pad_count: usize,
}

impl SampleWindow {
    pub fn k(&self) -> usize {
        self.embeddings.len()
    }

    pub fn target(&self) -> &Tensor {
        self.embeddings.last().expect("window is never empty")
    }

    /// Embeddings concatenated oldest-first into one flat vector.
    pub fn flatten(&self) -> Vec<f64> {
        self.embeddings
            .iter()
            .flat_map(|e| e.data().iter().copied())
            .collect()
    }

    /// Sensor index per slot, `None` for padding.
    pub fn sensors(&self) -> Vec<Option<usize>> {
        self.embeddings
            .iter()
            .map(|e| e.data().iter().position(|v| *v != 0.0))
            .collect()
    }

    /// Builds a window directly from sensor indices (oldest first); used by
    /// inference on hand-entered histories. Shorter histories are left-padded.
    pub fn from_sensors(
        history: &[usize],
        k: usize,
        vocab_size: usize,
        label: LabelPair,
    ) -> Self {
        assert!(!history.is_empty() && k >= 1);
        let tail = &history[history.len().saturating_sub(k)..];
        let pad_count = k - tail.len();
        let mut embeddings = vec![Tensor::zeros(&[1, vocab_size]); pad_count];
        embeddings.extend(tail.iter().map(|&s| one_hot_index(s, vocab_size)));
        Self {
            embeddings,
            label,
            pad_count,
        }
    }
}

/// One window per event of a single file.
pub fn make_windows(events: &[SensorEvent], k: usize, vocab_size: usize) -> Vec<SampleWindow> {
    assert!(k >= 2, "window size must be at least 2, got {k}");
    let sensors: Vec<usize> = events.iter().map(|e| e.sensor).collect();
    events
        .iter()
        .enumerate()
        .map(|(t, e)| SampleWindow::from_sensors(&sensors[..=t], k, vocab_size, e.label))
        .collect()
}

/// Debug dump: `file,t,pad_count,resident,activity` (labels 1-based).
pub fn write_window_index<W: Write>(
    mut out: W,
    file: &str,
    windows: &[SampleWindow],
) -> io::Result<()> {
    writeln!(out, "file,t,pad_count,resident,activity")?;
    for (t, w) in windows.iter().enumerate() {
        writeln!(
            out,
            "{file},{t},{},{},{}",
            w.pad_count,
            w.label.resident + 1,
            w.label.activity + 1
        )?;
    }
    Ok(())
}
