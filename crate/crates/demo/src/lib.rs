//! In-browser playground for the tree convolution network.
//!
//! [`Demo`] is plain Rust so it can be tested natively; [`DemoModel`] is the
//! thin wasm-bindgen face the static page in `www/` talks to. Everything runs
//! on a small synthetic two-resident home generated from the seed.

use treeconv::casas::{parse_log, SensorVocabulary, ACTIVITY_NAMES};
use treeconv::model::{init_params, predict, tree_trace, ModelParams, Prediction};
use treeconv::numerics::Tensor;
use treeconv::synth::{generate, SynthProfile};
use treeconv::training::{accumulate_batch, adam_step, epoch_order, AdamState, TrainConfig};
use treeconv::windowing::{make_windows, SampleWindow};
use treeconv::LabelPair;
use wasm_bindgen::prelude::*;

/// Log files generated per demo; the last [`TEST_FILES`] are held out.
pub const FILES: usize = 6;
pub const TEST_FILES: usize = 2;
pub const EVENTS_PER_FILE: usize = 80;
pub const BATCH: usize = 16;
pub const LEARNING_RATE: f64 = 1e-3;

pub struct Demo {
    vocab: SensorVocabulary,
    model: ModelParams,
    state: AdamState,
    config: TrainConfig,
    train: Vec<SampleWindow>,
    test: Vec<SampleWindow>,
    test_tags: Vec<Vec<usize>>,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
    losses: Vec<f64>,
}

impl Demo {
    pub fn new(seed: u64, k: usize) -> Result<Self, String> {
        if k < 2 {
            return Err(format!("window size must be at least 2, got {k}"));
        }
        let vocab = SensorVocabulary::casas();
        let profile = SynthProfile {
            files: FILES,
            events_per_file: EVENTS_PER_FILE,
            ..SynthProfile::default()
        };
        let logs = generate(&profile, seed).map_err(|e| e.to_string())?;
        let (mut train, mut test, mut test_tags) = (Vec::new(), Vec::new(), Vec::new());
        for (i, (name, text)) in logs.iter().enumerate() {
            let events = parse_log(name, text, &vocab).map_err(|e| e.to_string())?.on_events("ON");
            let windows = make_windows(&events, k, vocab.len());
            if i + TEST_FILES >= FILES {
                let sensors: Vec<usize> = events.iter().map(|e| e.sensor).collect();
                test_tags.extend((0..sensors.len()).map(|t| sensors[t.saturating_sub(k - 1)..=t].to_vec()));
                test.extend(windows);
            } else {
                train.extend(windows);
            }
        }
        let model = init_params(k, vocab.len(), seed).map_err(|e| e.to_string())?;
        let config = TrainConfig {
            batch_size: BATCH,
            learning_rate: LEARNING_RATE,
            seed,
            ..TrainConfig::default()
        };
        Ok(Self {
            state: AdamState::new(&model.params),
            vocab,
            model,
            config,
            train,
            test,
            test_tags,
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
            losses: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.model.k()
    }

    pub fn vocab(&self) -> &SensorVocabulary {
        &self.vocab
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn train_len(&self) -> usize {
        self.train.len()
    }

    pub fn test_len(&self) -> usize {
        self.test.len()
    }

    /// Batch loss after every step taken so far.
    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    /// Full epochs completed.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One Adam step on the next batch of the current epoch order.
    pub fn step(&mut self) -> Result<f64, String> {
        if self.cursor >= self.order.len() {
            if !self.order.is_empty() {
                self.epoch += 1;
            }
            self.order = epoch_order(&self.train, self.config.seed, self.epoch);
            self.cursor = 0;
        }
        let end = (self.cursor + self.config.batch_size).min(self.order.len());
        let batch: Vec<&SampleWindow> = self.order[self.cursor..end].iter().map(|&i| &self.train[i]).collect();
        self.cursor = end;
        let loss = accumulate_batch(&mut self.model, &batch, self.config.l2_weight).map_err(|e| e.to_string())?;
        if !loss.is_finite() {
            return Err(format!("non-finite loss at step {}", self.losses.len()));
        }
        adam_step(
            &mut self.model.params,
            &mut self.state,
            self.config.learning_rate,
            self.config.adam_beta1,
            self.config.adam_beta2,
            self.config.adam_eps,
        )
        .map_err(|e| e.to_string())?;
        self.losses.push(loss);
        Ok(loss)
    }

    /// Sensor indices from tags separated by whitespace or commas, oldest first.
    pub fn parse_history(&self, tags: &str) -> Result<Vec<usize>, String> {
        let sensors = tags
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| self.vocab.index_of(t).ok_or_else(|| format!("unknown sensor tag {t:?}")))
            .collect::<Result<Vec<_>, _>>()?;
        if sensors.is_empty() {
            return Err("enter at least one sensor tag".into());
        }
        Ok(sensors)
    }

    fn window(&self, tags: &str) -> Result<SampleWindow, String> {
        let sensors = self.parse_history(tags)?;
        Ok(SampleWindow::from_sensors(&sensors, self.k(), self.vocab.len(), LabelPair::new(0, 0)))
    }

    pub fn predict(&self, tags: &str) -> Result<Prediction, String> {
        predict(&self.model, &self.window(tags)?).map_err(|e| e.to_string())
    }

    /// Output map of every tree layer, `[channels, vocab]` each.
    pub fn feature_maps(&self, tags: &str) -> Result<Vec<Tensor>, String> {
        tree_trace(&self.model, &self.window(tags)?).map_err(|e| e.to_string())
    }

    /// Held-out history `i` as tags (at most `k`, oldest first) and its label.
    pub fn test_sample(&self, i: usize) -> Option<(String, LabelPair)> {
        let tags = self.test_tags.get(i)?;
        let text: Vec<&str> = tags.iter().map(|&s| self.vocab.tag(s)).collect();
        Some((text.join(" "), self.test[i].label))
    }

    /// Held-out accuracy of the resident and activity heads.
    pub fn test_accuracy(&self) -> Result<(f64, f64), String> {
        let (mut r, mut a) = (0usize, 0usize);
        for w in &self.test {
            let pred = predict(&self.model, w).map_err(|e| e.to_string())?.label();
            r += usize::from(pred.resident == w.label.resident);
            a += usize::from(pred.activity == w.label.activity);
        }
        let n = self.test.len().max(1) as f64;
        Ok((r as f64 / n, a as f64 / n))
    }
}

#[wasm_bindgen]
pub struct DemoModel {
    inner: Demo,
}

#[wasm_bindgen]
impl DemoModel {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, k: usize) -> Result<DemoModel, JsError> {
        Demo::new(u64::from(seed), k)
            .map(|inner| DemoModel { inner })
            .map_err(|e| JsError::new(&e))
    }

    pub fn k(&self) -> usize {
        self.inner.k()
    }

    /// Sensor tags in vocabulary order, space separated.
    pub fn tags(&self) -> String {
        self.inner.vocab.tags().join(" ")
    }

    /// Activity names in label order, one per line.
    pub fn activity_names(&self) -> String {
        ACTIVITY_NAMES.join("\n")
    }

    pub fn layers(&self) -> usize {
        self.inner.model.layers().len()
    }

    pub fn train_windows(&self) -> usize {
        self.inner.train_len()
    }

    pub fn test_windows(&self) -> usize {
        self.inner.test_len()
    }

    pub fn epoch(&self) -> usize {
        self.inner.epoch()
    }

    /// Runs `n` Adam steps; returns the last batch loss.
    pub fn train(&mut self, n: usize) -> Result<f64, JsError> {
        let mut last = f64::NAN;
        for _ in 0..n {
            last = self.inner.step().map_err(|e| JsError::new(&e))?;
        }
        Ok(last)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.inner.losses().to_vec()
    }

    /// Resident probabilities followed by activity probabilities.
    pub fn predict(&self, tags: &str) -> Result<Vec<f64>, JsError> {
        let p = self.inner.predict(tags).map_err(|e| JsError::new(&e))?;
        let mut out = p.resident_probs.into_data();
        out.extend(p.activity_probs.into_data());
        Ok(out)
    }

    /// Channels of layer `layer`'s output map.
    pub fn layer_channels(&self, layer: usize) -> usize {
        self.inner.model.plan().out_channels()[layer]
    }

    /// Row-major `[channels, vocab]` output of layer `layer` for `tags`.
    pub fn feature_map(&self, tags: &str, layer: usize) -> Result<Vec<f64>, JsError> {
        let maps = self.inner.feature_maps(tags).map_err(|e| JsError::new(&e))?;
        maps.into_iter()
            .nth(layer)
            .map(Tensor::into_data)
            .ok_or_else(|| JsError::new(&format!("no layer {layer}")))
    }

    /// `"tags|resident activity"` for held-out sample `i`, labels 1-based.
    pub fn test_sample(&self, i: usize) -> Option<String> {
        self.inner.test_sample(i).map(|(tags, label)| format!("{tags}|{label}"))
    }

    /// `[resident accuracy, activity accuracy]` on the held-out files.
    pub fn test_accuracy(&self) -> Result<Vec<f64>, JsError> {
        let (r, a) = self.inner.test_accuracy().map_err(|e| JsError::new(&e))?;
        Ok(vec![r, a])
    }
}
