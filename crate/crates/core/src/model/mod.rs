//! The tree-structured convolutional network.
//!
//! A window of `k` one-hot events is folded left-deep: the target event is the
//! initial feature, and layer `i` merges the running feature with the event
//! `i` steps older through a [`basic_module`]. After `k - 1` layers the
//! `[64, vocab]` feature is flattened channel-major into two softmax heads.
//!
//! ```text
//! feature ─ conv_f ─ relu ─┐
//!                          + ─ h ─ conv_a ─ relu ─ conv_b ─ relu ─ conv_c ─┐
//! event   ─ conv_e ─ relu ─┘                                               + ─ relu ─ out
//!                            └────────────────── shortcut ─────────────────┘
//! ```

pub mod checkpoint;

pub use checkpoint::{load_params, load_params_for, save_params, CheckpointError, FORMAT_VERSION};

use rand::Rng;
use thiserror::Error;

use crate::numerics::{
    gradient_check, ConvSpec, GradCheckReport, NumericsError, ParamId, ParamKind, ParamSet, ParamTensor, Tape, Tensor, Var,
};
use crate::windowing::SampleWindow;
use crate::{seed, LabelPair, ACTIVITIES, RESIDENTS};

pub const KERNEL_SIZE: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("window holds {found} events but the model expects {expected}")]
    WindowSize { expected: usize, found: usize },
    #[error("window size must be at least 2, got {0}")]
    InvalidK(usize),
}

/// Output channels per layer: 16, 32, then 64 for every further layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelPlan {
    outs: Vec<usize>,
}

impl ChannelPlan {
    pub fn for_window(k: usize) -> Self {
        let outs = (1..k)
            .map(|layer| match layer {
                1 => 16,
                2 => 32,
                _ => 64,
            })
            .collect();
        Self { outs }
    }

    pub fn layers(&self) -> usize {
        self.outs.len()
    }

    pub fn out_channels(&self) -> &[usize] {
        &self.outs
    }

    /// Channels of the running feature entering 0-based `layer`.
    pub fn feature_in(&self, layer: usize) -> usize {
        if layer == 0 {
            1
        } else {
            self.outs[layer - 1]
        }
    }

    pub fn top_channels(&self) -> usize {
        *self.outs.last().expect("plan has at least one layer")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvParams {
    pub spec: ConvSpec,
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerParams {
    /// Older event, 1 → c_i.
    pub event: ConvParams,
    /// Running feature, c_{i-1} → c_i (1 → 16 at the first layer).
    pub feature: ConvParams,
    pub residual: [ConvParams; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenseParams {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    k: usize,
    vocab_size: usize,
    plan: ChannelPlan,
    pub params: ParamSet,
    layers: Vec<LayerParams>,
    resident_head: DenseParams,
    activity_head: DenseParams,
}

/// Shape and fan-in of every tensor, handed to an initializer.
pub struct TensorSlot<'a> {
    pub name: &'a str,
    pub kind: ParamKind,
    pub shape: &'a [usize],
    pub fan_in: usize,
}

impl ModelParams {
    /// Lays out every tensor of the network, filling each with `init`.
    pub fn build(
        k: usize,
        vocab_size: usize,
        mut init: impl FnMut(TensorSlot<'_>) -> Tensor,
    ) -> Result<Self, ModelError> {
        if k < 2 {
            return Err(ModelError::InvalidK(k));
        }
        let plan = ChannelPlan::for_window(k);
        let mut b = Builder {
            params: ParamSet::new(),
            init: &mut init,
        };

        let mut layers = Vec::with_capacity(plan.layers());
        for (i, &c) in plan.out_channels().iter().enumerate() {
            let n = i + 1;
            layers.push(LayerParams {
                event: b.conv(&format!("layer{n}.event"), 1, c)?,
                feature: b.conv(&format!("layer{n}.feature"), plan.feature_in(i), c)?,
                residual: [
                    b.conv(&format!("layer{n}.residual1"), c, c)?,
                    b.conv(&format!("layer{n}.residual2"), c, c)?,
                    b.conv(&format!("layer{n}.residual3"), c, c)?,
                ],
            });
        }
        let flat = plan.top_channels() * vocab_size;
        let resident_head = b.dense("resident_head", RESIDENTS, flat)?;
        let activity_head = b.dense("activity_head", ACTIVITIES, flat)?;

        Ok(Self {
            k,
            vocab_size,
            plan,
            params: b.params,
            layers,
            resident_head,
            activity_head,
        })
    }

    pub fn zeros(k: usize, vocab_size: usize) -> Result<Self, ModelError> {
        Self::build(k, vocab_size, |slot| Tensor::zeros(slot.shape))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn plan(&self) -> &ChannelPlan {
        &self.plan
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn resident_head(&self) -> DenseParams {
        self.resident_head
    }

    pub fn activity_head(&self) -> DenseParams {
        self.activity_head
    }

    /// Length of the flattened top feature fed to both heads.
    pub fn head_input_len(&self) -> usize {
        self.plan.top_channels() * self.vocab_size
    }
}

struct Builder<'f, F> {
    params: ParamSet,
    init: &'f mut F,
}

impl<F: FnMut(TensorSlot<'_>) -> Tensor> Builder<'_, F> {
    fn tensor(
        &mut self,
        name: String,
        kind: ParamKind,
        shape: &[usize],
        fan_in: usize,
    ) -> Result<ParamId, ModelError> {
        let value = (self.init)(TensorSlot {
            name: &name,
            kind,
            shape,
            fan_in,
        });
        assert_eq!(value.shape(), shape, "initializer returned wrong shape for {name}");
        Ok(self.params.insert(ParamTensor::new(name, kind, value))?)
    }

    fn conv(&mut self, prefix: &str, cin: usize, cout: usize) -> Result<ConvParams, ModelError> {
        let spec = ConvSpec::new(cin, cout, KERNEL_SIZE)?;
        let fan_in = spec.fan_in();
        Ok(ConvParams {
            spec,
            weight: self.tensor(
                format!("{prefix}.weight"),
                ParamKind::Weight,
                &spec.weight_shape(),
                fan_in,
            )?,
            bias: self.tensor(format!("{prefix}.bias"), ParamKind::Bias, &[cout], fan_in)?,
        })
    }

    fn dense(&mut self, prefix: &str, classes: usize, flat: usize) -> Result<DenseParams, ModelError> {
        Ok(DenseParams {
            weight: self.tensor(
                format!("{prefix}.weight"),
                ParamKind::Weight,
                &[classes, flat],
                flat,
            )?,
            bias: self.tensor(format!("{prefix}.bias"), ParamKind::Bias, &[classes], flat)?,
        })
    }
}

/// Weights uniform in `±sqrt(6 / fan_in)`, biases zero, reproducible from `seed`.
pub fn init_params(k: usize, vocab_size: usize, seed: u64) -> Result<ModelParams, ModelError> {
    let mut rng = seed::rng(seed, seed::STREAM_INIT);
    ModelParams::build(k, vocab_size, |slot| match slot.kind {
        ParamKind::Bias => Tensor::zeros(slot.shape),
        ParamKind::Weight => {
            let bound = (6.0 / slot.fan_in as f64).sqrt();
            let n: usize = slot.shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
            Tensor::new(slot.shape.to_vec(), data).expect("shape matches count")
        }
    })
}

fn conv(tape: &mut Tape<'_>, input: Var, p: &ConvParams) -> Result<Var, NumericsError> {
    let w = tape.param(p.weight);
    let b = tape.param(p.bias);
    tape.conv1d(input, w, b, p.spec)
}

/// One merge step: `relu(h + res(h))` with `h = relu(conv_e(event)) + relu(conv_f(feature))`.
pub fn basic_module(
    tape: &mut Tape<'_>,
    feature: Var,
    event: Var,
    layer: &LayerParams,
) -> Result<Var, NumericsError> {
    let e = conv(tape, event, &layer.event)?;
    let e = tape.relu(e);
    let f = conv(tape, feature, &layer.feature)?;
    let f = tape.relu(f);
    let h = tape.add(e, f)?;

    let [a, b, c] = &layer.residual;
    let r = conv(tape, h, a)?;
    let r = tape.relu(r);
    let r = conv(tape, r, b)?;
    let r = tape.relu(r);
    let r = conv(tape, r, c)?;
    let sum = tape.add(h, r)?;
    Ok(tape.relu(sum))
}

/// Records the tree on `tape`, returning every layer output (last = top feature).
pub fn tree_layers(
    tape: &mut Tape<'_>,
    model: &ModelParams,
    window: &SampleWindow,
) -> Result<Vec<Var>, ModelError> {
    if window.k() != model.k {
        return Err(ModelError::WindowSize {
            expected: model.k,
            found: window.k(),
        });
    }
    let k = model.k;
    let mut feature = tape.input(window.embeddings[k - 1].clone());
    let mut outputs = Vec::with_capacity(k - 1);
    for (i, layer) in model.layers.iter().enumerate() {
        // Layer i (0-based) folds in the event i + 1 steps before the target.
        let event = tape.input(window.embeddings[k - 2 - i].clone());
        feature = basic_module(tape, feature, event, layer)?;
        outputs.push(feature);
    }
    Ok(outputs)
}

/// Probability nodes of both heads.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub resident: Var,
    pub activity: Var,
}

pub fn forward(
    tape: &mut Tape<'_>,
    model: &ModelParams,
    window: &SampleWindow,
) -> Result<HeadVars, ModelError> {
    let top = *tree_layers(tape, model, window)?
        .last()
        .expect("at least one layer");
    let flat = tape.flatten(top);
    let head = |tape: &mut Tape<'_>, p: DenseParams| -> Result<Var, NumericsError> {
        let w = tape.param(p.weight);
        let b = tape.param(p.bias);
        let logits = tape.dense(flat, w, b)?;
        tape.softmax(logits)
    };
    Ok(HeadVars {
        resident: head(tape, model.resident_head)?,
        activity: head(tape, model.activity_head)?,
    })
}

/// Sum of both heads' cross-entropies for `window`'s label.
pub fn cross_entropy_graph(
    tape: &mut Tape<'_>,
    model: &ModelParams,
    window: &SampleWindow,
) -> Result<Var, ModelError> {
    let heads = forward(tape, model, window)?;
    let r = tape.cross_entropy(heads.resident, window.label.resident)?;
    let a = tape.cross_entropy(heads.activity, window.label.activity)?;
    Ok(tape.add(r, a)?)
}

/// `l2_weight * Σ ‖W‖²` over weight tensors (biases excluded).
pub fn l2_graph(tape: &mut Tape<'_>, l2_weight: f64) -> Option<Var> {
    let ids: Vec<ParamId> = tape
        .params()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.kind == ParamKind::Weight)
        .map(|(i, _)| ParamId(i))
        .collect();
    let mut total: Option<Var> = None;
    for id in ids {
        let p = tape.param(id);
        let s = tape.sum_squares(p);
        total = Some(match total {
            Some(t) => tape.add(t, s).expect("scalars"),
            None => s,
        });
    }
    total.map(|t| tape.scale(t, l2_weight))
}

/// Full per-window objective: both cross-entropies plus the L2 penalty.
pub fn joint_loss_graph(
    tape: &mut Tape<'_>,
    model: &ModelParams,
    window: &SampleWindow,
    l2_weight: f64,
) -> Result<Var, ModelError> {
    let ce = cross_entropy_graph(tape, model, window)?;
    match l2_graph(tape, l2_weight) {
        Some(l2) => Ok(tape.add(ce, l2)?),
        None => Ok(ce),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub resident_probs: Tensor,
    pub activity_probs: Tensor,
}

impl Prediction {
    /// Argmax of each head; ties go to the lower class index.
    pub fn label(&self) -> LabelPair {
        LabelPair::new(self.resident_probs.argmax(), self.activity_probs.argmax())
    }
}

pub fn predict(model: &ModelParams, window: &SampleWindow) -> Result<Prediction, ModelError> {
    let mut tape = Tape::new(&model.params);
    let heads = forward(&mut tape, model, window)?;
    Ok(Prediction {
        resident_probs: tape.value(heads.resident).clone(),
        activity_probs: tape.value(heads.activity).clone(),
    })
}

/// Top feature `[64, vocab]` for `window`.
pub fn tree_forward(model: &ModelParams, window: &SampleWindow) -> Result<Tensor, ModelError> {
    Ok(tree_trace(model, window)?.pop().expect("at least one layer"))
}

/// Every layer's output feature map, first layer first.
pub fn tree_trace(model: &ModelParams, window: &SampleWindow) -> Result<Vec<Tensor>, ModelError> {
    let mut tape = Tape::new(&model.params);
    let vars = tree_layers(&mut tape, model, window)?;
    Ok(vars.into_iter().map(|v| tape.value(v).clone()).collect())
}

/// Finite-difference check of the full network at `k` on a random window.
///
/// Biases are drawn from `±0.1` instead of zero: with zero biases many
/// pre-activations of padded or empty positions sit exactly on the ReLU kink,
/// where central differences disagree with any one-sided derivative.
pub fn network_gradient_check(
    k: usize,
    vocab_size: usize,
    root_seed: u64,
    probes: usize,
    l2_weight: f64,
) -> Result<GradCheckReport, ModelError> {
    let mut model = init_params(k, vocab_size, root_seed)?;
    let mut rng = seed::rng(root_seed, seed::STREAM_GRADCHECK);
    for p in model.params.iter_mut() {
        if p.kind == ParamKind::Bias {
            p.value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
    let history: Vec<usize> = (0..k).map(|_| rng.gen_range(0..vocab_size)).collect();
    let label = LabelPair::new(rng.gen_range(0..RESIDENTS), rng.gen_range(0..ACTIVITIES));
    let window = SampleWindow::from_sensors(&history, k, vocab_size, label);
    let frozen = model.clone();
    let report = gradient_check(&mut model.params, probes, rng.gen(), |tape: &mut Tape<'_>| {
        joint_loss_graph(tape, &frozen, &window, l2_weight).map_err(|e| match e {
            ModelError::Numerics(n) => n,
            other => NumericsError::GradCheck(other.to_string()),
        })
    })?;
    Ok(report)
}
