//! Linear recording tape for reverse-mode gradients.
//!
//! Each forward call appends one node holding its output value. Parameters are
//! referenced by id and read from the borrowed [`ParamSet`], never copied.
//! [`Tape::backward`] walks the nodes in reverse and returns per-parameter
//! gradients, which the caller folds into [`ParamTensor::grad`] with
//! [`ParamSet::accumulate`].

use std::collections::HashMap;

use super::ops::{self, ConvSpec};
use super::{NumericsError, Tensor};

/// Index of a parameter inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Whether a parameter participates in the L2 penalty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
    pub grad: Tensor,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, kind: ParamKind, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            kind,
            value,
            grad,
        }
    }
}

/// Ordered, name-addressable collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<ParamTensor>,
    by_name: HashMap<String, ParamId>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, param: ParamTensor) -> Result<ParamId, NumericsError> {
        if self.by_name.contains_key(&param.name) {
            return Err(NumericsError::DuplicateParam(param.name));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(param.name.clone(), id);
        self.params.push(param);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &ParamTensor {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamTensor {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&ParamTensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.params.iter_mut()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// `grad += scale * g` for every parameter that received a gradient.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) {
        for (p, g) in self.params.iter_mut().zip(&grads.per_param) {
            if let Some(g) = g {
                p.grad.add_scaled(g, scale);
            }
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv1d {
        input: Var,
        weights: Var,
        bias: Var,
        spec: ConvSpec,
    },
    Relu(Var),
    Add(Var, Var),
    Flatten(Var),
    Dense {
        input: Var,
        weights: Var,
        bias: Var,
    },
    Softmax(Var),
    CrossEntropy {
        probs: Var,
        target: usize,
    },
    SumSquares(Var),
    Scale(Var, f64),
}

#[derive(Debug)]
struct Node {
    op: Op,
    /// `None` for parameter nodes, whose value lives in the `ParamSet`.
    value: Option<Tensor>,
}

/// Gradients produced by one backward pass, indexed like the `ParamSet`.
#[derive(Clone, Debug)]
pub struct Gradients {
    per_param: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.per_param.get(id.0).and_then(Option::as_ref)
    }
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => &self.params.get(*id).value,
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, op: Op, value: Option<Tensor>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Op::Input, Some(value))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        assert!(id.0 < self.params.len(), "unknown parameter id {}", id.0);
        self.push(Op::Param(id), None)
    }

    pub fn conv1d(
        &mut self,
        input: Var,
        weights: Var,
        bias: Var,
        spec: ConvSpec,
    ) -> Result<Var, NumericsError> {
        let out = ops::conv1d(self.value(input), self.value(weights), self.value(bias), &spec)?;
        Ok(self.push(
            Op::Conv1d {
                input,
                weights,
                bias,
                spec,
            },
            Some(out),
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu(self.value(x));
        self.push(Op::Relu(x), Some(out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(Op::Add(a, b), Some(out)))
    }

    /// Row-major flatten to rank 1 (channel-major for `[c, len]`).
    pub fn flatten(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = t.clone().reshape(&[t.len()]).expect("flatten preserves length");
        self.push(Op::Flatten(x), Some(out))
    }

    pub fn dense(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var, NumericsError> {
        let out = ops::dense(self.value(input), self.value(weights), self.value(bias))?;
        Ok(self.push(
            Op::Dense {
                input,
                weights,
                bias,
            },
            Some(out),
        ))
    }

    pub fn softmax(&mut self, logits: Var) -> Result<Var, NumericsError> {
        let out = ops::softmax(self.value(logits))?;
        Ok(self.push(Op::Softmax(logits), Some(out)))
    }

    pub fn cross_entropy(&mut self, probs: Var, target: usize) -> Result<Var, NumericsError> {
        let loss = ops::cross_entropy(self.value(probs), target)?;
        Ok(self.push(Op::CrossEntropy { probs, target }, Some(Tensor::scalar(loss))))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).sum_squares();
        self.push(Op::SumSquares(x), Some(Tensor::scalar(s)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= factor);
        self.push(Op::Scale(x, factor), Some(out))
    }

    /// Reverse sweep from a scalar `loss`, seeding its adjoint with 1.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        if self.nodes.is_empty() {
            return Err(NumericsError::NoForward);
        }
        if loss.0 >= self.nodes.len() {
            return Err(NumericsError::NoForward);
        }
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(NumericsError::NotScalar {
                shape: loss_value.shape().to_vec(),
            });
        }

        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::new(loss_value.shape().to_vec(), vec![1.0])?);
        let mut per_param: Vec<Option<Tensor>> = vec![None; self.params.len()];

        fn give(adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut adj[v.0] {
                Some(acc) => acc.add_scaled(&g, 1.0),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Param(id) => match &mut per_param[id.0] {
                    Some(acc) => acc.add_scaled(&g, 1.0),
                    slot => *slot = Some(g),
                },
                Op::Conv1d {
                    input,
                    weights,
                    bias,
                    spec,
                } => {
                    let (gx, gw, gb) =
                        ops::conv1d_backward(self.value(*input), self.value(*weights), spec, &g);
                    if self.wants_grad(*input) {
                        give(&mut adj, *input, gx);
                    }
                    give(&mut adj, *weights, gw);
                    give(&mut adj, *bias, gb);
                }
                Op::Relu(x) => {
                    let gx = ops::relu_backward(self.value(*x), &g);
                    give(&mut adj, *x, gx);
                }
                Op::Add(a, b) => {
                    give(&mut adj, *b, g.clone());
                    give(&mut adj, *a, g);
                }
                Op::Flatten(x) => {
                    let shape = self.value(*x).shape().to_vec();
                    give(&mut adj, *x, g.reshape(&shape)?);
                }
                Op::Dense {
                    input,
                    weights,
                    bias,
                } => {
                    let (gx, gw, gb) =
                        ops::dense_backward(self.value(*input), self.value(*weights), &g);
                    if self.wants_grad(*input) {
                        give(&mut adj, *input, gx);
                    }
                    give(&mut adj, *weights, gw);
                    give(&mut adj, *bias, gb);
                }
                Op::Softmax(x) => {
                    let out = self.nodes[idx].value.as_ref().expect("softmax output");
                    give(&mut adj, *x, ops::softmax_backward(out, &g));
                }
                Op::CrossEntropy { probs, target } => {
                    let seed = g.data()[0];
                    let gp = ops::cross_entropy_backward(self.value(*probs), *target, seed);
                    give(&mut adj, *probs, gp);
                }
                Op::SumSquares(x) => {
                    let seed = g.data()[0];
                    let mut gx = self.value(*x).clone();
                    gx.data_mut().iter_mut().for_each(|v| *v *= 2.0 * seed);
                    give(&mut adj, *x, gx);
                }
                Op::Scale(x, factor) => {
                    let mut gx = g;
                    gx.data_mut().iter_mut().for_each(|v| *v *= factor);
                    give(&mut adj, *x, gx);
                }
            }
        }
        Ok(Gradients { per_param })
    }

    /// Inputs are constants; skip computing their adjoint when nothing upstream needs it.
    fn wants_grad(&self, v: Var) -> bool {
        !matches!(self.nodes[v.0].op, Op::Input)
    }
}
