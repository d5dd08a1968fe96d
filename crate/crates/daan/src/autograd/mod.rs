//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Every forward operation appends one node to a [`Tape`]; [`Tape::backward`]
//! walks the nodes in reverse and accumulates gradients. Tensors are
//! `f32`-typed `ndarray` arrays; reductions (means, losses, pooled features)
//! accumulate in `f64` so that loss values and gradient checks are not limited
//! by single-precision summation order.
//!
//! Gradient routing is structural: a parameter enters a tape either as a
//! trainable leaf (gradients collected for it) or as a frozen leaf (gradients
//! still flow *through* the op to its other inputs, but none are recorded for
//! the parameter itself). A frozen discriminator can therefore be fooled by
//! the feature extractor without ever receiving an update, and a detached
//! tensor stops gradient flow entirely.

pub mod check;
mod conv;
mod ops;

use std::collections::HashMap;

use ndarray::{ArrayD, IxDyn};

use crate::nn::{ParamId, ParamStore};

pub use ops::Op;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Whether a parameter leaf collects gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamMode {
    Trainable,
    Frozen,
}

pub(crate) struct Node {
    pub value: ArrayD<f32>,
    pub op: Op,
}

/// A scalar loss: the tape node driving backprop plus the exact value
/// accumulated in `f64`.
#[derive(Debug, Clone, Copy)]
pub struct LossValue {
    pub var: Var,
    pub value: f64,
}

/// Per-parameter gradients collected after a backward pass, aligned with the
/// [`ParamStore`] the tape was built against.
pub struct Gradients {
    by_param: Vec<Option<ArrayD<f32>>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&ArrayD<f32>> {
        self.by_param.get(id.index()).and_then(|g| g.as_ref())
    }

    /// Euclidean norm of the gradient for `id`; zero when no gradient was
    /// recorded (frozen or unused parameter).
    pub fn norm(&self, id: ParamId) -> f64 {
        match self.get(id) {
            Some(g) => g.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt(),
            None => 0.0,
        }
    }

    pub fn is_exactly_zero(&self, id: ParamId) -> bool {
        match self.get(id) {
            Some(g) => g.iter().all(|&v| v == 0.0),
            None => true,
        }
    }
}

/// Recording tape for one forward/backward pass.
pub struct Tape {
    nodes: Vec<Node>,
    param_memo: HashMap<usize, (Var, ParamMode)>,
    n_params: usize,
}

impl Tape {
    pub fn new(store: &ParamStore) -> Self {
        Tape { nodes: Vec::new(), param_memo: HashMap::new(), n_params: store.len() }
    }

    /// Tape without parameter bookkeeping, for pure tensor math in tests.
    pub fn detached() -> Self {
        Tape { nodes: Vec::new(), param_memo: HashMap::new(), n_params: 0 }
    }

    pub(crate) fn push(&mut self, value: ArrayD<f32>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf: no gradient is recorded behind it.
    pub fn constant(&mut self, value: ArrayD<f32>) -> Var {
        self.push(value, Op::Leaf { param: None })
    }

    /// Variable leaf that is not a stored parameter but still receives a
    /// gradient slot (used by the finite-difference harness).
    pub fn input(&mut self, value: ArrayD<f32>) -> Var {
        self.push(value, Op::Leaf { param: None })
    }

    /// Leaf for a stored parameter. Repeated requests for the same parameter
    /// return the same node, so weight sharing holds by identity.
    pub fn param(&mut self, store: &ParamStore, id: ParamId, mode: ParamMode) -> Var {
        if let Some(&(var, prev_mode)) = self.param_memo.get(&id.index()) {
            assert_eq!(
                prev_mode, mode,
                "parameter {} used with conflicting modes on one tape",
                store.name(id)
            );
            return var;
        }
        let param = match mode {
            ParamMode::Trainable => Some(id),
            ParamMode::Frozen => None,
        };
        let var = self.push(store.value(id).clone(), Op::Leaf { param });
        self.param_memo.insert(id.index(), (var, mode));
        var
    }

    /// Copy of a node's value with gradient flow severed.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &ArrayD<f32> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f32 {
        debug_assert_eq!(self.nodes[v.0].value.ndim(), 0);
        self.nodes[v.0].value[IxDyn(&[])]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of distinct parameters that entered this tape as leaves.
    pub fn distinct_param_leaves(&self) -> usize {
        self.param_memo.len()
    }

    /// Reverse pass from a scalar root. Returns gradients for every node;
    /// use [`Tape::param_gradients`] to project onto stored parameters.
    pub fn backward(&self, root: Var) -> NodeGradients {
        assert_eq!(self.nodes[root.0].value.ndim(), 0, "backward root must be a scalar");
        let mut grads: Vec<Option<ArrayD<f32>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(ArrayD::from_elem(IxDyn(&[]), 1.0f32));
        for idx in (0..=root.0).rev() {
            let grad = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            ops::backward_step(self, idx, &grad, &mut grads);
            grads[idx] = Some(grad);
        }
        NodeGradients { grads }
    }

    /// Project node gradients onto the parameter store layout. Trainable
    /// leaves that received no gradient stay `None` (treated as exact zero).
    pub fn param_gradients(&self, node_grads: &NodeGradients) -> Gradients {
        let mut by_param: Vec<Option<ArrayD<f32>>> = Vec::new();
        by_param.resize_with(self.n_params, || None);
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { param: Some(id) } = node.op {
                if let Some(g) = &node_grads.grads[idx] {
                    match &mut by_param[id.index()] {
                        Some(acc) => *acc += g,
                        slot => *slot = Some(g.clone()),
                    }
                }
            }
        }
        Gradients { by_param }
    }
}

/// Gradients indexed by tape node, as produced by [`Tape::backward`].
pub struct NodeGradients {
    grads: Vec<Option<ArrayD<f32>>>,
}

impl NodeGradients {
    pub fn get(&self, v: Var) -> Option<&ArrayD<f32>> {
        self.grads[v.0].as_ref()
    }
}

pub(crate) fn accumulate(slot: &mut Option<ArrayD<f32>>, g: ArrayD<f32>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}
