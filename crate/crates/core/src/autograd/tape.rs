//! Gradient tape: an append-only record of executed operations.
//!
//! Each [`Var`] is a handle to one tape entry. Operations push a new entry
//! holding the computed value and the information its backward rule needs.
//! Because entries are only ever appended, an operation's inputs always
//! precede it, so [`Tape::backward`] can replay the rules in reverse order.

use std::cell::RefCell;
use std::collections::BTreeMap;

use crate::autograd::kernels::{self, Operand};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub(crate) enum Op<T> {
    Leaf,
    /// `lhs + rhs`, with `rhs` repeated over the leading axes of `lhs`.
    Add {
        lhs: usize,
        rhs: usize,
    },
    Sub {
        lhs: usize,
        rhs: usize,
    },
    Mul {
        lhs: usize,
        rhs: usize,
    },
    /// Product with a constant (no gradient flows into `factor`).
    MulConst {
        input: usize,
        factor: Tensor<T>,
    },
    Scale {
        input: usize,
        factor: T,
    },
    AddScalar {
        input: usize,
    },
    MatMul {
        lhs: usize,
        rhs: usize,
        lhs_kind: Operand,
        rhs_kind: Operand,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    /// `source[i]` is the input flat index feeding output flat index `i`.
    Gather {
        input: usize,
        source: Vec<usize>,
    },
    Reshape {
        input: usize,
    },
    Concat {
        inputs: Vec<usize>,
        axis: usize,
    },
    Sum {
        input: usize,
    },
    Mean {
        input: usize,
    },
    Softmax {
        input: usize,
        axis: usize,
    },
    LayerNorm {
        input: usize,
        gain: usize,
        bias: usize,
        normalized: Vec<T>,
        inv_std: Vec<T>,
    },
    Relu {
        input: usize,
    },
    Gelu {
        input: usize,
    },
    Sin {
        input: usize,
    },
    LogClamped {
        input: usize,
        floor: T,
    },
    /// One element per row of the last axis, selected by `indices`.
    Pick {
        input: usize,
        indices: Vec<usize>,
    },
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

/// Records operations for one forward pass.
///
/// A tape is built per training step and dropped afterwards. It is `Send`
/// but not `Sync`.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    params: RefCell<BTreeMap<ParamId, usize>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: usize,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A value that never receives a gradient (inputs, targets).
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_raw(value, Op::Leaf, false)
    }

    /// A differentiable leaf not owned by a [`ParamStore`].
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Records parameter `id` from `store`. Repeated calls for the same id
    /// return the same leaf so that gradients from every use accumulate.
    /// The value is read once, so a tape must not outlive changes to the
    /// store or be shared between stores.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Var<'_, T> {
        if let Some(&node) = self.params.borrow().get(&id) {
            return Var { tape: self, id: node };
        }
        let param = store.get(id);
        let var = self.push_raw(param.value().clone(), Op::Leaf, param.requires_grad());
        self.params.borrow_mut().insert(id, var.id);
        var
    }

    pub(crate) fn push_raw(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Pushes an operation result; it requires a gradient when any input does.
    pub(crate) fn push(&self, value: Tensor<T>, op: Op<T>, inputs: &[usize]) -> Var<'_, T> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|&i| nodes[i].requires_grad)
        };
        self.push_raw(value, op, requires_grad)
    }

    pub(crate) fn value_of(&self, id: usize) -> Tensor<T> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Replays backward rules from the scalar `loss` to every leaf.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(vec![T::one()]);

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            if nodes[id].requires_grad {
                backprop_node(&nodes, id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(nodes.iter())
            .map(|(g, node)| {
                g.filter(|_| node.requires_grad)
                    .map(|g| Tensor::new(node.value.shape().clone(), g).expect("gradient matches value shape"))
            })
            .collect();
        Ok(Gradients {
            grads,
            params: self.params.borrow().clone(),
        })
    }
}

/// Accumulator for the gradient flowing into `target`.
fn slot<'g, T: Scalar>(
    nodes: &[Node<T>],
    grads: &'g mut [Option<Vec<T>>],
    target: usize,
) -> Option<&'g mut Vec<T>> {
    if !nodes[target].requires_grad {
        return None;
    }
    let len = nodes[target].value.numel();
    Some(grads[target].get_or_insert_with(|| vec![T::zero(); len]))
}

fn backprop_node<T: Scalar>(nodes: &[Node<T>], id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let node = &nodes[id];
    match &node.op {
        Op::Leaf => {}
        Op::Add { lhs, rhs } | Op::Sub { lhs, rhs } => {
            let negate = matches!(node.op, Op::Sub { .. });
            if let Some(gl) = slot(nodes, grads, *lhs) {
                for (a, &b) in gl.iter_mut().zip(g) {
                    *a += b;
                }
            }
            if let Some(gr) = slot(nodes, grads, *rhs) {
                let len = gr.len();
                for (i, &b) in g.iter().enumerate() {
                    if negate {
                        gr[i % len] -= b;
                    } else {
                        gr[i % len] += b;
                    }
                }
            }
        }
        Op::Mul { lhs, rhs } => {
            let lv = nodes[*lhs].value.data();
            let rv = nodes[*rhs].value.data();
            let rlen = rv.len();
            if let Some(gl) = slot(nodes, grads, *lhs) {
                for (i, a) in gl.iter_mut().enumerate() {
                    *a += g[i] * rv[i % rlen];
                }
            }
            if let Some(gr) = slot(nodes, grads, *rhs) {
                for (i, &b) in g.iter().enumerate() {
                    gr[i % rlen] += b * lv[i];
                }
            }
        }
        Op::MulConst { input, factor } => {
            let f = factor.data();
            let flen = f.len();
            if let Some(gi) = slot(nodes, grads, *input) {
                for (i, a) in gi.iter_mut().enumerate() {
                    *a += g[i] * f[i % flen];
                }
            }
        }
        Op::Scale { input, factor } => {
            if let Some(gi) = slot(nodes, grads, *input) {
                for (a, &b) in gi.iter_mut().zip(g) {
                    *a += b * *factor;
                }
            }
        }
        Op::AddScalar { input } | Op::Reshape { input } => {
            if let Some(gi) = slot(nodes, grads, *input) {
                for (a, &b) in gi.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        Op::MatMul {
            lhs,
            rhs,
            lhs_kind,
            rhs_kind,
            batch,
            m,
            k,
            n,
        } => {
            let lv = nodes[*lhs].value.data();
            let rv = nodes[*rhs].value.data();
            if let Some(gl) = slot(nodes, grads, *lhs) {
                kernels::matmul_grad_lhs(g, rv, *rhs_kind, gl, *lhs_kind, *batch, *m, *k, *n);
            }
            if let Some(gr) = slot(nodes, grads, *rhs) {
                kernels::matmul_grad_rhs(lv, *lhs_kind, g, gr, *rhs_kind, *batch, *m, *k, *n);
            }
        }
        Op::Gather { input, source } => {
            if let Some(gi) = slot(nodes, grads, *input) {
                for (&src, &b) in source.iter().zip(g) {
                    gi[src] += b;
                }
            }
        }
        Op::Concat { inputs, axis } => {
            let out_dims = node.value.dims();
            let (outer, total, inner) = kernels::axis_blocks(out_dims, *axis);
            let mut offset = 0;
            for &input in inputs {
                let n = nodes[input].value.dims()[*axis];
                if let Some(gi) = slot(nodes, grads, input) {
                    for o in 0..outer {
                        let src = (o * total + offset) * inner;
                        let dst = o * n * inner;
                        for (a, &b) in gi[dst..dst + n * inner].iter_mut().zip(&g[src..src + n * inner]) {
                            *a += b;
                        }
                    }
                }
                offset += n;
            }
        }
        Op::Sum { input } => {
            if let Some(gi) = slot(nodes, grads, *input) {
                for a in gi.iter_mut() {
                    *a += g[0];
                }
            }
        }
        Op::Mean { input } => {
            if let Some(gi) = slot(nodes, grads, *input) {
                let scale = g[0] / T::of(gi.len() as f64);
                for a in gi.iter_mut() {
                    *a += scale;
                }
            }
        }
        Op::Softmax { input, axis } => {
            let y = node.value.data();
            let (outer, n, inner) = kernels::axis_blocks(node.value.dims(), *axis);
            if let Some(gi) = slot(nodes, grads, *input) {
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * n * inner + i;
                        let mut dot = T::zero();
                        for j in 0..n {
                            dot += g[base + j * inner] * y[base + j * inner];
                        }
                        for j in 0..n {
                            let at = base + j * inner;
                            gi[at] += y[at] * (g[at] - dot);
                        }
                    }
                }
            }
        }
        Op::LayerNorm {
            input,
            gain,
            bias,
            normalized,
            inv_std,
        } => {
            let d = nodes[*gain].value.numel();
            let rows = normalized.len() / d;
            let gain_v = nodes[*gain].value.data();
            if let Some(gg) = slot(nodes, grads, *gain) {
                for r in 0..rows {
                    for j in 0..d {
                        gg[j] += g[r * d + j] * normalized[r * d + j];
                    }
                }
            }
            if let Some(gb) = slot(nodes, grads, *bias) {
                for r in 0..rows {
                    for j in 0..d {
                        gb[j] += g[r * d + j];
                    }
                }
            }
            if let Some(gi) = slot(nodes, grads, *input) {
                let dn = T::of(d as f64);
                for r in 0..rows {
                    let row = r * d..(r + 1) * d;
                    let mut sum_dy = T::zero();
                    let mut sum_dy_xhat = T::zero();
                    for j in 0..d {
                        let dy = g[row.start + j] * gain_v[j];
                        sum_dy += dy;
                        sum_dy_xhat += dy * normalized[row.start + j];
                    }
                    for j in 0..d {
                        let dy = g[row.start + j] * gain_v[j];
                        let xhat = normalized[row.start + j];
                        gi[row.start + j] += inv_std[r] / dn * (dn * dy - sum_dy - xhat * sum_dy_xhat);
                    }
                }
            }
        }
        Op::Relu { input } => {
            let x = nodes[*input].value.data();
            if let Some(gi) = slot(nodes, grads, *input) {
                for ((a, &b), &xv) in gi.iter_mut().zip(g).zip(x) {
                    if xv > T::zero() {
                        *a += b;
                    }
                }
            }
        }
        Op::Gelu { input } => {
            let x = nodes[*input].value.data();
            if let Some(gi) = slot(nodes, grads, *input) {
                for ((a, &b), &xv) in gi.iter_mut().zip(g).zip(x) {
                    *a += b * kernels::gelu_derivative(xv);
                }
            }
        }
        Op::Sin { input } => {
            let x = nodes[*input].value.data();
            if let Some(gi) = slot(nodes, grads, *input) {
                for ((a, &b), &xv) in gi.iter_mut().zip(g).zip(x) {
                    *a += b * xv.cos();
                }
            }
        }
        Op::LogClamped { input, floor } => {
            let x = nodes[*input].value.data();
            if let Some(gi) = slot(nodes, grads, *input) {
                for ((a, &b), &xv) in gi.iter_mut().zip(g).zip(x) {
                    if xv > *floor {
                        *a += b / xv;
                    }
                }
            }
        }
        Op::Pick { input, indices } => {
            let c = nodes[*input].value.dims().last().copied().unwrap_or(1);
            if let Some(gi) = slot(nodes, grads, *input) {
                for (row, (&idx, &b)) in indices.iter().zip(g).enumerate() {
                    gi[row * c + idx] += b;
                }
            }
        }
    }
}

/// Result of [`Tape::backward`]: d(loss)/d(value) for every recorded value
/// that required a gradient and was reached from the loss.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: BTreeMap<ParamId, usize>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, var: &Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient of a parameter recorded via [`Tape::param`]. `None` means the
    /// parameter was unused or did not influence the loss.
    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(&id).and_then(|&n| self.grads[n].as_ref())
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.params
            .iter()
            .filter_map(|(&id, &n)| self.grads[n].as_ref().map(|g| (id, g)))
    }
}
