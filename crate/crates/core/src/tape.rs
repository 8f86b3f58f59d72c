//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Nodes are appended in execution order, so reverse insertion order is
//! a reverse topological order and backward visits each node exactly
//! once. Values are checked for NaN/Inf as they are produced; the
//! offending node is named in the error.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::ops::conv::ConvDesc;
use crate::ops::{
    global_avg_pool_backward, global_avg_pool_forward, grouped_conv_backward_input,
    grouped_conv_backward_weights, grouped_conv_forward, max_pool2_backward, max_pool2_forward,
    relu_backward, relu_forward, softmax_cross_entropy_backward, softmax_cross_entropy_forward,
};
use crate::tensor::{check_same_shape, Element, Shape, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op<E: Element> {
    Leaf,
    Add,
    Mul,
    SumAll,
    Relu,
    GroupedConv(ConvDesc),
    MaxPool2(Vec<u8>),
    GlobalAvgPool,
    SoftmaxCrossEntropy {
        labels: Vec<usize>,
        softmax: Tensor<E>,
    },
}

struct Node<E: Element> {
    name: String,
    op: Op<E>,
    inputs: Vec<NodeId>,
    value: Tensor<E>,
    requires_grad: bool,
}

/// A single forward pass recorded for differentiation.
pub struct Graph<E: Element> {
    nodes: Vec<Node<E>>,
}

impl<E: Element> Default for Graph<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> Graph<E> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<E> {
        &self.nodes[id.0].value
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    fn push(
        &mut self,
        name: String,
        op: Op<E>,
        inputs: Vec<NodeId>,
        value: Tensor<E>,
    ) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NumericFailure { node: name });
        }
        let requires_grad = matches!(op, Op::Leaf) && name_is_param(&name)
            || inputs.iter().any(|&i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            name,
            op,
            inputs,
            value,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Trainable leaf: receives a gradient in backward.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor<E>) -> Result<NodeId> {
        self.push(format!("param:{}", name.into()), Op::Leaf, Vec::new(), value)
    }

    /// Constant leaf: no gradient is computed for it or through it
    /// alone (paths from params still propagate).
    pub fn input(&mut self, name: impl Into<String>, value: Tensor<E>) -> Result<NodeId> {
        self.push(name.into(), Op::Leaf, Vec::new(), value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        check_same_shape("add", va, vb)?;
        let mut out = va.clone();
        for (o, &r) in out.as_mut_slice().iter_mut().zip(vb.as_slice()) {
            *o = *o + r;
        }
        let name = format!("add#{}", self.nodes.len());
        self.push(name, Op::Add, vec![a, b], out)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        check_same_shape("mul", va, vb)?;
        let mut out = va.clone();
        for (o, &r) in out.as_mut_slice().iter_mut().zip(vb.as_slice()) {
            *o = *o * r;
        }
        let name = format!("mul#{}", self.nodes.len());
        self.push(name, Op::Mul, vec![a, b], out)
    }

    /// Sum of all elements, in flat index order, to a scalar.
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let mut acc = E::zero();
        for &v in self.nodes[x.0].value.as_slice() {
            acc = acc + v;
        }
        let name = format!("sum#{}", self.nodes.len());
        self.push(name, Op::SumAll, vec![x], Tensor::scalar(acc))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let out = relu_forward(&self.nodes[x.0].value);
        let name = format!("relu#{}", self.nodes.len());
        self.push(name, Op::Relu, vec![x], out)
    }

    pub fn grouped_conv(&mut self, desc: ConvDesc, x: NodeId, weights: &[NodeId]) -> Result<NodeId> {
        let ws: Vec<Tensor<E>> = weights.iter().map(|&w| self.nodes[w.0].value.clone()).collect();
        let out = grouped_conv_forward(&desc, &self.nodes[x.0].value, &ws)?;
        let mut inputs = vec![x];
        inputs.extend_from_slice(weights);
        let name = format!("conv{}x{}#{}", desc.kh, desc.kw, self.nodes.len());
        self.push(name, Op::GroupedConv(desc), inputs, out)
    }

    pub fn max_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        let (out, argmax) = max_pool2_forward(&self.nodes[x.0].value)?;
        let name = format!("maxpool#{}", self.nodes.len());
        self.push(name, Op::MaxPool2(argmax), vec![x], out)
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let out = global_avg_pool_forward(&self.nodes[x.0].value);
        let name = format!("gap#{}", self.nodes.len());
        self.push(name, Op::GlobalAvgPool, vec![x], out)
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: Vec<usize>) -> Result<NodeId> {
        let (loss, softmax) = softmax_cross_entropy_forward(&self.nodes[logits.0].value, &labels)?;
        let name = format!("softmax_ce#{}", self.nodes.len());
        self.push(
            name,
            Op::SoftmaxCrossEntropy { labels, softmax },
            vec![logits],
            Tensor::scalar(loss),
        )
    }

    /// Reverse pass from a scalar loss node. Gradients sum over all
    /// paths; each op's gradient is checked finite as it is produced.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<E>> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.shape() != Shape::scalar() {
            return Err(Error::ShapeMismatch(format!(
                "backward needs a scalar loss, got {}",
                loss_node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<E>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(E::one()));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if let Op::Leaf = node.op {
                grads[id] = Some(g);
                continue;
            }
            if !node.requires_grad {
                continue;
            }
            self.backward_step(node, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn backward_step(
        &self,
        node: &Node<E>,
        g: &Tensor<E>,
        grads: &mut [Option<Tensor<E>>],
    ) -> Result<()> {
        match &node.op {
            Op::Leaf => unreachable!("leaves handled by the caller"),
            Op::Add => {
                self.accumulate(grads, node.inputs[0], g.clone(), &node.name)?;
                self.accumulate(grads, node.inputs[1], g.clone(), &node.name)?;
            }
            Op::Mul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let mut ga = g.clone();
                for (o, &v) in ga.as_mut_slice().iter_mut().zip(self.nodes[b.0].value.as_slice()) {
                    *o = *o * v;
                }
                let mut gb = g.clone();
                for (o, &v) in gb.as_mut_slice().iter_mut().zip(self.nodes[a.0].value.as_slice()) {
                    *o = *o * v;
                }
                self.accumulate(grads, a, ga, &node.name)?;
                self.accumulate(grads, b, gb, &node.name)?;
            }
            Op::SumAll => {
                let x = node.inputs[0];
                let dx = Tensor::filled(self.nodes[x.0].value.shape(), g.item());
                self.accumulate(grads, x, dx, &node.name)?;
            }
            Op::Relu => {
                let x = node.inputs[0];
                let dx = relu_backward(g, &self.nodes[x.0].value);
                self.accumulate(grads, x, dx, &node.name)?;
            }
            Op::GroupedConv(desc) => {
                let x = node.inputs[0];
                let weight_ids = &node.inputs[1..];
                if self.nodes[x.0].requires_grad {
                    let ws: Vec<Tensor<E>> = weight_ids
                        .iter()
                        .map(|&w| self.nodes[w.0].value.clone())
                        .collect();
                    let dx = grouped_conv_backward_input(desc, g, &ws)?;
                    self.accumulate(grads, x, dx, &node.name)?;
                }
                if weight_ids.iter().any(|&w| self.nodes[w.0].requires_grad) {
                    let dws = grouped_conv_backward_weights(desc, &self.nodes[x.0].value, g)?;
                    for (&wid, dw) in weight_ids.iter().zip(dws) {
                        if self.nodes[wid.0].requires_grad {
                            self.accumulate(grads, wid, dw, &node.name)?;
                        }
                    }
                }
            }
            Op::MaxPool2(argmax) => {
                let x = node.inputs[0];
                let dx = max_pool2_backward(g, argmax, self.nodes[x.0].value.shape())?;
                self.accumulate(grads, x, dx, &node.name)?;
            }
            Op::GlobalAvgPool => {
                let x = node.inputs[0];
                let dx = global_avg_pool_backward(g, self.nodes[x.0].value.shape())?;
                self.accumulate(grads, x, dx, &node.name)?;
            }
            Op::SoftmaxCrossEntropy { labels, softmax } => {
                let dx = softmax_cross_entropy_backward(g.item(), softmax, labels);
                self.accumulate(grads, node.inputs[0], dx, &node.name)?;
            }
        }
        Ok(())
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Tensor<E>>],
        id: NodeId,
        add: Tensor<E>,
        producer: &str,
    ) -> Result<()> {
        if !self.nodes[id.0].requires_grad {
            return Ok(());
        }
        if !add.all_finite() {
            return Err(Error::NumericFailure {
                node: producer.to_string(),
            });
        }
        match &mut grads[id.0] {
            Some(t) => {
                for (o, &v) in t.as_mut_slice().iter_mut().zip(add.as_slice()) {
                    *o = *o + v;
                }
            }
            slot @ None => *slot = Some(add),
        }
        Ok(())
    }
}

fn name_is_param(name: &str) -> bool {
    name.starts_with("param:")
}

/// Gradients keyed by node id, produced by [`Graph::backward`].
pub struct Gradients<E: Element> {
    grads: Vec<Option<Tensor<E>>>,
}

impl<E: Element> Gradients<E> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<E>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<E>> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

/// One named parameter: its value and the gradient of the last
/// backward pass (zeros before any pass).
#[derive(Debug, Clone)]
pub struct ParamEntry<E: Element> {
    pub value: Tensor<E>,
    pub grad: Tensor<E>,
}

/// Insertion-ordered map of named parameters. Iteration order is the
/// insertion order, which fixes checkpoint layout, optimizer state
/// alignment, and initialization draws.
#[derive(Debug)]
pub struct ParamStore<E: Element> {
    entries: IndexMap<String, ParamEntry<E>>,
}

impl<E: Element> Default for ParamStore<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> ParamStore<E> {
    pub fn new() -> Self {
        ParamStore {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<E>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::InvalidSpec(format!("duplicate parameter {name}")));
        }
        let grad = Tensor::zeros(value.shape());
        self.entries.insert(name, ParamEntry { value, grad });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry<E>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamEntry<E>> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry<E>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry<E>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn zero_grads(&mut self) {
        for entry in self.entries.values_mut() {
            entry.grad.as_mut_slice().fill(E::zero());
        }
    }

    /// Total weight elements across all parameters.
    pub fn total_elements(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    /// Converts values (and zeroed grads) elementwise through f64.
    pub fn cast<T: Element>(&self) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (name, entry) in self.iter() {
            out.insert(name, entry.value.cast()).expect("unique names");
        }
        out
    }
}

/// Runs backward from `loss` and writes each bound parameter's
/// gradient into the store (zeros for parameters the loss does not
/// depend on). Returns the loss value.
pub fn forward_backward<E: Element>(
    graph: &Graph<E>,
    loss: NodeId,
    bindings: &[(String, NodeId)],
    store: &mut ParamStore<E>,
) -> Result<E> {
    let loss_value = graph.value(loss).item();
    let mut grads = graph.backward(loss)?;
    for (name, id) in bindings {
        let entry = store
            .get_mut(name)
            .ok_or_else(|| Error::InvalidSpec(format!("unbound parameter {name}")))?;
        match grads.take(*id) {
            Some(g) => {
                check_same_shape("gradient", &g, &entry.value)?;
                entry.grad = g;
            }
            None => entry.grad = Tensor::zeros(entry.value.shape()),
        }
    }
    Ok(loss_value)
}
