//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every primitive applied during a forward pass together
//! with the values its backward rule needs. [`Graph::backward`] walks the tape
//! in exact reverse order and never mutates it, so repeated calls return the
//! same gradients.

use super::ops;
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{invalid, shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub enum Op {
    Input,
    Param(usize),
    Conv3d { input: NodeId, kernels: NodeId, bias: NodeId, stride: usize },
    MaxPool3d { input: NodeId, window: usize, stride: usize, argmax: Vec<usize> },
    Upsample3d { input: NodeId, factor: usize },
    Relu(NodeId),
    Sigmoid(NodeId),
    Linear { input: NodeId, weights: NodeId, bias: NodeId },
    Reshape(NodeId),
    Concat(Vec<NodeId>),
    Slice { input: NodeId, start: usize, len: usize },
    Mse { prediction: NodeId, target: NodeId },
    SquaredDistance { a: NodeId, b: NodeId },
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of a forward computation.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradients for every parameter of `store` referenced by `graph`,
    /// zero-filled for parameters the loss does not depend on.
    pub fn for_params(&self, graph: &Graph, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        for (i, node) in graph.nodes.iter().enumerate() {
            if let (Op::Param(p), Some(g)) = (&node.op, &self.grads[i]) {
                out[*p].add_assign(g);
            }
        }
        out
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, index: usize) -> NodeId {
        self.push(store.get(index).clone(), Op::Param(index))
    }

    pub fn conv3d(&mut self, input: NodeId, kernels: NodeId, bias: NodeId, stride: usize) -> Result<NodeId> {
        let v = ops::conv3d(self.value(input), self.value(kernels), self.value(bias), stride)?;
        Ok(self.push(v, Op::Conv3d { input, kernels, bias, stride }))
    }

    pub fn max_pool3d(&mut self, input: NodeId, window: usize, stride: usize) -> Result<NodeId> {
        let (v, argmax) = ops::max_pool3d(self.value(input), window, stride)?;
        Ok(self.push(v, Op::MaxPool3d { input, window, stride, argmax }))
    }

    pub fn upsample3d(&mut self, input: NodeId, factor: usize) -> Result<NodeId> {
        let v = ops::upsample3d(self.value(input), factor)?;
        Ok(self.push(v, Op::Upsample3d { input, factor }))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let v = ops::relu(self.value(input));
        self.push(v, Op::Relu(input))
    }

    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        let v = ops::sigmoid(self.value(input));
        self.push(v, Op::Sigmoid(input))
    }

    pub fn linear(&mut self, input: NodeId, weights: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = ops::fully_connected(self.value(input), self.value(weights), self.value(bias))?;
        Ok(self.push(v, Op::Linear { input, weights, bias }))
    }

    pub fn reshape(&mut self, input: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(input).clone().reshape(shape)?;
        Ok(self.push(v, Op::Reshape(input)))
    }

    /// Concatenates the flattened values of `parts` into a vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let data = parts.iter().flat_map(|&p| self.value(p).data().iter().copied()).collect();
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let src = self.value(input);
        if len == 0 || start + len > src.len() {
            return Err(shape_err(format!(
                "slice [{start}, {}) out of range for {} values",
                start + len,
                src.len()
            )));
        }
        let v = Tensor::vector(src.data()[start..start + len].to_vec());
        Ok(self.push(v, Op::Slice { input, start, len }))
    }

    pub fn mse(&mut self, prediction: NodeId, target: NodeId) -> Result<NodeId> {
        let v = ops::mse(self.value(prediction), self.value(target))?;
        Ok(self.push(Tensor::scalar(v), Op::Mse { prediction, target }))
    }

    /// `‖a − b‖²` (sum, not mean).
    pub fn squared_distance(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).len() != self.value(b).len() {
            return Err(shape_err(format!(
                "squared_distance lengths differ: {} vs {}",
                self.value(a).len(),
                self.value(b).len()
            )));
        }
        let v = ops::sum_squared_diff(self.value(a), self.value(b));
        Ok(self.push(Tensor::scalar(v), Op::SquaredDistance { a, b }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err(format!(
                "add shapes differ: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn scale(&mut self, input: NodeId, k: f64) -> NodeId {
        let mut v = self.value(input).clone();
        v.scale_assign(k);
        self.push(v, Op::Scale(input, k))
    }

    /// Recomputes every node from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut vals: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Input | Op::Param(_) => node.value.clone(),
                Op::Conv3d { input, kernels, bias, stride } => {
                    ops::conv3d(&vals[input.0], &vals[kernels.0], &vals[bias.0], *stride)?
                }
                Op::MaxPool3d { input, window, stride, .. } => {
                    ops::max_pool3d(&vals[input.0], *window, *stride)?.0
                }
                Op::Upsample3d { input, factor } => ops::upsample3d(&vals[input.0], *factor)?,
                Op::Relu(x) => ops::relu(&vals[x.0]),
                Op::Sigmoid(x) => ops::sigmoid(&vals[x.0]),
                Op::Linear { input, weights, bias } => {
                    ops::fully_connected(&vals[input.0], &vals[weights.0], &vals[bias.0])?
                }
                Op::Reshape(x) => vals[x.0].clone().reshape(node.value.shape())?,
                Op::Concat(parts) => Tensor::vector(
                    parts.iter().flat_map(|p| vals[p.0].data().iter().copied()).collect(),
                ),
                Op::Slice { input, start, len } => {
                    Tensor::vector(vals[input.0].data()[*start..start + len].to_vec())
                }
                Op::Mse { prediction, target } => {
                    Tensor::scalar(ops::mse(&vals[prediction.0], &vals[target.0])?)
                }
                Op::SquaredDistance { a, b } => Tensor::scalar(ops::sum_squared_diff(&vals[a.0], &vals[b.0])),
                Op::Add(a, b) => {
                    let mut v = vals[a.0].clone();
                    v.add_assign(&vals[b.0]);
                    v
                }
                Op::Scale(x, k) => {
                    let mut v = vals[x.0].clone();
                    v.scale_assign(*k);
                    v
                }
            };
            vals.push(v);
        }
        Ok(vals)
    }

    /// Reverse-mode gradients of the scalar `loss` w.r.t. every node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(invalid(format!(
                "backward needs a scalar loss, node has shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::Conv3d { input, kernels, stride, bias } => {
                    let (gx, gk, gb) =
                        ops::conv3d_backward(self.value(*input), self.value(*kernels), *stride, &g);
                    accumulate(&mut grads, *input, gx);
                    accumulate(&mut grads, *kernels, gk);
                    accumulate(&mut grads, *bias, gb.reshape(self.value(*bias).shape())?);
                }
                Op::MaxPool3d { input, argmax, .. } => {
                    let gx = ops::max_pool3d_backward(self.value(*input).shape(), argmax, &g);
                    accumulate(&mut grads, *input, gx);
                }
                Op::Upsample3d { input, factor } => {
                    let gx = ops::upsample3d_backward(self.value(*input).shape(), *factor, &g);
                    accumulate(&mut grads, *input, gx);
                }
                Op::Relu(x) => {
                    let gx = ops::relu_backward(self.value(*x), &g);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let gx = ops::sigmoid_backward(&node.value, &g);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Linear { input, weights, bias } => {
                    let (gx, gw, gb) =
                        ops::fully_connected_backward(self.value(*input), self.value(*weights), &g);
                    accumulate(&mut grads, *input, gx);
                    accumulate(&mut grads, *weights, gw);
                    accumulate(&mut grads, *bias, gb.reshape(self.value(*bias).shape())?);
                }
                Op::Reshape(x) => {
                    let gx = g.clone().reshape(self.value(*x).shape())?;
                    accumulate(&mut grads, *x, gx);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let shape = self.value(*p).shape();
                        let n = self.value(*p).len();
                        let gp = Tensor::new(shape.to_vec(), g.data()[offset..offset + n].to_vec())?;
                        accumulate(&mut grads, *p, gp);
                        offset += n;
                    }
                }
                Op::Slice { input, start, len } => {
                    let src = self.value(*input);
                    let mut gx = Tensor::zeros(src.shape());
                    gx.data_mut()[*start..start + len].copy_from_slice(g.data());
                    accumulate(&mut grads, *input, gx);
                }
                Op::Mse { prediction, target } => {
                    let (p, t) = (self.value(*prediction), self.value(*target));
                    let k = 2.0 * g.item() / p.len() as f64;
                    let gp: Vec<f64> = p.data().iter().zip(t.data()).map(|(a, b)| k * (a - b)).collect();
                    let gt: Vec<f64> = gp.iter().map(|v| -v).collect();
                    accumulate(&mut grads, *prediction, Tensor::new(p.shape().to_vec(), gp)?);
                    accumulate(&mut grads, *target, Tensor::new(t.shape().to_vec(), gt)?);
                }
                Op::SquaredDistance { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let k = 2.0 * g.item();
                    let ga: Vec<f64> = av.data().iter().zip(bv.data()).map(|(x, y)| k * (x - y)).collect();
                    let gb: Vec<f64> = ga.iter().map(|v| -v).collect();
                    accumulate(&mut grads, *a, Tensor::new(av.shape().to_vec(), ga)?);
                    accumulate(&mut grads, *b, Tensor::new(bv.shape().to_vec(), gb)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Scale(x, k) => {
                    let mut gx = g.clone();
                    gx.scale_assign(*k);
                    accumulate(&mut grads, *x, gx);
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three_has_slope_six() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![3.0]));
        let zero = g.input(Tensor::vector(vec![0.0]));
        let y = g.squared_distance(x, zero).unwrap();
        assert_eq!(g.value(y).item(), 9.0);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0, 2.0]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn backward_twice_is_identical() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0, -2.0, 0.5]));
        let w = g.input(Tensor::new(vec![2, 3], vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6]).unwrap());
        let b = g.input(Tensor::vector(vec![0.0, 0.1]));
        let y = g.linear(x, w, b).unwrap();
        let r = g.relu(y);
        let t = g.input(Tensor::vector(vec![1.0, 1.0]));
        let l = g.mse(r, t).unwrap();
        let a = g.backward(l).unwrap();
        let b2 = g.backward(l).unwrap();
        for id in [x, w, b] {
            assert_eq!(a.get(id), b2.get(id));
        }
    }

    #[test]
    fn zero_loss_has_zero_gradients() {
        let mut g = Graph::new();
        let p = g.input(Tensor::vector(vec![0.3, 0.7]));
        let t = g.input(Tensor::vector(vec![0.3, 0.7]));
        let l = g.mse(p, t).unwrap();
        let grads = g.backward(l).unwrap();
        assert!(grads.get(p).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1, 4, 4, 4], (0..64).map(|i| (i as f64).sin()).collect()).unwrap());
        let k = g.input(Tensor::new(vec![2, 1, 3, 3, 3], (0..54).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap());
        let b = g.input(Tensor::vector(vec![0.1, -0.2]));
        let c = g.conv3d(x, k, b, 1).unwrap();
        let r = g.relu(c);
        let p = g.max_pool3d(r, 2, 2).unwrap();
        let s = g.sigmoid(p);
        let vals = g.replay().unwrap();
        for (i, v) in vals.iter().enumerate() {
            assert_eq!(v, g.value(NodeId(i)));
        }
        assert_eq!(vals[s.index()].shape(), &[2, 2, 2, 2]);
    }
}
