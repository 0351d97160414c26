//! Differentiable-operator contract, a minimal gradient tape, and the
//! central-difference gradient checker.
//!
//! Operators implement [`Differentiable`] by supplying a forward pass and a
//! vector-Jacobian product. The tape records operator applications in
//! order; since a node can only reference earlier nodes, reverse insertion
//! order is a reverse topological order.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// An operator with a hand-written vector-Jacobian product.
pub trait Differentiable<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    fn arity(&self) -> usize;

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>>;

    /// Maps the output cotangent to one cotangent per input, each shaped
    /// like its input.
    fn vjp(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        cotangent: &Tensor<T>,
    ) -> Result<Vec<Tensor<T>>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node<T: Scalar> {
    op: Option<Arc<dyn Differentiable<T>>>,
    parents: Vec<NodeId>,
    value: Tensor<T>,
}

/// Ordered record of operator applications with their saved outputs.
pub struct GradientTape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for GradientTape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> GradientTape<T> {
    pub fn new() -> Self {
        GradientTape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node { op: None, parents: Vec::new(), value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn apply(&mut self, op: Arc<dyn Differentiable<T>>, parents: &[NodeId]) -> Result<NodeId> {
        if parents.len() != op.arity() {
            return Err(Error::invalid(format!(
                "{} takes {} inputs, got {}",
                op.name(),
                op.arity(),
                parents.len()
            )));
        }
        if let Some(p) = parents.iter().find(|p| p.0 >= self.nodes.len()) {
            return Err(Error::Bounds(format!("unknown tape node {}", p.0)));
        }
        let value = {
            let inputs: Vec<&Tensor<T>> = parents.iter().map(|p| &self.nodes[p.0].value).collect();
            op.forward(&inputs)?
        };
        value.check_finite(op.name())?;
        self.nodes.push(Node { op: Some(op), parents: parents.to_vec(), value });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Recomputes every operator node from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Tensor<T>>> {
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                None => node.value.clone(),
                Some(op) => {
                    let inputs: Vec<&Tensor<T>> = node.parents.iter().map(|p| &values[p.0]).collect();
                    op.forward(&inputs)?
                }
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Reverse-mode sweep from `output` seeded with `cotangent`.
    pub fn backward(&self, output: NodeId, cotangent: Tensor<T>) -> Result<Gradients<T>> {
        if output.0 >= self.nodes.len() {
            return Err(Error::Bounds(format!("unknown tape node {}", output.0)));
        }
        self.nodes[output.0].value.require_same_shape(&cotangent, "backward seed")?;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(cotangent);
        let mut visited = Vec::new();
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            visited.push(NodeId(idx));
            let node = &self.nodes[idx];
            if let Some(op) = &node.op {
                let inputs: Vec<&Tensor<T>> =
                    node.parents.iter().map(|p| &self.nodes[p.0].value).collect();
                let parent_grads = op.vjp(&inputs, &node.value, &g)?;
                if parent_grads.len() != node.parents.len() {
                    return Err(Error::invalid(format!("{}: vjp arity mismatch", op.name())));
                }
                for (p, pg) in node.parents.iter().zip(parent_grads) {
                    self.nodes[p.0].value.require_same_shape(&pg, op.name())?;
                    grads[p.0] = Some(match grads[p.0].take() {
                        None => pg,
                        Some(acc) => acc.zip_map(&pg, |a, b| a + b)?,
                    });
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, visited })
    }
}

pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
    visited: Vec<NodeId>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a node, or `None` when the output does not depend on it.
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Nodes in the order the backward sweep processed them.
    pub fn visit_order(&self) -> &[NodeId] {
        &self.visited
    }
}

pub const FD_STEP: f64 = 1e-3;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, serde::Serialize)]
pub struct GradCheckReport {
    pub op: String,
    pub max_rel_error: f64,
    /// `(input index, flat coordinate)` of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
    pub pass: bool,
}

/// Compares the tape's vector-Jacobian product of `op` at `inputs` against
/// central differences with step [`FD_STEP`], contracted with `cotangent`.
pub fn fd_check_gradient(
    op: Arc<dyn Differentiable<f64>>,
    inputs: &[Tensor<f64>],
    cotangent: &Tensor<f64>,
) -> Result<GradCheckReport> {
    let mut tape = GradientTape::new();
    let leaves: Vec<NodeId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = tape.apply(op.clone(), &leaves)?;
    let grads = tape.backward(out, cotangent.clone())?;
    let analytic: Vec<Tensor<f64>> = leaves
        .iter()
        .zip(inputs)
        .map(|(&id, x)| grads.get(id).cloned().unwrap_or_else(|| Tensor::zeros(x.dims())))
        .collect();
    fd_check_with(op.name(), |xs| op.forward(xs), &analytic, inputs, cotangent)
}

/// Central-difference check of precomputed `analytic` gradients of `f`.
pub fn fd_check_with(
    name: &str,
    f: impl Fn(&[&Tensor<f64>]) -> Result<Tensor<f64>>,
    analytic: &[Tensor<f64>],
    inputs: &[Tensor<f64>],
    cotangent: &Tensor<f64>,
) -> Result<GradCheckReport> {
    let eval = |xs: &[Tensor<f64>]| -> Result<Tensor<f64>> {
        let refs: Vec<&Tensor<f64>> = xs.iter().collect();
        let y = f(&refs)?;
        if !y.all_finite() {
            return Err(Error::NonFinite(format!("{name}: forward value is not finite")));
        }
        y.require_same_shape(cotangent, "gradient check cotangent")?;
        Ok(y)
    };
    eval(inputs)?;

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut max_rel = 0.0f64;
    let mut worst = None;
    let mut coordinates = 0;
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let x0 = input.data()[i];
            work[k].data_mut()[i] = x0 + FD_STEP;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = x0 - FD_STEP;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = x0;

            let numeric = crate::reduce::pairwise_sum_by(cotangent.len(), |j| {
                cotangent.data()[j] * (plus.data()[j] - minus.data()[j])
            }) / (2.0 * FD_STEP);
            let a = analytic[k].data()[i];
            let diff = (a - numeric).abs();
            let rel = if diff <= FD_ABS_FLOOR { 0.0 } else { diff / a.abs().max(numeric.abs()) };
            if rel > max_rel {
                max_rel = rel;
                worst = Some((k, i));
            }
            coordinates += 1;
        }
    }
    Ok(GradCheckReport {
        op: name.to_string(),
        max_rel_error: max_rel,
        worst,
        coordinates,
        pass: max_rel < FD_REL_TOL,
    })
}
