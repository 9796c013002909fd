//! Declarative graphs: a list of named nodes evaluated against a map of
//! bound leaf tensors.
//!
//! ```
//! use std::collections::HashMap;
//! use unetgan::tensor::{expr::{GraphDef, Op}, Tensor};
//!
//! let mut def = GraphDef::new();
//! def.node("y", Op::Add, &["x", "x"]);
//! let leaves = HashMap::from([("x".to_string(), Tensor::<f64>::from_slice(&[1.0, 2.0]))]);
//! let (graph, y) = def.forward(&leaves).unwrap();
//! assert_eq!(graph.value(y).data(), &[2.0, 4.0]);
//! ```

use std::collections::HashMap;

use super::{Graph, Scalar, Tensor, Var};
use crate::error::{Error, Result};
use crate::ops::Conv1dSpec;

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Identity,
    Add,
    Sub,
    Mul,
    Sum,
    Mean,
    Tanh,
    LeakyRelu(f64),
    /// Inputs: `x`, `weight`, `bias`.
    Conv1d(Conv1dSpec),
    Decimate,
    Upsample,
    Concat,
}

impl Op {
    fn arity(&self) -> usize {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Concat => 2,
            Op::Conv1d(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeDef {
    pub name: String,
    pub op: Op,
    pub inputs: Vec<String>,
}

/// Nodes in evaluation order; inputs refer to leaves or earlier nodes. The
/// last node is the output.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraphDef {
    pub nodes: Vec<NodeDef>,
}

impl GraphDef {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, name: &str, op: Op, inputs: &[&str]) -> &mut Self {
        self.nodes.push(NodeDef {
            name: name.to_string(),
            op,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        });
        self
    }

    /// Evaluates every node, recording into a fresh [`Graph`]. Leaves whose
    /// tensors have `requires_grad` set receive gradients on backward.
    pub fn forward<T: Scalar>(
        &self,
        leaves: &HashMap<String, Tensor<T>>,
    ) -> Result<(Graph<T>, Var)> {
        let mut g = Graph::new();
        let mut env: HashMap<&str, Var> = HashMap::new();
        let mut out = None;
        for node in &self.nodes {
            if node.inputs.len() != node.op.arity() {
                return Err(Error::ShapeMismatch {
                    node: node.name.clone(),
                    detail: format!(
                        "{:?} takes {} inputs, got {}",
                        node.op,
                        node.op.arity(),
                        node.inputs.len()
                    ),
                });
            }
            let mut args = Vec::with_capacity(node.inputs.len());
            for name in &node.inputs {
                let v = match env.get(name.as_str()) {
                    Some(&v) => v,
                    None => {
                        let t = leaves.get(name).ok_or_else(|| {
                            Error::UnboundLeaf(format!("{name} (used by {})", node.name))
                        })?;
                        let v = g.leaf(t.clone());
                        env.insert(name.as_str(), v);
                        v
                    }
                };
                args.push(v);
            }
            let v = match &node.op {
                Op::Identity => Ok(args[0]),
                Op::Add => g.add(args[0], args[1]),
                Op::Sub => g.sub(args[0], args[1]),
                Op::Mul => g.mul(args[0], args[1]),
                Op::Sum => g.sum(args[0]),
                Op::Mean => g.mean(args[0]),
                Op::Tanh => g.tanh(args[0]),
                Op::LeakyRelu(s) => g.leaky_relu(args[0], T::of(*s)),
                Op::Conv1d(spec) => g.conv1d(args[0], args[1], args[2], *spec),
                Op::Decimate => g.decimate(args[0]),
                Op::Upsample => g.upsample_linear2x(args[0]),
                Op::Concat => g.concat_channels(args[0], args[1]),
            }
            .map_err(|e| match e {
                Error::ShapeMismatch { detail, .. } => Error::ShapeMismatch {
                    node: node.name.clone(),
                    detail,
                },
                other => other.context(format!("node {}", node.name)),
            })?;
            env.insert(node.name.as_str(), v);
            out = Some(v);
        }
        let out = out.ok_or_else(|| Error::InvalidConfig("empty graph".into()))?;
        Ok((g, out))
    }
}
