use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Vector-Jacobian product of one recorded operation.
///
/// Receives the forward inputs and output plus the gradient flowing into the
/// output, and returns one gradient per input. Entries whose `needs` flag is
/// false may be `None`.
pub trait Backward<T: Scalar>: Send {
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad_out: &[T],
        needs: &[bool],
    ) -> Vec<Option<Vec<T>>>;
}

impl<T, F> Backward<T> for F
where
    T: Scalar,
    F: Fn(&[&Tensor<T>], &Tensor<T>, &[T], &[bool]) -> Vec<Option<Vec<T>>> + Send,
{
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad_out: &[T],
        needs: &[bool],
    ) -> Vec<Option<Vec<T>>> {
        self(inputs, output, grad_out, needs)
    }
}

struct Node<T: Scalar> {
    label: &'static str,
    value: Tensor<T>,
    inputs: Vec<Var>,
    op: Option<Box<dyn Backward<T>>>,
    requires_grad: bool,
    leaf_grad: Option<Vec<T>>,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, which is a topological order because
/// an operation can only consume values that already exist.
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> std::fmt::Debug for Graph<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list()
            .entries(self.nodes.iter().map(|n| (n.label, n.value.shape())))
            .finish()
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Every node in creation order.
    pub fn vars(&self) -> impl Iterator<Item = Var> {
        (0..self.nodes.len()).map(Var)
    }

    /// Binds a leaf; it receives gradients iff `t.requires_grad()`.
    pub fn leaf(&mut self, mut t: Tensor<T>) -> Var {
        t.grad = None;
        let requires_grad = t.requires_grad;
        self.nodes.push(Node {
            label: "leaf",
            value: t,
            inputs: Vec::new(),
            op: None,
            requires_grad,
            leaf_grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn label(&self, v: Var) -> &'static str {
        self.nodes[v.0].label
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].leaf_grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.leaf_grad = None;
        }
    }

    /// Records an operation's output. The backward closure is dropped when no
    /// input requires a gradient.
    pub(crate) fn record<B>(
        &mut self,
        label: &'static str,
        inputs: &[Var],
        output: Tensor<T>,
        op: B,
    ) -> Result<Var>
    where
        B: Backward<T> + 'static,
    {
        #[cfg(debug_assertions)]
        if !output.all_finite() && inputs.iter().all(|v| self.value(*v).all_finite()) {
            return Err(Error::NonFinite(label.to_string()));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            label,
            value: output.with_requires_grad(requires_grad),
            inputs: inputs.to_vec(),
            op: if requires_grad {
                Some(Box::new(op))
            } else {
                None
            },
            requires_grad,
            leaf_grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Propagates d(root)/d(leaf) into every reachable leaf that requires a
    /// gradient. Repeated calls add to the stored leaf gradients.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_value = &self.nodes[root.0].value;
        if root_value.len() != 1 {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(vec![T::one()]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(op) = &node.op else {
                let node = &mut self.nodes[i];
                match &mut node.leaf_grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
                    None => node.leaf_grad = Some(g),
                }
                continue;
            };
            let inputs: Vec<&Tensor<T>> =
                node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let needs: Vec<bool> = node
                .inputs
                .iter()
                .map(|v| self.nodes[v.0].requires_grad)
                .collect();
            let input_grads = op.backward(&inputs, &node.value, &g, &needs);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", node.label);
            for (v, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                debug_assert_eq!(ig.len(), self.nodes[v.0].value.len(), "{}", node.label);
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, &b)| *a = *a + b),
                    slot @ None => *slot = Some(ig),
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn shape_err(node: &str, detail: impl Into<String>) -> Error {
    Error::ShapeMismatch {
        node: node.to_string(),
        detail: detail.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_slice(&[1.0, 2.0, 3.0]).with_requires_grad(true));
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_slice(&[1.0, 2.0]).with_requires_grad(true));
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0]);
        g.zero_grads();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_slice(&[1.0, 2.0]).with_requires_grad(true));
        assert!(matches!(g.backward(x), Err(Error::NonScalarRoot(_))));
    }

    #[test]
    fn constants_get_no_grad() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_slice(&[1.0, 2.0]).with_requires_grad(true));
        let c = g.constant(Tensor::from_slice(&[3.0, 4.0]));
        let p = g.mul(x, c).unwrap();
        let s = g.sum(p).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[3.0, 4.0]);
        assert!(g.grad(c).is_none());
    }

    #[test]
    fn shared_input_gets_both_contributions() {
        // d/dx sum(x * x) = 2x
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_slice(&[1.5, -2.0]).with_requires_grad(true));
        let p = g.mul(x, x).unwrap();
        let s = g.sum(p).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[3.0, -4.0]);
    }
}
