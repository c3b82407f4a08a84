use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;

use super::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a backward closure sees for one recorded node.
pub struct Backward<'a, T> {
    /// Gradient of the loss with respect to this node's output.
    pub grad: &'a Tensor<T>,
    pub output: &'a Tensor<T>,
    pub inputs: Vec<&'a Tensor<T>>,
    /// Which inputs need a gradient; closures may skip the rest.
    pub needs: Vec<bool>,
}

type BackwardFn<T> = Box<dyn Fn(&Backward<'_, T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    value: Tensor<T>,
    parents: Vec<Var>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

/// Append-only record of a computation. Node order is a topological order,
/// so backward is a single reverse sweep.
///
/// A tape and the closures it holds are confined to one thread.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(Node { value, parents: Vec::new(), backward: None, requires_grad: false })
    }

    /// Records a leaf that accumulates a gradient on backward.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(Node { value, parents: Vec::new(), backward: None, requires_grad: true })
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

    /// Gradient of the last [`Tape::backward`] loss with respect to `v`.
    ///
    /// `None` when `v` does not require a gradient or did not contribute.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Records the result of a differentiable operation.
    ///
    /// The closure is kept only when at least one parent requires a gradient.
    pub fn record<F>(&mut self, value: Tensor<T>, parents: &[Var], backward: F) -> Var
    where
        F: Fn(&Backward<'_, T>) -> Vec<Option<Tensor<T>>> + 'static,
    {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let backward: Option<BackwardFn<T>> = if requires_grad { Some(Box::new(backward)) } else { None };
        self.push(Node { value, parents: parents.to_vec(), backward, requires_grad })
    }

    fn push(&mut self, node: Node<T>) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a one-element `loss`. Gradients from a previous
    /// call are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let seed_shape = self.nodes[loss.0].value.shape().to_vec();
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(shape_err(format!("backward needs a one-element loss, got shape {seed_shape:?}")));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            self.grads = grads;
            return Ok(());
        }
        grads[loss.0] = Some(Tensor::full(&seed_shape, T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(backward) = node.backward.as_ref() else { continue };
            let Some(grad) = grads[i].as_ref() else { continue };
            let ctx = Backward {
                grad,
                output: &node.value,
                inputs: node.parents.iter().map(|p| &self.nodes[p.0].value).collect(),
                needs: node.parents.iter().map(|p| self.nodes[p.0].requires_grad).collect(),
            };
            let parent_grads = backward(&ctx);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (p, g) in node.parents.iter().zip(parent_grads) {
                let Some(g) = g else { continue };
                if !self.nodes[p.0].requires_grad {
                    continue;
                }
                if g.shape() != self.nodes[p.0].value.shape() {
                    return Err(Error::Shape(format!(
                        "backward of node {i} produced gradient {:?} for input of shape {:?}",
                        g.shape(),
                        self.nodes[p.0].value.shape()
                    )));
                }
                match grads[p.0].as_mut() {
                    Some(acc) => acc.add_assign(&g)?,
                    None => grads[p.0] = Some(g),
                }
            }
        }
        self.grads = grads;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::scalar(2.0));
        let b = tape.leaf(Tensor::scalar(3.0));
        let c = tape.mul(a, b).unwrap();
        tape.backward(c).unwrap();
        assert!(tape.grad(a).is_none());
        assert_eq!(tape.grad(b).unwrap().item(), 2.0);
    }

    #[test]
    fn reused_value_accumulates_both_paths() {
        // f(x) = x * x + x, f'(x) = 2x + 1
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(1.5));
        let sq = tape.mul(x, x).unwrap();
        let f = tape.add(sq, x).unwrap();
        tape.backward(f).unwrap();
        assert_eq!(tape.grad(x).unwrap().item(), 4.0);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(&[2]));
        assert!(tape.backward(x).is_err());
    }
}
