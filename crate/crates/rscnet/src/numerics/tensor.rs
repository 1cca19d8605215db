//! Dense tensors with reverse-mode differentiation.
//!
//! A `Tensor` is an immutable node in a dynamically built computation
//! graph. Values never change after construction; only the gradient slot
//! is interior-mutable. `backward` walks the graph from a scalar loss and
//! overwrites the gradient of every reachable tensor that requires one.

use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::NumericsError;

use super::scalar::Scalar;

static NEXT_ID: AtomicUsize = AtomicUsize::new(1);

pub(crate) type BackwardFn<T> = Box<dyn Fn(&Inner<T>, &[T])>;

pub(crate) struct Inner<T: Scalar> {
    id: usize,
    shape: Vec<usize>,
    values: Rc<Vec<T>>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<T>>>,
    pub(crate) parents: Vec<Tensor<T>>,
    backward_fn: Option<BackwardFn<T>>,
}

/// N-dimensional real array, the substrate of all math in this crate.
pub struct Tensor<T: Scalar> {
    inner: Rc<Inner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

pub(crate) fn fmt_shape(shape: &[usize]) -> String {
    format!("{shape:?}")
}

fn check_finite<T: Scalar>(op: &'static str, values: &[T]) -> Result<(), NumericsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NumericsError::NonFinite { op })
    }
}

impl<T: Scalar> Tensor<T> {
    fn build(
        shape: Vec<usize>,
        values: Rc<Vec<T>>,
        requires_grad: bool,
        parents: Vec<Tensor<T>>,
        backward_fn: Option<BackwardFn<T>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                values,
                requires_grad,
                grad: RefCell::new(None),
                parents,
                backward_fn,
            }),
        }
    }

    /// Leaf tensor that does not track gradients.
    pub fn new(shape: Vec<usize>, values: Vec<T>) -> Result<Self, NumericsError> {
        Self::leaf(shape, values, false)
    }

    /// Leaf tensor; `requires_grad` marks it as a differentiation target.
    pub fn leaf(
        shape: Vec<usize>,
        values: Vec<T>,
        requires_grad: bool,
    ) -> Result<Self, NumericsError> {
        if shape.iter().any(|&e| e == 0) {
            return Err(NumericsError::InvalidTensor {
                op: "leaf",
                reason: format!("zero extent in shape {}", fmt_shape(&shape)),
            });
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(NumericsError::InvalidTensor {
                op: "leaf",
                reason: format!(
                    "shape {} implies {} values, got {}",
                    fmt_shape(&shape),
                    shape.iter().product::<usize>(),
                    values.len()
                ),
            });
        }
        check_finite("leaf", &values)?;
        Ok(Self::build(shape, Rc::new(values), requires_grad, Vec::new(), None))
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::build(shape, Rc::new(vec![T::ZERO; n]), false, Vec::new(), None)
    }

    pub fn scalar(v: T) -> Self {
        Self::build(vec![1], Rc::new(vec![v]), false, Vec::new(), None)
    }

    /// Graph node produced by an operation. Checks the all-finite invariant.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        values: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward_fn: BackwardFn<T>,
    ) -> Result<Self, NumericsError> {
        check_finite(op, &values)?;
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if requires_grad {
            Ok(Self::build(
                shape,
                Rc::new(values),
                true,
                parents,
                Some(backward_fn),
            ))
        } else {
            // Constant subgraph: no need to retain history.
            Ok(Self::build(shape, Rc::new(values), false, Vec::new(), None))
        }
    }

    /// Same as `from_op` but shares the value buffer (reshape-style ops).
    pub(crate) fn from_view_op(
        shape: Vec<usize>,
        values: Rc<Vec<T>>,
        parents: Vec<Tensor<T>>,
        backward_fn: BackwardFn<T>,
    ) -> Self {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if requires_grad {
            Self::build(shape, values, true, parents, Some(backward_fn))
        } else {
            Self::build(shape, values, false, Vec::new(), None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        self.inner.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.inner.values
    }

    pub(crate) fn values_rc(&self) -> Rc<Vec<T>> {
        Rc::clone(&self.inner.values)
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn id(&self) -> usize {
        self.inner.id
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.len(), 1, "item() on non-scalar tensor");
        self.inner.values[0]
    }

    /// Copy of the gradient, if one has been populated by `backward`.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    /// Run `f` over the gradient slice without cloning.
    pub fn with_grad<R>(&self, f: impl FnOnce(Option<&[T]>) -> R) -> R {
        f(self.inner.grad.borrow().as_deref())
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Leaf copy sharing this tensor's values, detached from the graph.
    pub fn detach(&self) -> Tensor<T> {
        Self::build(
            self.inner.shape.clone(),
            Rc::clone(&self.inner.values),
            false,
            Vec::new(),
            None,
        )
    }

    pub(crate) fn accumulate_grad(&self, delta: &[T]) {
        debug_assert_eq!(delta.len(), self.len());
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gv, &dv) in g.iter_mut().zip(delta) {
                    *gv += dv;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }
}

enum Frame<T: Scalar> {
    Enter(Tensor<T>),
    Emit(Tensor<T>),
}

/// Reverse-mode pass from a scalar loss.
///
/// Gradients of every reachable `requires_grad` tensor are overwritten
/// (not accumulated across calls).
pub fn backward<T: Scalar>(loss: &Tensor<T>) -> Result<(), NumericsError> {
    if loss.len() != 1 {
        return Err(NumericsError::LossNotScalar { len: loss.len() });
    }
    if !loss.requires_grad() {
        return Ok(());
    }

    // Topological order (parents before children), iterative to keep deep
    // recurrent graphs off the call stack.
    let mut order: Vec<Tensor<T>> = Vec::new();
    let mut visited: HashSet<usize> = HashSet::new();
    let mut stack = vec![Frame::Enter(loss.clone())];
    while let Some(frame) = stack.pop() {
        match frame {
            Frame::Enter(node) => {
                if !visited.insert(node.id()) {
                    continue;
                }
                stack.push(Frame::Emit(node.clone()));
                for parent in &node.inner.parents {
                    if parent.requires_grad() && !visited.contains(&parent.id()) {
                        stack.push(Frame::Enter(parent.clone()));
                    }
                }
            }
            Frame::Emit(node) => order.push(node),
        }
    }

    for node in &order {
        node.clear_grad();
    }
    loss.accumulate_grad(&[T::ONE]);

    for node in order.iter().rev() {
        let grad = match node.inner.grad.borrow().as_ref() {
            Some(g) => g.clone(),
            None => continue,
        };
        if let Some(backward_fn) = &node.inner.backward_fn {
            backward_fn(&node.inner, &grad);
        }
    }
    Ok(())
}

impl<T: Scalar> Inner<T> {
    pub(crate) fn values(&self) -> &[T] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ops;

    #[test]
    fn leaf_rejects_shape_value_mismatch() {
        let err = Tensor::new(vec![2, 3], vec![0.0f64; 5]).unwrap_err();
        assert!(matches!(err, NumericsError::InvalidTensor { .. }));
    }

    #[test]
    fn leaf_rejects_non_finite() {
        let err = Tensor::new(vec![2], vec![1.0f64, f64::NAN]).unwrap_err();
        assert!(matches!(err, NumericsError::NonFinite { .. }));
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let x = Tensor::leaf(vec![2], vec![1.0f64, 2.0], true).unwrap();
        let y = x.add(&x).unwrap();
        assert!(matches!(
            backward(&y),
            Err(NumericsError::LossNotScalar { len: 2 })
        ));
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let x = Tensor::leaf(vec![3], vec![1.0f64, -2.0, 3.0], true).unwrap();
        let loss = ops::sum_all(&x).unwrap();
        backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn repeated_backward_overwrites_gradients() {
        let x = Tensor::leaf(vec![2], vec![2.0f64, 3.0], true).unwrap();
        let loss = ops::sum_all(&x.mul(&x).unwrap()).unwrap();
        backward(&loss).unwrap();
        backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![4.0, 6.0]);
    }

    #[test]
    fn shared_parent_accumulates_within_one_pass() {
        // loss = sum(x*x + x) -> grad 2x + 1
        let x = Tensor::leaf(vec![2], vec![1.0f64, -1.5], true).unwrap();
        let sq = x.mul(&x).unwrap();
        let loss = ops::sum_all(&sq.add(&x).unwrap()).unwrap();
        backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![3.0, -2.0]);
    }

    #[test]
    fn constant_subgraphs_drop_history() {
        let a = Tensor::new(vec![2], vec![1.0f64, 2.0]).unwrap();
        let b = a.mul(&a).unwrap();
        assert!(!b.requires_grad());
        assert!(b.inner.parents.is_empty());
    }
}
