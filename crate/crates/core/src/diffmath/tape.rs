use std::sync::Arc;

use super::{ParamId, ParamStore, SparseAdjacency, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Arc<Tensor<T>>),
    Affine(Var, T),
    Transpose(Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Clamp(Var, T, T),
    GatherRows(Var, Arc<[usize]>),
    Spmm(Arc<SparseAdjacency<T>>, Var),
    RowDot(Var, Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Forward record of matrix primitives, replayed in reverse by
/// [`Tape::backward`]. Records are appended in evaluation order, so the
/// vector is already topologically sorted.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Constant)
    }

    /// Record the current value of a trainable parameter.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, c: Arc<Tensor<T>>) -> Result<Var> {
        let v = self.value(a).zip_map(&c, |x, y| x * y)?;
        Ok(self.push(v, Op::MulConst(a, c)))
    }

    /// `s · a + b` elementwise.
    pub fn affine(&mut self, a: Var, s: T, b: T) -> Var {
        let v = self.value(a).map(|x| s * x + b);
        self.push(v, Op::Affine(a, s))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.affine(a, s, T::zero())
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.ln());
        self.push(v, Op::Log(a))
    }

    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        let v = self.value(a).map(|x| x.max(lo).min(hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    /// Rows `idx[k]` of `a`, stacked.
    pub fn gather_rows(&mut self, a: Var, idx: impl Into<Arc<[usize]>>) -> Result<Var> {
        let idx: Arc<[usize]> = idx.into();
        let src = self.value(a);
        let cols = src.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx.iter() {
            if i >= src.rows() {
                return Err(Error::Contract(format!("gather row {i} of {}", src.rows())));
            }
            data.extend_from_slice(src.row(i));
        }
        let v = Tensor::from_vec(idx.len(), cols, data)?;
        Ok(self.push(v, Op::GatherRows(a, idx)))
    }

    pub fn spmm(&mut self, adj: Arc<SparseAdjacency<T>>, a: Var) -> Result<Var> {
        let v = adj.spmm(self.value(a))?;
        Ok(self.push(v, Op::Spmm(adj, a)))
    }

    /// Per-row inner product: `n x 1` result from two `n x d` inputs.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        x.same_shape(y, "row_dot")?;
        let v = Tensor::from_fn(x.rows(), 1, |i, _| {
            x.row(i).iter().zip(y.row(i)).map(|(&p, &q)| p * q).sum()
        });
        Ok(self.push(v, Op::RowDot(a, b)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Reverse sweep from a scalar `loss`, adding `∂loss/∂θ` into the grad
    /// buffer of every parameter recorded on the tape. The tape is consumed
    /// so intermediate values are released.
    pub fn backward(self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward from non-scalar of shape {:?}",
                self.value(loss).shape()
            )));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        fn acc<T: Scalar>(grads: &mut [Option<Tensor<T>>], at: Var, g: Tensor<T>) -> Result<()> {
            match &mut grads[at.0] {
                Some(cur) => cur.add_assign(&g),
                slot => {
                    *slot = Some(g);
                    Ok(())
                }
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => store.accumulate_grad(*id, &g)?,
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(&nodes[b.0].value)?;
                    let gb = nodes[a.0].value.t_matmul(&g)?;
                    acc(&mut grads, *a, ga)?;
                    acc(&mut grads, *b, gb)?;
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone())?;
                    acc(&mut grads, *b, g)?;
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(&nodes[b.0].value, |x, y| x * y)?;
                    let gb = g.zip_map(&nodes[a.0].value, |x, y| x * y)?;
                    acc(&mut grads, *a, ga)?;
                    acc(&mut grads, *b, gb)?;
                }
                Op::MulConst(a, c) => acc(&mut grads, *a, g.zip_map(c, |x, y| x * y)?)?,
                Op::Affine(a, s) => acc(&mut grads, *a, g.scale(*s))?,
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose())?,
                Op::Relu(a) => {
                    let ga = g.zip_map(&node.value, |x, y| if y > T::zero() { x } else { T::zero() })?;
                    acc(&mut grads, *a, ga)?;
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * y * (T::one() - y))?;
                    acc(&mut grads, *a, ga)?;
                }
                Op::Log(a) => acc(&mut grads, *a, g.zip_map(&nodes[a.0].value, |x, y| x / y)?)?,
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let ga = g.zip_map(&nodes[a.0].value, |x, y| {
                        if y >= lo && y <= hi {
                            x
                        } else {
                            T::zero()
                        }
                    })?;
                    acc(&mut grads, *a, ga)?;
                }
                Op::GatherRows(a, rows) => {
                    let src = &nodes[a.0].value;
                    let mut ga = Tensor::zeros(src.rows(), src.cols());
                    for (k, &i) in rows.iter().enumerate() {
                        for (o, &v) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *a, ga)?;
                }
                Op::Spmm(adj, a) => {
                    let src = &nodes[a.0].value;
                    let mut ga = Tensor::zeros(src.rows(), src.cols());
                    adj.spmm_t_acc(&g, &mut ga);
                    acc(&mut grads, *a, ga)?;
                }
                Op::RowDot(a, b) => {
                    let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
                    let ga = Tensor::from_fn(x.rows(), x.cols(), |i, j| g.get(i, 0) * y.get(i, j));
                    let gb = Tensor::from_fn(x.rows(), x.cols(), |i, j| g.get(i, 0) * x.get(i, j));
                    acc(&mut grads, *a, ga)?;
                    acc(&mut grads, *b, gb)?;
                }
                Op::Sum(a) => {
                    let (r, c) = nodes[a.0].value.shape();
                    acc(&mut grads, *a, Tensor::filled(r, c, g.get(0, 0)))?;
                }
            }
        }
        Ok(())
    }
}
