//! The computation tape: records primitive applications in topological order
//! and sweeps them in reverse to produce vector-Jacobian products.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{Scalar, Tensor, TensorError};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a tensor recorded on a particular [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// The closed set of operations the tape can record.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// `[k]·[k,n] -> [n]` or `[m,k]·[k,n] -> [m,n]`.
    MatMul,
    /// Adds a `[n]` bias along the trailing axis.
    AddBias,
    Relu,
    Tanh,
    SoftmaxLast,
    Log,
    Sqrt,
    MeanAxis { axis: usize },
    /// `w[L]` and `x[L, ...]` to `Σ_l w_l·x_l`.
    WeightedSumLeading,
    Mul,
    Add,
    AddScalar { value: f64 },
    /// Sum of all elements to a scalar.
    Sum,
    /// `logsumexp(z) - z[target]` for rank-1 logits.
    CrossEntropy { target: usize },
    /// Overlapping windows of a rank-1 signal: `[N] -> [T, len]`.
    Frame { len: usize, hop: usize },
    /// Stacks equally shaped operands along a new leading axis.
    Stack,
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::AddBias => "add-bias",
            Primitive::Relu => "relu",
            Primitive::Tanh => "tanh",
            Primitive::SoftmaxLast => "softmax-last-axis",
            Primitive::Log => "log",
            Primitive::Sqrt => "sqrt",
            Primitive::MeanAxis { .. } => "mean-over-axis",
            Primitive::WeightedSumLeading => "weighted-sum-over-leading-axis",
            Primitive::Mul => "elementwise-mul",
            Primitive::Add => "elementwise-add",
            Primitive::AddScalar { .. } => "add-scalar",
            Primitive::Sum => "sum",
            Primitive::CrossEntropy { .. } => "cross-entropy-with-logits",
            Primitive::Frame { .. } => "frame",
            Primitive::Stack => "stack",
        }
    }
}

#[derive(Debug, Clone)]
enum Origin {
    Variable,
    Constant,
    Op { prim: Primitive, inputs: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node<F: Scalar> {
    value: Tensor<F>,
    origin: Origin,
    needs_grad: bool,
}

/// Single-writer record of a forward computation.
#[derive(Debug)]
pub struct Tape<F: Scalar = f32> {
    id: u64,
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf that receives a gradient.
    pub fn variable(&mut self, value: Tensor<F>) -> Result<Var, TensorError> {
        self.leaf(value, Origin::Variable, true)
    }

    /// Records a leaf that is never differentiated (frozen weights, data).
    pub fn constant(&mut self, value: Tensor<F>) -> Result<Var, TensorError> {
        self.leaf(value, Origin::Constant, false)
    }

    fn leaf(&mut self, value: Tensor<F>, origin: Origin, needs_grad: bool) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: "leaf" });
        }
        Ok(self.push(Node {
            value,
            origin,
            needs_grad,
        }))
    }

    fn push(&mut self, node: Node<F>) -> Var {
        self.nodes.push(node);
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn index_of(&self, var: Var) -> Result<usize, TensorError> {
        if var.tape != self.id || var.index >= self.nodes.len() {
            return Err(TensorError::ForeignVar);
        }
        Ok(var.index)
    }

    pub fn value(&self, var: Var) -> Result<&Tensor<F>, TensorError> {
        Ok(&self.nodes[self.index_of(var)?].value)
    }

    pub fn is_variable(&self, var: Var) -> bool {
        self.index_of(var)
            .map(|i| matches!(self.nodes[i].origin, Origin::Variable))
            .unwrap_or(false)
    }

    pub fn is_leaf(&self, var: Var) -> bool {
        self.index_of(var)
            .map(|i| !matches!(self.nodes[i].origin, Origin::Op { .. }))
            .unwrap_or(false)
    }

    /// Applies `prim` to `operands`, records the result and returns its handle.
    pub fn apply(&mut self, prim: Primitive, operands: &[Var]) -> Result<Var, TensorError> {
        let inputs = operands
            .iter()
            .map(|&v| self.index_of(v))
            .collect::<Result<Vec<_>, _>>()?;
        let value = {
            let refs: Vec<&Tensor<F>> = inputs.iter().map(|&i| &self.nodes[i].value).collect();
            eval(&prim, &refs)?
        };
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        Ok(self.push(Node {
            value,
            origin: Origin::Op { prim, inputs },
            needs_grad,
        }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::MatMul, &[a, b])
    }
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::AddBias, &[x, bias])
    }
    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Relu, &[x])
    }
    pub fn tanh(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Tanh, &[x])
    }
    pub fn softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::SoftmaxLast, &[x])
    }
    pub fn log(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Log, &[x])
    }
    pub fn sqrt(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Sqrt, &[x])
    }
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        self.apply(Primitive::MeanAxis { axis }, &[x])
    }
    pub fn weighted_sum(&mut self, weights: Var, x: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::WeightedSumLeading, &[weights, x])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Mul, &[a, b])
    }
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Add, &[a, b])
    }
    pub fn add_scalar(&mut self, x: Var, value: f64) -> Result<Var, TensorError> {
        self.apply(Primitive::AddScalar { value }, &[x])
    }
    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Sum, &[x])
    }
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, TensorError> {
        self.apply(Primitive::CrossEntropy { target }, &[logits])
    }
    pub fn frame(&mut self, signal: Var, len: usize, hop: usize) -> Result<Var, TensorError> {
        self.apply(Primitive::Frame { len, hop }, &[signal])
    }
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        self.apply(Primitive::Stack, parts)
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>, TensorError> {
        let root = self.index_of(loss)?;
        let root_value = &self.nodes[root].value;
        if root_value.numel() != 1 {
            return Err(TensorError::NotScalar {
                shape: root_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor<F>>> = vec![None; root + 1];
        grads[root] = Some(Tensor::full(root_value.shape(), F::one()));
        let mut leaves = HashMap::new();
        for i in (0..=root).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.origin {
                Origin::Variable => {
                    leaves.insert(i, g);
                }
                Origin::Constant => {}
                Origin::Op { prim, inputs } => {
                    if !node.needs_grad {
                        continue;
                    }
                    let refs: Vec<&Tensor<F>> = inputs.iter().map(|&j| &self.nodes[j].value).collect();
                    let wanted: Vec<bool> = inputs.iter().map(|&j| self.nodes[j].needs_grad).collect();
                    let local = vjp(prim, &refs, &node.value, &g, &wanted);
                    for (&j, gj) in inputs.iter().zip(local) {
                        let Some(gj) = gj else { continue };
                        match &mut grads[j] {
                            Some(acc) => acc
                                .data_mut()
                                .iter_mut()
                                .zip(gj.data())
                                .for_each(|(a, &b)| *a = *a + b),
                            slot @ None => *slot = Some(gj),
                        }
                    }
                }
            }
        }
        for g in leaves.values() {
            if !g.is_finite() {
                return Err(TensorError::NonFinite { op: "backward" });
            }
        }
        Ok(Gradients {
            tape: self.id,
            leaves,
        })
    }

    /// Recomputes every node from the leaves, with `overrides` substituted for
    /// the given leaves.
    pub fn replay(&self, overrides: &[(Var, Tensor<F>)]) -> Result<Vec<Tensor<F>>, TensorError> {
        let subs = self.overrides(overrides)?;
        let mut values: Vec<Tensor<F>> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let v = match (&node.origin, subs.get(&i)) {
                (_, Some(t)) => (*t).clone(),
                (Origin::Op { prim, inputs }, None) => {
                    let refs: Vec<&Tensor<F>> = inputs.iter().map(|&j| &values[j]).collect();
                    eval(prim, &refs)?
                }
                (_, None) => node.value.clone(),
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Value of `target` after substituting `overrides`, recomputing only the
    /// nodes downstream of the substituted leaves.
    pub fn replay_value(&self, overrides: &[(Var, Tensor<F>)], target: Var) -> Result<Tensor<F>, TensorError> {
        Ok(self.replay_value_kinks(overrides, target)?.0)
    }

    /// [`Tape::replay_value`], also reporting whether any ReLU input changed
    /// sign relative to the recorded pass.
    pub(crate) fn replay_value_kinks(
        &self,
        overrides: &[(Var, Tensor<F>)],
        target: Var,
    ) -> Result<(Tensor<F>, bool), TensorError> {
        let target = self.index_of(target)?;
        let subs = self.overrides(overrides)?;
        let mut fresh: Vec<Option<Tensor<F>>> = vec![None; target + 1];
        let mut crossed = false;
        for i in 0..=target {
            if let Some(t) = subs.get(&i) {
                fresh[i] = Some((*t).clone());
                continue;
            }
            if let Origin::Op { prim, inputs } = &self.nodes[i].origin {
                if inputs.iter().any(|&j| fresh[j].is_some()) {
                    let refs: Vec<&Tensor<F>> = inputs
                        .iter()
                        .map(|&j| fresh[j].as_ref().unwrap_or(&self.nodes[j].value))
                        .collect();
                    if matches!(prim, Primitive::Relu) && !crossed {
                        let old = self.nodes[inputs[0]].value.data();
                        crossed = refs[0].data().iter().zip(old).any(|(a, b)| (*a > F::zero()) != (*b > F::zero()));
                    }
                    fresh[i] = Some(eval(prim, &refs)?);
                }
            }
        }
        let value = fresh[target]
            .take()
            .unwrap_or_else(|| self.nodes[target].value.clone());
        Ok((value, crossed))
    }

    fn overrides<'a>(
        &self,
        overrides: &'a [(Var, Tensor<F>)],
    ) -> Result<HashMap<usize, &'a Tensor<F>>, TensorError> {
        let mut subs = HashMap::new();
        for (var, t) in overrides {
            let i = self.index_of(*var)?;
            if !self.is_leaf(*var) {
                return Err(TensorError::NotALeaf);
            }
            if t.shape() != self.nodes[i].value.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "replay",
                    shapes: vec![self.nodes[i].value.shape().to_vec(), t.shape().to_vec()],
                });
            }
            subs.insert(i, t);
        }
        Ok(subs)
    }
}

/// Gradients of one scalar with respect to the variable leaves it depends on.
#[derive(Debug, Clone)]
pub struct Gradients<F: Scalar = f32> {
    tape: u64,
    leaves: HashMap<usize, Tensor<F>>,
}

impl<F: Scalar> Gradients<F> {
    /// `None` when `var` is not a variable leaf reachable from the loss.
    pub fn get(&self, var: Var) -> Option<&Tensor<F>> {
        if var.tape != self.tape {
            return None;
        }
        self.leaves.get(&var.index)
    }

    pub fn wrt(&self, var: Var) -> Result<&Tensor<F>, TensorError> {
        if var.tape != self.tape {
            return Err(TensorError::ForeignVar);
        }
        self.leaves.get(&var.index).ok_or(TensorError::NotALeaf)
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }
}

fn arity(prim: &Primitive, inputs: usize, expected: usize) -> Result<(), TensorError> {
    if inputs != expected {
        return Err(TensorError::Arity {
            op: prim.name(),
            expected,
            got: inputs,
        });
    }
    Ok(())
}

fn mismatch<F: Scalar>(prim: &Primitive, xs: &[&Tensor<F>]) -> TensorError {
    TensorError::ShapeMismatch {
        op: prim.name(),
        shapes: xs.iter().map(|t| t.shape().to_vec()).collect(),
    }
}

fn unary<F: Scalar>(x: &Tensor<F>, f: impl Fn(f64) -> f64) -> Tensor<F> {
    x.map(|v| F::from_f64(f(v.as_f64())))
}

/// `[m,k]·[k,n]` with f64 accumulation.
fn matmul_nn<F: Scalar>(a: &[F], m: usize, k: usize, b: &[F], n: usize) -> Vec<F> {
    let mut out = Vec::with_capacity(m * n);
    let mut acc = vec![0f64; n];
    for i in 0..m {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (kk, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            let aik = aik.as_f64();
            if aik == 0.0 {
                continue;
            }
            for (s, &bkj) in acc.iter_mut().zip(&b[kk * n..(kk + 1) * n]) {
                *s += aik * bkj.as_f64();
            }
        }
        out.extend(acc.iter().map(|&v| F::from_f64(v)));
    }
    out
}

/// `[m,n]·[k,n]ᵀ -> [m,k]`.
fn matmul_nt<F: Scalar>(g: &[F], m: usize, n: usize, b: &[F], k: usize) -> Vec<F> {
    let mut out = Vec::with_capacity(m * k);
    for i in 0..m {
        let gi = &g[i * n..(i + 1) * n];
        for kk in 0..k {
            let bk = &b[kk * n..(kk + 1) * n];
            let s: f64 = gi.iter().zip(bk).map(|(x, y)| x.as_f64() * y.as_f64()).sum();
            out.push(F::from_f64(s));
        }
    }
    out
}

/// `[m,k]ᵀ·[m,n] -> [k,n]`.
fn matmul_tn<F: Scalar>(a: &[F], m: usize, k: usize, g: &[F], n: usize) -> Vec<F> {
    let mut acc = vec![0f64; k * n];
    for i in 0..m {
        let gi = &g[i * n..(i + 1) * n];
        for (kk, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            let aik = aik.as_f64();
            if aik == 0.0 {
                continue;
            }
            for (s, &gij) in acc[kk * n..(kk + 1) * n].iter_mut().zip(gi) {
                *s += aik * gij.as_f64();
            }
        }
    }
    acc.into_iter().map(F::from_f64).collect()
}

/// `(m, k, n)` for a valid matmul, treating a rank-1 lhs as one row.
fn matmul_dims<F: Scalar>(prim: &Primitive, a: &Tensor<F>, b: &Tensor<F>) -> Result<(usize, usize, usize), TensorError> {
    let (m, k) = match a.shape() {
        [k] => (1, *k),
        [m, k] => (*m, *k),
        _ => return Err(mismatch(prim, &[a, b])),
    };
    match b.shape() {
        [kb, n] if *kb == k => Ok((m, k, *n)),
        _ => Err(mismatch(prim, &[a, b])),
    }
}

fn frame_count(n: usize, len: usize, hop: usize) -> usize {
    (n - len) / hop + 1
}

/// Forward definition of every primitive.
pub(crate) fn eval<F: Scalar>(prim: &Primitive, xs: &[&Tensor<F>]) -> Result<Tensor<F>, TensorError> {
    let out = match prim {
        Primitive::MatMul => {
            arity(prim, xs.len(), 2)?;
            let (a, b) = (xs[0], xs[1]);
            let (m, k, n) = matmul_dims(prim, a, b)?;
            let data = matmul_nn(a.data(), m, k, b.data(), n);
            let shape = if a.rank() == 1 { vec![n] } else { vec![m, n] };
            Tensor::from_parts(shape, data)
        }
        Primitive::AddBias => {
            arity(prim, xs.len(), 2)?;
            let (x, b) = (xs[0], xs[1]);
            let n = match (x.shape().last(), b.shape()) {
                (Some(&n), [nb]) if n == *nb => n,
                _ => return Err(mismatch(prim, xs)),
            };
            let mut out = x.clone();
            for row in out.data_mut().chunks_mut(n.max(1)) {
                for (v, &bj) in row.iter_mut().zip(b.data()) {
                    *v = *v + bj;
                }
            }
            out
        }
        Primitive::Relu => {
            arity(prim, xs.len(), 1)?;
            xs[0].map(|v| if v > F::zero() { v } else { F::zero() })
        }
        Primitive::Tanh => {
            arity(prim, xs.len(), 1)?;
            unary(xs[0], f64::tanh)
        }
        Primitive::Log => {
            arity(prim, xs.len(), 1)?;
            unary(xs[0], f64::ln)
        }
        Primitive::Sqrt => {
            arity(prim, xs.len(), 1)?;
            unary(xs[0], f64::sqrt)
        }
        Primitive::AddScalar { value } => {
            arity(prim, xs.len(), 1)?;
            let c = *value;
            unary(xs[0], |v| v + c)
        }
        Primitive::SoftmaxLast => {
            arity(prim, xs.len(), 1)?;
            let x = xs[0];
            let n = match x.shape().last() {
                Some(&n) if n > 0 => n,
                _ => return Err(mismatch(prim, xs)),
            };
            let mut data = Vec::with_capacity(x.numel());
            for row in x.data().chunks(n) {
                let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                data.extend(exps.iter().map(|e| F::from_f64(e / total)));
            }
            Tensor::from_parts(x.shape().to_vec(), data)
        }
        Primitive::MeanAxis { axis } => {
            arity(prim, xs.len(), 1)?;
            let x = xs[0];
            if *axis >= x.rank() || x.shape()[*axis] == 0 {
                return Err(mismatch(prim, xs));
            }
            let outer: usize = x.shape()[..*axis].iter().product();
            let n = x.shape()[*axis];
            let inner: usize = x.shape()[axis + 1..].iter().product();
            let mut data = Vec::with_capacity(outer * inner);
            let mut acc = vec![0f64; inner];
            for o in 0..outer {
                acc.iter_mut().for_each(|v| *v = 0.0);
                for r in 0..n {
                    let base = (o * n + r) * inner;
                    for (s, v) in acc.iter_mut().zip(&x.data()[base..base + inner]) {
                        *s += v.as_f64();
                    }
                }
                data.extend(acc.iter().map(|&s| F::from_f64(s / n as f64)));
            }
            let mut shape = x.shape().to_vec();
            shape.remove(*axis);
            Tensor::from_parts(shape, data)
        }
        Primitive::WeightedSumLeading => {
            arity(prim, xs.len(), 2)?;
            let (w, x) = (xs[0], xs[1]);
            let l = match (w.shape(), x.shape().first()) {
                ([l], Some(&lx)) if *l == lx && *l > 0 => *l,
                _ => return Err(mismatch(prim, xs)),
            };
            let inner = x.numel() / l;
            let mut acc = vec![0f64; inner];
            for (li, &wl) in w.data().iter().enumerate() {
                let wl = wl.as_f64();
                for (s, v) in acc.iter_mut().zip(&x.data()[li * inner..(li + 1) * inner]) {
                    *s += wl * v.as_f64();
                }
            }
            Tensor::from_parts(x.shape()[1..].to_vec(), acc.into_iter().map(F::from_f64).collect())
        }
        Primitive::Mul | Primitive::Add => {
            arity(prim, xs.len(), 2)?;
            let (a, b) = (xs[0], xs[1]);
            if a.shape() != b.shape() {
                return Err(mismatch(prim, xs));
            }
            let mul = matches!(prim, Primitive::Mul);
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(&x, &y)| if mul { x * y } else { x + y })
                .collect();
            Tensor::from_parts(a.shape().to_vec(), data)
        }
        Primitive::Sum => {
            arity(prim, xs.len(), 1)?;
            let s: f64 = xs[0].data().iter().map(|v| v.as_f64()).sum();
            Tensor::scalar(F::from_f64(s))
        }
        Primitive::CrossEntropy { target } => {
            arity(prim, xs.len(), 1)?;
            let z = xs[0];
            if z.rank() != 1 || z.numel() == 0 {
                return Err(mismatch(prim, xs));
            }
            if *target >= z.numel() {
                return Err(TensorError::InvalidArgument {
                    op: prim.name(),
                    reason: format!("target {target} outside {} classes", z.numel()),
                });
            }
            let (lse, _) = log_softmax_parts(z);
            Tensor::scalar(F::from_f64(lse - z.data()[*target].as_f64()))
        }
        Primitive::Frame { len, hop } => {
            arity(prim, xs.len(), 1)?;
            let x = xs[0];
            if *len == 0 || *hop == 0 {
                return Err(TensorError::InvalidArgument {
                    op: prim.name(),
                    reason: "frame length and hop must be positive".into(),
                });
            }
            match x.shape() {
                [n] if *n >= *len => {
                    let t = frame_count(*n, *len, *hop);
                    let mut data = Vec::with_capacity(t * len);
                    for f in 0..t {
                        data.extend_from_slice(&x.data()[f * hop..f * hop + len]);
                    }
                    Tensor::from_parts(vec![t, *len], data)
                }
                _ => return Err(mismatch(prim, xs)),
            }
        }
        Primitive::Stack => {
            if xs.is_empty() {
                return Err(TensorError::Arity {
                    op: prim.name(),
                    expected: 1,
                    got: 0,
                });
            }
            let shape0 = xs[0].shape();
            if xs.iter().any(|t| t.shape() != shape0) {
                return Err(mismatch(prim, xs));
            }
            let mut shape = vec![xs.len()];
            shape.extend_from_slice(shape0);
            let data = xs.iter().flat_map(|t| t.data().iter().copied()).collect();
            Tensor::from_parts(shape, data)
        }
    };
    if !out.is_finite() {
        return Err(TensorError::NonFinite { op: prim.name() });
    }
    Ok(out)
}

/// `(logsumexp(z), softmax(z))` in f64.
fn log_softmax_parts<F: Scalar>(z: &Tensor<F>) -> (f64, Vec<f64>) {
    let max = z.data().iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.data().iter().map(|v| (v.as_f64() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    (max + total.ln(), exps.iter().map(|e| e / total).collect())
}

/// Vector-Jacobian products of `prim` for the operands flagged in `wanted`.
fn vjp<F: Scalar>(
    prim: &Primitive,
    xs: &[&Tensor<F>],
    out: &Tensor<F>,
    g: &Tensor<F>,
    wanted: &[bool],
) -> Vec<Option<Tensor<F>>> {
    let want = |i: usize| wanted.get(i).copied().unwrap_or(false);
    let elementwise = |f: &dyn Fn(F, F, F) -> F| -> Tensor<F> {
        let data = xs[0]
            .data()
            .iter()
            .zip(out.data())
            .zip(g.data())
            .map(|((&x, &y), &gy)| f(x, y, gy))
            .collect();
        Tensor::from_parts(xs[0].shape().to_vec(), data)
    };
    match prim {
        Primitive::MatMul => {
            let (a, b) = (xs[0], xs[1]);
            let (m, k, n) = match matmul_dims(prim, a, b) {
                Ok(d) => d,
                Err(_) => unreachable!("recorded matmul has valid shapes"),
            };
            let da = want(0).then(|| {
                Tensor::from_parts(a.shape().to_vec(), matmul_nt(g.data(), m, n, b.data(), k))
            });
            let db = want(1).then(|| {
                Tensor::from_parts(b.shape().to_vec(), matmul_tn(a.data(), m, k, g.data(), n))
            });
            vec![da, db]
        }
        Primitive::AddBias => {
            let n = xs[1].numel();
            let dx = want(0).then(|| g.clone());
            let db = want(1).then(|| {
                let mut acc = vec![0f64; n];
                for row in g.data().chunks(n.max(1)) {
                    for (s, v) in acc.iter_mut().zip(row) {
                        *s += v.as_f64();
                    }
                }
                Tensor::vector(acc.into_iter().map(F::from_f64).collect())
            });
            vec![dx, db]
        }
        Primitive::Relu => vec![want(0).then(|| {
            elementwise(&|x, _, gy| if x > F::zero() { gy } else { F::zero() })
        })],
        Primitive::Tanh => vec![want(0).then(|| {
            elementwise(&|_, y, gy| F::from_f64(gy.as_f64() * (1.0 - y.as_f64() * y.as_f64())))
        })],
        Primitive::Log => vec![want(0).then(|| elementwise(&|x, _, gy| F::from_f64(gy.as_f64() / x.as_f64())))],
        Primitive::Sqrt => vec![want(0).then(|| {
            elementwise(&|_, y, gy| F::from_f64(gy.as_f64() / (2.0 * y.as_f64())))
        })],
        Primitive::AddScalar { .. } => vec![want(0).then(|| g.clone())],
        Primitive::SoftmaxLast => vec![want(0).then(|| {
            let n = *out.shape().last().unwrap_or(&1);
            let mut data = Vec::with_capacity(out.numel());
            for (ys, gs) in out.data().chunks(n).zip(g.data().chunks(n)) {
                let dot: f64 = ys.iter().zip(gs).map(|(y, gy)| y.as_f64() * gy.as_f64()).sum();
                data.extend(
                    ys.iter()
                        .zip(gs)
                        .map(|(y, gy)| F::from_f64(y.as_f64() * (gy.as_f64() - dot))),
                );
            }
            Tensor::from_parts(out.shape().to_vec(), data)
        })],
        Primitive::MeanAxis { axis } => vec![want(0).then(|| {
            let x = xs[0];
            let outer: usize = x.shape()[..*axis].iter().product();
            let n = x.shape()[*axis];
            let inner: usize = x.shape()[axis + 1..].iter().product();
            let scale = 1.0 / n as f64;
            let mut data = Vec::with_capacity(x.numel());
            for o in 0..outer {
                let go = &g.data()[o * inner..(o + 1) * inner];
                for _ in 0..n {
                    data.extend(go.iter().map(|v| F::from_f64(v.as_f64() * scale)));
                }
            }
            Tensor::from_parts(x.shape().to_vec(), data)
        })],
        Primitive::WeightedSumLeading => {
            let (w, x) = (xs[0], xs[1]);
            let inner = g.numel();
            let dw = want(0).then(|| {
                let data = (0..w.numel())
                    .map(|l| {
                        let s: f64 = x.data()[l * inner..(l + 1) * inner]
                            .iter()
                            .zip(g.data())
                            .map(|(a, b)| a.as_f64() * b.as_f64())
                            .sum();
                        F::from_f64(s)
                    })
                    .collect();
                Tensor::vector(data)
            });
            let dx = want(1).then(|| {
                let mut data = Vec::with_capacity(x.numel());
                for &wl in w.data() {
                    let wl = wl.as_f64();
                    data.extend(g.data().iter().map(|v| F::from_f64(wl * v.as_f64())));
                }
                Tensor::from_parts(x.shape().to_vec(), data)
            });
            vec![dw, dx]
        }
        Primitive::Mul => {
            let (a, b) = (xs[0], xs[1]);
            let prod = |other: &Tensor<F>| {
                let data = other.data().iter().zip(g.data()).map(|(&o, &gy)| o * gy).collect();
                Tensor::from_parts(other.shape().to_vec(), data)
            };
            vec![want(0).then(|| prod(b)), want(1).then(|| prod(a))]
        }
        Primitive::Add => vec![want(0).then(|| g.clone()), want(1).then(|| g.clone())],
        Primitive::Sum => {
            let gy = g.data()[0];
            vec![want(0).then(|| Tensor::full(xs[0].shape(), gy))]
        }
        Primitive::CrossEntropy { target } => vec![want(0).then(|| {
            let gy = g.data()[0].as_f64();
            let (_, probs) = log_softmax_parts(xs[0]);
            let data = probs
                .iter()
                .enumerate()
                .map(|(c, p)| F::from_f64(gy * (p - if c == *target { 1.0 } else { 0.0 })))
                .collect();
            Tensor::vector(data)
        })],
        Primitive::Frame { len, hop } => vec![want(0).then(|| {
            let n = xs[0].numel();
            let mut acc = vec![0f64; n];
            for (f, row) in g.data().chunks(*len).enumerate() {
                for (s, v) in acc[f * hop..f * hop + len].iter_mut().zip(row) {
                    *s += v.as_f64();
                }
            }
            Tensor::vector(acc.into_iter().map(F::from_f64).collect())
        })],
        Primitive::Stack => {
            let inner = xs[0].numel();
            (0..xs.len())
                .map(|i| {
                    want(i).then(|| {
                        Tensor::from_parts(xs[i].shape().to_vec(), g.data()[i * inner..(i + 1) * inner].to_vec())
                    })
                })
                .collect()
        }
    }
}
