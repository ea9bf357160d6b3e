use std::collections::HashMap;

use super::kernels::{axis_strides, matmul, matmul_nt, matmul_tn};
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Gradient rule for a user-defined primitive: receives the input values, the
/// output value and the output gradient; returns one optional gradient per
/// input.
pub type CustomBackward<T> = Box<dyn Fn(&[&Tensor<T>], &Tensor<T>, &[T]) -> Vec<Option<Vec<T>>>>;

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Clamp(Var, T, T),
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Embedding { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, pad: usize, probs: Vec<T>, count: usize },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    MaxRows { x: Var, argmax: Vec<usize> },
    SelectCols { x: Var, cols: Vec<usize> },
    Reshape(Var),
    Custom { name: String, inputs: Vec<Var>, backward: CustomBackward<T> },
}

impl<T> Op<T> {
    fn name(&self) -> &str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Log(_) => "log",
            Op::Clamp(..) => "clamp",
            Op::Softmax { .. } => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Embedding { .. } => "embedding_lookup",
            Op::CrossEntropy { .. } => "sparse_categorical_cross_entropy",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::MeanRows(_) => "mean_rows",
            Op::MaxRows { .. } => "max_rows",
            Op::SelectCols { .. } => "select_cols",
            Op::Reshape(_) => "reshape",
            Op::Custom { name, .. } => name,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => {
                vec![*a, *b]
            }
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Log(a)
            | Op::Clamp(a, ..)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::MeanRows(a)
            | Op::Reshape(a) => vec![*a],
            Op::Softmax { x, .. }
            | Op::SliceCols { x, .. }
            | Op::MaxRows { x, .. }
            | Op::SelectCols { x, .. } => vec![*x],
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Embedding { table, .. } => vec![*table],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::ConcatCols(vs) | Op::ConcatRows(vs) => vs.clone(),
            Op::Custom { inputs, .. } => inputs.clone(),
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records primitive operations in topological order for one forward pass.
///
/// Nodes are appended only after their inputs, so the recording order is a
/// valid topological order and [`Graph::backward`] is a single reverse sweep.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    bound: HashMap<ParamId, Var>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn dim_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Dimension {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bound: HashMap::new(),
        }
    }

    /// Number of recorded nodes (leaves included).
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.values()[0]
    }

    pub fn op_name(&self, v: Var) -> &str {
        self.nodes[v.0].op.name()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn vals(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.values()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn out(shape: Vec<usize>, values: Vec<T>) -> Tensor<T> {
        Tensor::new(shape, values).expect("kernel produced a consistent shape")
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a value that collects a gradient but is not owned by a store.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar_constant(&mut self, value: T) -> Var {
        self.constant(Tensor::scalar(value))
    }

    /// Binds a stored parameter into this graph. Binding twice returns the
    /// same node, so every use of a parameter shares one gradient slot.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let id = store.rebind(id);
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let tensor = store.get(id);
        let requires_grad = tensor.requires_grad();
        let mut value = tensor.clone();
        value.zero_grad();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        let v = Var(self.nodes.len() - 1);
        self.bound.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(dim_err("matmul", self.shape(a), self.shape(b)));
        }
        let out = matmul(self.vals(a), self.vals(b), m, k, n);
        Ok(self.push(Self::out(vec![m, n], out), Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let src = self.vals(a);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        Ok(self.push(Self::out(vec![n, m], out), Op::Transpose(a)))
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err(op, self.shape(a), self.shape(b)));
        }
        let out = self.vals(a).iter().zip(self.vals(b)).map(|(&x, &y)| f(x, y)).collect();
        Ok(Self::out(self.shape(a).to_vec(), out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("div", a, b, |x, y| x / y)?;
        Ok(self.push(t, Op::Div(a, b)))
    }

    /// Adds a length-`n` row vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if self.value(row).len() != n {
            return Err(dim_err("add_row", self.shape(a), self.shape(row)));
        }
        let r = self.vals(row);
        let out = self
            .vals(a)
            .chunks(n)
            .flat_map(|chunk| chunk.iter().zip(r).map(|(&x, &y)| x + y))
            .collect();
        Ok(self.push(Self::out(vec![m, n], out), Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.vals(a).iter().map(|&x| x * c).collect();
        let t = Self::out(self.shape(a).to_vec(), out);
        self.push(t, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let out = self.vals(a).iter().map(|&x| x + c).collect();
        let t = Self::out(self.shape(a).to_vec(), out);
        self.push(t, Op::AddScalar(a))
    }

    /// `c - a`, elementwise.
    pub fn rsub_scalar(&mut self, c: T, a: Var) -> Var {
        let neg = self.scale(a, -T::one());
        self.add_scalar(neg, c)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.vals(a).iter().map(|&x| x.max(T::zero())).collect();
        let t = Self::out(self.shape(a).to_vec(), out);
        self.push(t, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self
            .vals(a)
            .iter()
            .map(|&x| T::one() / (T::one() + (-x).exp()))
            .collect();
        let t = Self::out(self.shape(a).to_vec(), out);
        self.push(t, Op::Sigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.vals(a).iter().map(|&x| x.ln()).collect();
        let t = Self::out(self.shape(a).to_vec(), out);
        self.push(t, Op::Log(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        let out = self.vals(a).iter().map(|&x| x.max(lo).min(hi)).collect();
        let t = Self::out(self.shape(a).to_vec(), out);
        self.push(t, Op::Clamp(a, lo, hi))
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Dimension {
                op: "softmax",
                lhs: shape,
                rhs: vec![axis],
            });
        }
        let out = softmax_values(self.vals(x), &shape, axis, None)?;
        Ok(self.push(Self::out(shape, out), Op::Softmax { x, axis }))
    }

    /// Softmax over the last axis of a matrix where `visible[i*n+j] == false`
    /// forces an exact zero weight.
    pub fn masked_softmax(&mut self, x: Var, visible: &[bool]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (_, n) = self.value(x).dims2()?;
        if visible.len() != self.value(x).len() {
            return Err(dim_err("masked_softmax", &shape, &[visible.len() / n.max(1), n]));
        }
        let out = softmax_values(self.vals(x), &shape, 1, Some(visible))?;
        Ok(self.push(Self::out(shape, out), Op::Softmax { x, axis: 1 }))
    }

    /// Normalises each row (last axis) to zero mean and unit variance, then
    /// applies `gamma * x̂ + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        if !(eps >= T::zero()) || !eps.is_finite() {
            return Err(Error::Parameter(format!("layer_norm eps must be non-negative, got {eps}")));
        }
        let shape = self.shape(x).to_vec();
        let n = *shape.last().ok_or_else(|| Error::Shape("layer_norm on a scalar".into()))?;
        if self.value(gamma).len() != n || self.value(beta).len() != n {
            return Err(dim_err("layer_norm", &shape, self.shape(gamma)));
        }
        let nf = T::of(n as f64);
        let (g, b) = (self.vals(gamma), self.vals(beta));
        let src = self.vals(x);
        let rows = src.len() / n;
        let mut xhat = Vec::with_capacity(src.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(src.len());
        for row in src.chunks(n) {
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let denom = var + eps;
            if denom <= T::zero() {
                return Err(Error::Parameter(
                    "layer_norm with eps = 0 on a zero-variance row".into(),
                ));
            }
            let is = T::one() / denom.sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(g[j] * h + b[j]);
            }
        }
        Ok(self.push(
            Self::out(shape, out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    /// Gathers rows of a `V×d` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (vocab_size, d) = self.value(table).dims2()?;
        if ids.is_empty() {
            return Err(Error::Length("embedding lookup of an empty id sequence".into()));
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= vocab_size) {
            return Err(Error::Vocabulary { id, vocab_size });
        }
        let src = self.vals(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&src[id * d..(id + 1) * d]);
        }
        Ok(self.push(
            Self::out(vec![ids.len(), d], out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`, skipping positions whose target is `pad`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], pad: usize) -> Result<Var> {
        let (t, v) = self.value(logits).dims2()?;
        if targets.len() != t {
            return Err(dim_err("cross_entropy", &[t, v], &[targets.len()]));
        }
        if let Some(&id) = targets.iter().find(|&&id| id >= v && id != pad) {
            return Err(Error::Vocabulary { id, vocab_size: v });
        }
        let count = targets.iter().filter(|&&id| id != pad).count();
        if count == 0 {
            return Err(Error::DegenerateBatch("every target position is padding".into()));
        }
        let probs = softmax_values(self.vals(logits), &[t, v], 1, None)?;
        let src = self.vals(logits);
        let mut total = T::zero();
        for (i, &target) in targets.iter().enumerate() {
            if target == pad {
                continue;
            }
            let row = &src[i * v..(i + 1) * v];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
            total += lse - row[target];
        }
        let loss = total / T::of(count as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                pad,
                probs,
                count,
            },
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.value(x).dims2()?;
        if len == 0 || start + len > n {
            return Err(dim_err("slice_cols", &[m, n], &[start, len]));
        }
        let out = self
            .vals(x)
            .chunks(n)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        Ok(self.push(Self::out(vec![m, len], out), Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let (m, _) = self.value(first).dims2()?;
        let mut total = 0;
        for &p in parts {
            let (pm, pn) = self.value(p).dims2()?;
            if pm != m {
                return Err(dim_err("concat_cols", self.shape(first), self.shape(p)));
            }
            total += pn;
        }
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        Ok(self.push(Self::out(vec![m, total], out), Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let (_, n) = self.value(first).dims2()?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pm, pn) = self.value(p).dims2()?;
            if pn != n {
                return Err(dim_err("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += pm;
            out.extend_from_slice(self.vals(p));
        }
        Ok(self.push(Self::out(vec![rows, n], out), Op::ConcatRows(parts.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.vals(a).iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let vals = self.vals(a);
        let s = vals.iter().copied().sum::<T>() / T::of(vals.len() as f64);
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Column means of a matrix, as a `1×n` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let mut out = vec![T::zero(); n];
        for row in self.vals(a).chunks(n) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let mf = T::of(m as f64);
        out.iter_mut().for_each(|o| *o /= mf);
        Ok(self.push(Self::out(vec![1, n], out), Op::MeanRows(a)))
    }

    /// Column maxima of a matrix, as a `1×n` row. Ties route the gradient to
    /// the first maximal row.
    pub fn max_rows(&mut self, a: Var) -> Result<Var> {
        let (_, n) = self.value(a).dims2()?;
        let mut out = vec![T::neg_infinity(); n];
        let mut argmax = vec![0; n];
        for (i, row) in self.vals(a).chunks(n).enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > out[j] {
                    out[j] = v;
                    argmax[j] = i;
                }
            }
        }
        Ok(self.push(Self::out(vec![1, n], out), Op::MaxRows { x: a, argmax }))
    }

    pub fn select_cols(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let (m, n) = self.value(x).dims2()?;
        if cols.is_empty() || cols.iter().any(|&c| c >= n) {
            return Err(dim_err("select_cols", &[m, n], cols));
        }
        let out = self
            .vals(x)
            .chunks(n)
            .flat_map(|row| cols.iter().map(move |&c| row[c]))
            .collect();
        Ok(self.push(
            Self::out(vec![m, cols.len()], out),
            Op::SelectCols {
                x,
                cols: cols.to_vec(),
            },
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(a)))
    }

    /// Records a primitive whose value and gradient rule are supplied by the
    /// caller. Used for extensions and for exercising the gradient checker.
    pub fn custom(
        &mut self,
        name: impl Into<String>,
        inputs: &[Var],
        value: Tensor<T>,
        backward: CustomBackward<T>,
    ) -> Var {
        self.push(
            value,
            Op::Custom {
                name: name.into(),
                inputs: inputs.to_vec(),
                backward,
            },
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut visited = 0;
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            visited += 1;
            let contributions = self.local_grads(node, &g);
            grads[i] = Some(g);
            for (input, delta) in contributions {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, &d)| *a += d),
                    slot @ None => *slot = Some(delta),
                }
            }
        }
        Ok(Gradients {
            grads,
            bound: self.bound.iter().map(|(&id, &v)| (id, v)).collect(),
            visited,
        })
    }

    fn local_grads(&self, node: &Node<T>, g: &[T]) -> Vec<(Var, Vec<T>)> {
        let out = &node.value;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2().unwrap();
                let (_, n) = self.value(*b).dims2().unwrap();
                let mut res = Vec::new();
                if self.requires_grad(*a) {
                    res.push((*a, matmul_nt(g, self.vals(*b), m, k, n)));
                }
                if self.requires_grad(*b) {
                    res.push((*b, matmul_tn(self.vals(*a), g, m, k, n)));
                }
                res
            }
            Op::Transpose(a) => {
                let (m, n) = self.value(*a).dims2().unwrap();
                let mut d = vec![T::zero(); m * n];
                for i in 0..m {
                    for j in 0..n {
                        d[i * n + j] = g[j * m + i];
                    }
                }
                vec![(*a, d)]
            }
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|&x| -x).collect())],
            Op::AddRow(a, r) => {
                let n = self.value(*r).len();
                let mut dr = vec![T::zero(); n];
                for row in g.chunks(n) {
                    dr.iter_mut().zip(row).for_each(|(d, &x)| *d += x);
                }
                vec![(*a, g.to_vec()), (*r, dr)]
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.vals(*a), self.vals(*b));
                vec![
                    (*a, g.iter().zip(bv).map(|(&x, &y)| x * y).collect()),
                    (*b, g.iter().zip(av).map(|(&x, &y)| x * y).collect()),
                ]
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.vals(*a), self.vals(*b));
                vec![
                    (*a, g.iter().zip(bv).map(|(&x, &y)| x / y).collect()),
                    (
                        *b,
                        g.iter()
                            .zip(av.iter().zip(bv))
                            .map(|(&x, (&p, &q))| -x * p / (q * q))
                            .collect(),
                    ),
                ]
            }
            Op::Scale(a, c) => vec![(*a, g.iter().map(|&x| x * *c).collect())],
            Op::AddScalar(a) | Op::Reshape(a) => vec![(*a, g.to_vec())],
            Op::Relu(a) => vec![(
                *a,
                g.iter()
                    .zip(self.vals(*a))
                    .map(|(&x, &v)| if v > T::zero() { x } else { T::zero() })
                    .collect(),
            )],
            Op::Sigmoid(a) => vec![(
                *a,
                g.iter()
                    .zip(out.values())
                    .map(|(&x, &s)| x * s * (T::one() - s))
                    .collect(),
            )],
            Op::Log(a) => vec![(*a, g.iter().zip(self.vals(*a)).map(|(&x, &v)| x / v).collect())],
            Op::Clamp(a, lo, hi) => vec![(
                *a,
                g.iter()
                    .zip(self.vals(*a))
                    .map(|(&x, &v)| if v < *lo || v > *hi { T::zero() } else { x })
                    .collect(),
            )],
            Op::Softmax { x, axis } => {
                let (outer, extent, inner) = axis_strides(out.shape(), *axis);
                let y = out.values();
                let mut d = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * extent * inner + i;
                        let mut dot = T::zero();
                        for e in 0..extent {
                            let idx = base + e * inner;
                            dot += g[idx] * y[idx];
                        }
                        for e in 0..extent {
                            let idx = base + e * inner;
                            d[idx] = y[idx] * (g[idx] - dot);
                        }
                    }
                }
                vec![(*x, d)]
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gam = self.vals(*gamma);
                let n = gam.len();
                let nf = T::of(n as f64);
                let mut dx = vec![T::zero(); g.len()];
                let mut dgamma = vec![T::zero(); n];
                let mut dbeta = vec![T::zero(); n];
                for (r, (grow, hrow)) in g.chunks(n).zip(xhat.chunks(n)).enumerate() {
                    let mut sum_dh = T::zero();
                    let mut sum_dh_h = T::zero();
                    for j in 0..n {
                        dgamma[j] += grow[j] * hrow[j];
                        dbeta[j] += grow[j];
                        let dh = grow[j] * gam[j];
                        sum_dh += dh;
                        sum_dh_h += dh * hrow[j];
                    }
                    let scale = inv_std[r] / nf;
                    for j in 0..n {
                        let dh = grow[j] * gam[j];
                        dx[r * n + j] = scale * (nf * dh - sum_dh - hrow[j] * sum_dh_h);
                    }
                }
                vec![(*x, dx), (*gamma, dgamma), (*beta, dbeta)]
            }
            Op::Embedding { table, ids } => {
                let (vocab, d) = self.value(*table).dims2().unwrap();
                let mut dt = vec![T::zero(); vocab * d];
                for (row, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[id * d + j] += g[row * d + j];
                    }
                }
                vec![(*table, dt)]
            }
            Op::CrossEntropy {
                logits,
                targets,
                pad,
                probs,
                count,
            } => {
                let v = self.value(*logits).shape()[1];
                let scale = g[0] / T::of(*count as f64);
                let mut d = vec![T::zero(); probs.len()];
                for (i, &t) in targets.iter().enumerate() {
                    if t == *pad {
                        continue;
                    }
                    for j in 0..v {
                        d[i * v + j] = probs[i * v + j] * scale;
                    }
                    d[i * v + t] -= scale;
                }
                vec![(*logits, d)]
            }
            Op::SliceCols { x, start } => {
                let (m, n) = self.value(*x).dims2().unwrap();
                let len = out.shape()[1];
                let mut d = vec![T::zero(); m * n];
                for i in 0..m {
                    d[i * n + start..i * n + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                vec![(*x, d)]
            }
            Op::ConcatCols(parts) => {
                let total = out.shape()[1];
                let mut offset = 0;
                let mut res = Vec::with_capacity(parts.len());
                for &p in parts {
                    let (m, n) = self.value(p).dims2().unwrap();
                    let mut d = Vec::with_capacity(m * n);
                    for i in 0..m {
                        d.extend_from_slice(&g[i * total + offset..i * total + offset + n]);
                    }
                    offset += n;
                    res.push((p, d));
                }
                res
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                let mut res = Vec::with_capacity(parts.len());
                for &p in parts {
                    let len = self.value(p).len();
                    res.push((p, g[offset..offset + len].to_vec()));
                    offset += len;
                }
                res
            }
            Op::Sum(a) => vec![(*a, vec![g[0]; self.value(*a).len()])],
            Op::Mean(a) => {
                let len = self.value(*a).len();
                vec![(*a, vec![g[0] / T::of(len as f64); len])]
            }
            Op::MeanRows(a) => {
                let (m, _) = self.value(*a).dims2().unwrap();
                let mf = T::of(m as f64);
                let row: Vec<T> = g.iter().map(|&x| x / mf).collect();
                vec![(*a, row.repeat(m))]
            }
            Op::MaxRows { x, argmax } => {
                let (m, n) = self.value(*x).dims2().unwrap();
                let mut d = vec![T::zero(); m * n];
                for (j, &i) in argmax.iter().enumerate() {
                    d[i * n + j] = g[j];
                }
                vec![(*x, d)]
            }
            Op::SelectCols { x, cols } => {
                let (m, n) = self.value(*x).dims2().unwrap();
                let k = cols.len();
                let mut d = vec![T::zero(); m * n];
                for i in 0..m {
                    for (c, &col) in cols.iter().enumerate() {
                        d[i * n + col] += g[i * k + c];
                    }
                }
                vec![(*x, d)]
            }
            Op::Custom { inputs, backward, .. } => {
                let vals: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
                inputs
                    .iter()
                    .zip(backward(&vals, out, g))
                    .filter_map(|(&v, d)| d.map(|d| (v, d)))
                    .collect()
            }
        }
    }
}

fn softmax_values<T: Scalar>(src: &[T], shape: &[usize], axis: usize, visible: Option<&[bool]>) -> Result<Vec<T>> {
    let (outer, extent, inner) = axis_strides(shape, axis);
    let mut out = vec![T::zero(); src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * extent * inner + i;
            let seen = |e: usize| visible.is_none_or(|m| m[base + e * inner]);
            let mut max = T::neg_infinity();
            for e in (0..extent).filter(|&e| seen(e)) {
                max = max.max(src[base + e * inner]);
            }
            if max == T::neg_infinity() {
                return Err(Error::Masking { row: o * inner + i });
            }
            let mut total = T::zero();
            for e in (0..extent).filter(|&e| seen(e)) {
                let idx = base + e * inner;
                let z = (src[idx] - max).exp();
                out[idx] = z;
                total += z;
            }
            for e in (0..extent).filter(|&e| seen(e)) {
                out[base + e * inner] /= total;
            }
        }
    }
    Ok(out)
}

/// Result of [`Graph::backward`]: one gradient slot per recorded node.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    bound: Vec<(ParamId, Var)>,
    visited: usize,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a recorded node, if the loss depends on it.
    pub fn of(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Number of operations processed by the reverse sweep.
    pub fn visited(&self) -> usize {
        self.visited
    }

    /// Adds gradients for every parameter of `store` bound in the graph.
    /// Trainable parameters the loss does not reach get a zero gradient.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) {
        let sid = store.store_id();
        let mut per_param: HashMap<usize, Var> = HashMap::new();
        for (id, v) in &self.bound {
            if id.store == sid {
                per_param.insert(id.index, *v);
            }
        }
        for (index, (_, tensor)) in store.tensors_mut().enumerate() {
            if !tensor.requires_grad() {
                continue;
            }
            let delta = per_param.get(&index).and_then(|&v| self.of(v));
            tensor.accumulate_grad(delta);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(mat(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let i = g.constant(Tensor::eye(2));
        let ai = g.matmul(a, i).unwrap();
        assert_eq!(g.value(ai).values(), &[1.0, 2.0, 3.0, 4.0]);

        let ones = g.constant(mat(&[&[1.0], &[1.0]]));
        let r = g.matmul(a, ones).unwrap();
        assert_eq!(g.value(r).shape(), &[2, 1]);
        assert_eq!(g.value(r).values(), &[3.0, 7.0]);

        let x = g.constant(Tensor::zeros(&[2, 3]));
        let y = g.constant(Tensor::zeros(&[2, 3]));
        match g.matmul(x, y) {
            Err(Error::Dimension { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("expected dimension error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new(vec![2], vec![0.0, 0.0]).unwrap());
        let s = g.softmax(x, 0).unwrap();
        assert_eq!(g.value(s).values(), &[0.5, 0.5]);

        let x = g.constant(Tensor::new(vec![2], vec![0.0, 3f64.ln()]).unwrap());
        let s = g.softmax(x, 0).unwrap();
        let v = g.value(s).values();
        assert!((v[0] - 0.25).abs() < 1e-15 && (v[1] - 0.75).abs() < 1e-15);

        let x = g.constant(Tensor::new(vec![2], vec![1000.0, 1000.0]).unwrap());
        let s = g.softmax(x, 0).unwrap();
        assert_eq!(g.value(s).values(), &[0.5, 0.5]);

        assert!(matches!(g.softmax(x, 1), Err(Error::Dimension { .. })));
    }

    #[test]
    fn softmax_along_leading_axis_normalises_columns() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(mat(&[&[1.0, 5.0], &[2.0, -1.0], &[0.5, 0.0]]));
        let s = g.softmax(x, 0).unwrap();
        let t = g.value(s);
        for c in 0..2 {
            let col: f64 = (0..3).map(|r| t.get(&[r, c])).sum();
            assert!((col - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_masked_row_is_an_error() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[2, 2]));
        assert!(matches!(
            g.masked_softmax(x, &[true, false, false, false]),
            Err(Error::Masking { row: 1 })
        ));
    }

    #[test]
    fn layer_norm_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(mat(&[&[1.0, 3.0]]));
        let one = g.constant(Tensor::full(&[2], 1.0));
        let zero = g.constant(Tensor::zeros(&[2]));
        let y = g.layer_norm(x, one, zero, 0.0).unwrap();
        assert_eq!(g.value(y).values(), &[-1.0, 1.0]);

        let c = g.constant(mat(&[&[4.0, 4.0, 4.0]]));
        let one3 = g.constant(Tensor::full(&[3], 1.0));
        let five = g.constant(Tensor::full(&[3], 5.0));
        let y = g.layer_norm(c, one3, five, 1e-5).unwrap();
        assert!(g.value(y).values().iter().all(|&v| (v - 5.0).abs() < 1e-9));

        let x = g.constant(mat(&[&[0.3, -2.0, 7.0]]));
        let zero3 = g.constant(Tensor::zeros(&[3]));
        let beta = g.constant(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let y = g.layer_norm(x, zero3, beta, 1e-5).unwrap();
        assert_eq!(g.value(y).values(), &[1.0, 2.0, 3.0]);

        assert!(matches!(g.layer_norm(x, one3, zero3, -1e-5), Err(Error::Parameter(_))));
        assert!(matches!(g.layer_norm(c, one3, zero3, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn embedding_examples() {
        let mut store = ParamStore::new();
        let id = store.insert("table", mat(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
        let mut g = Graph::<f64>::new();
        let table = g.param(&store, id);
        let e = g.embedding(table, &[0]).unwrap();
        assert_eq!(g.value(e).values(), &[1.0, 2.0]);

        let e = g.embedding(table, &[2, 2]).unwrap();
        assert_eq!(g.value(e).values(), &[5.0, 6.0, 5.0, 6.0]);
        let loss = g.sum(e);
        let grads = g.backward(loss).unwrap();
        grads.accumulate_into(&mut store);
        assert_eq!(store.get(id).grad().unwrap(), &[0.0, 0.0, 0.0, 0.0, 2.0, 2.0]);

        assert!(matches!(
            g.embedding(table, &[3]),
            Err(Error::Vocabulary { id: 3, vocab_size: 3 })
        ));
    }

    #[test]
    fn cross_entropy_examples() {
        let mut g = Graph::<f64>::new();
        let uniform = g.constant(Tensor::zeros(&[1, 4]));
        let l = g.cross_entropy(uniform, &[2], 99).unwrap();
        assert!((g.scalar(l) - 4f64.ln()).abs() < 1e-12);

        let mut peaked = Tensor::zeros(&[1, 4]);
        peaked.values_mut()[1] = 50.0;
        let p = g.constant(peaked);
        let l = g.cross_entropy(p, &[1], 99).unwrap();
        assert!(g.scalar(l) < 1e-6);

        let two = g.constant(mat(&[&[0.1, 0.7, -0.2], &[3.0, 1.0, 0.0]]));
        let one = g.constant(mat(&[&[0.1, 0.7, -0.2]]));
        let both = g.cross_entropy(two, &[1, 0], 0).unwrap();
        let single = g.cross_entropy(one, &[1], 0).unwrap();
        assert_eq!(g.scalar(both), g.scalar(single));

        assert!(matches!(g.cross_entropy(one, &[0], 0), Err(Error::DegenerateBatch(_))));
    }

    #[test]
    fn backward_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(Tensor::scalar(3.0));
        let sq = g.mul(x, x).unwrap();
        let grads = g.backward(sq).unwrap();
        assert_eq!(grads.of(x).unwrap(), &[6.0]);

        let mut g = Graph::<f64>::new();
        let x = g.variable(Tensor::scalar(1.0));
        let y = g.add(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.of(x).unwrap(), &[2.0]);

        let mut store = ParamStore::new();
        let used = store.insert("used", Tensor::scalar(2.0));
        let unused = store.insert("unused", Tensor::scalar(5.0));
        let mut g = Graph::<f64>::new();
        let u = g.param(&store, used);
        let _ = g.param(&store, unused);
        let l = g.scale(u, 3.0);
        g.backward(l).unwrap().accumulate_into(&mut store);
        assert_eq!(store.get(used).grad().unwrap(), &[3.0]);
        assert!(store.get(unused).grad().unwrap_or(&[0.0]).iter().all(|&v| v == 0.0));

        let mut g = Graph::<f64>::new();
        let v = g.variable(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(v), Err(Error::Shape(_))));
    }

    #[test]
    fn gradients_accumulate_across_backward_calls() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::scalar(1.5));
        for _ in 0..2 {
            let mut g = Graph::<f64>::new();
            let p = g.param(&store, w);
            let l = g.mul(p, p).unwrap();
            g.backward(l).unwrap().accumulate_into(&mut store);
        }
        assert_eq!(store.get(w).grad().unwrap(), &[6.0]);
    }

    #[test]
    fn backward_visits_each_operation_once() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(Tensor::scalar(2.0));
        let a = g.mul(x, x).unwrap();
        let b = g.add(a, x).unwrap();
        let c = g.mul(b, a).unwrap();
        let grads = g.backward(c).unwrap();
        // x, a, b, c
        assert_eq!(grads.visited(), 4);
        // c = (x² + x)·x², dc/dx = (2x + 1)x² + (x² + x)·2x = 20 + 24
        assert_eq!(grads.of(x).unwrap(), &[44.0]);
    }
}
