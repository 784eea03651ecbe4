//! Dense f64 tensors and a reverse-mode autodiff tape.
//!
//! The tape is rebuilt for every forward pass: operations append nodes that
//! hold their forward value plus enough information to run the local
//! backward rule. `Tape::backward` walks the nodes in reverse and scatters
//! accumulated gradients into the [`ParamStore`] entries that were
//! registered as leaves.

use crate::error::{Error, Result};
use crate::rng::Rng;
use std::collections::HashMap;

// ── Tensor ───────────────────────────────────────────────────────────

/// Dense row-major f64 tensor with an optional gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(data: Vec<f64>, shape: Vec<usize>) -> Tensor {
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "data length must equal the product of the shape"
        );
        assert!(shape.iter().all(|&d| d > 0), "dimensions must be positive");
        Tensor { shape, data, requires_grad: false, grad: None }
    }

    /// Leaf parameter: participates in gradient accumulation.
    pub fn param(data: Vec<f64>, shape: Vec<usize>) -> Tensor {
        let mut t = Tensor::new(data, shape);
        t.requires_grad = true;
        t
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(vec![0.0; n], shape)
    }

    pub fn filled(value: f64, shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(vec![value; n], shape)
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new((0..n).map(&mut f).collect(), shape)
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows and columns of a 2-D tensor.
    pub fn dims2(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Some((*r, *c)),
            _ => None,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Accumulate `delta` into the gradient buffer, creating it on demand.
    pub fn accumulate_grad(&mut self, delta: &[f64]) {
        assert_eq!(delta.len(), self.data.len());
        let grad = self.grad.get_or_insert_with(|| vec![0.0; self.data.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }
}

// ── Parameter store ──────────────────────────────────────────────────

/// Handle to a named parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Ordered collection of named parameter tensors. Insertion order is the
/// canonical order for initialization, optimizer state, and checkpoints.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let mut tensor = tensor;
        tensor.requires_grad = true;
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.zero_grad();
        }
    }

    /// Total number of scalar parameters.
    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }
}

// ── Tape ─────────────────────────────────────────────────────────────

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    LeafParam(ParamId),
    LeafValue,
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    BiasAdd(Var, Var),
    Tanh(Var),
    Gelu(Var),
    Dropout { x: Var, mask: Vec<f64> },
    Concat { axis: usize, parts: Vec<Var> },
    Transpose(Var),
    Mean(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, eps: f64 },
    Gather { table: Var, ids: Vec<usize> },
    PairDot { a: Var, b: Var, ia: Vec<usize>, ib: Vec<usize> },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
}

struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    op: Op,
    needs_grad: bool,
}

/// Reverse-mode tape. One tape per forward pass; `backward` consumes it.
pub struct Tape {
    nodes: Vec<Node>,
    param_leaves: HashMap<ParamId, Var>,
    training: bool,
}

impl Tape {
    /// Evaluation-mode tape: dropout is the identity.
    pub fn new() -> Tape {
        Tape { nodes: Vec::new(), param_leaves: HashMap::new(), training: false }
    }

    /// Training-mode tape: dropout is active.
    pub fn training() -> Tape {
        Tape { nodes: Vec::new(), param_leaves: HashMap::new(), training: true }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.nodes[v.0].data.clone(), self.nodes[v.0].shape.clone())
    }

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, op: Op, needs_grad: bool) -> Var {
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "non-finite value produced by forward op"
        );
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        self.nodes.push(Node { data, shape, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn dims2(&self, v: Var) -> Option<(usize, usize)> {
        match self.nodes[v.0].shape.as_slice() {
            [r, c] => Some((*r, *c)),
            _ => None,
        }
    }

    // ── Leaves ───────────────────────────────────────────────────────

    /// Register a parameter as a leaf. Registering the same parameter twice
    /// on one tape returns the same node, so gradients from every use site
    /// accumulate into a single leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_leaves.get(&id) {
            return v;
        }
        let t = store.get(id);
        let v = self.push(t.data.clone(), t.shape.clone(), Op::LeafParam(id), t.requires_grad);
        self.param_leaves.insert(id, v);
        v
    }

    /// Non-differentiable input value.
    pub fn value_leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.data.clone(), t.shape.clone(), Op::LeafValue, false)
    }

    /// Non-differentiable input from raw parts.
    pub fn input(&mut self, data: Vec<f64>, shape: Vec<usize>) -> Var {
        assert_eq!(data.len(), shape.iter().product::<usize>());
        self.push(data, shape, Op::LeafValue, false)
    }

    // ── Matrix product ───────────────────────────────────────────────

    /// `[m×k] · [k×n] -> [m×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a).ok_or_else(|| self.shape_err("matmul", a, b))?;
        let (k2, n) = self.dims2(b).ok_or_else(|| self.shape_err("matmul", a, b))?;
        if k != k2 {
            return Err(self.shape_err("matmul", a, b));
        }
        let data = matmul_raw(self.value(a), self.value(b), m, k, n);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(data, vec![m, n], Op::Matmul(a, b), ng))
    }

    // ── Elementwise suite ────────────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Hadamard product. `b` may also be `[n×1]` against an `[n×d]` `a`,
    /// broadcasting one factor per row.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn zip_op(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let sa = self.nodes[a.0].shape.clone();
        let sb = self.nodes[b.0].shape.clone();
        let data: Vec<f64> = if sa == sb {
            self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect()
        } else if let (Some((n, d)), Some((n2, 1))) = (shape2(&sa), shape2(&sb)) {
            if n != n2 {
                return Err(self.shape_err(name, a, b));
            }
            let av = self.value(a);
            let bv = self.value(b);
            let mut out = Vec::with_capacity(n * d);
            for i in 0..n {
                for j in 0..d {
                    out.push(f(av[i * d + j], bv[i]));
                }
            }
            out
        } else {
            return Err(self.shape_err(name, a, b));
        };
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(data, sa, op, ng))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let data: Vec<f64> = self.value(x).iter().map(|&v| v * c).collect();
        let shape = self.nodes[x.0].shape.clone();
        let ng = self.needs(x);
        self.push(data, shape, Op::Scale(x, c), ng)
    }

    /// `[n×d] + [d]`, the row-vector broadcast used by the classifier bias.
    pub fn bias_add(&mut self, x: Var, b: Var) -> Result<Var> {
        let (n, d) = self.dims2(x).ok_or_else(|| self.shape_err("bias_add", x, b))?;
        let bd = match self.nodes[b.0].shape.as_slice() {
            [len] => *len,
            [1, len] => *len,
            _ => return Err(self.shape_err("bias_add", x, b)),
        };
        if bd != d {
            return Err(self.shape_err("bias_add", x, b));
        }
        let xv = self.value(x);
        let bv = self.value(b);
        let mut out = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                out.push(xv[i * d + j] + bv[j]);
            }
        }
        let ng = self.needs(x) || self.needs(b);
        Ok(self.push(out, vec![n, d], Op::BiasAdd(x, b), ng))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let data: Vec<f64> = self.value(x).iter().map(|v| v.tanh()).collect();
        let shape = self.nodes[x.0].shape.clone();
        let ng = self.needs(x);
        self.push(data, shape, Op::Tanh(x), ng)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let data: Vec<f64> = self.value(x).iter().map(|&v| gelu_raw(v)).collect();
        let shape = self.nodes[x.0].shape.clone();
        let ng = self.needs(x);
        self.push(data, shape, Op::Gelu(x), ng)
    }

    /// Inverted dropout: surviving entries scale by `1/(1-p)`. Identity when
    /// the tape is in evaluation mode or `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut Rng) -> Var {
        assert!((0.0..1.0).contains(&p), "dropout probability must be in [0, 1)");
        if !self.training || p == 0.0 {
            return x;
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = self
            .value(x)
            .iter()
            .map(|_| if rng.uniform() < p { 0.0 } else { keep })
            .collect();
        let data: Vec<f64> =
            self.value(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let shape = self.nodes[x.0].shape.clone();
        let ng = self.needs(x);
        self.push(data, shape, Op::Dropout { x, mask }, ng)
    }

    /// Concatenate along rows (`axis == 0`) or columns (`axis == 1`).
    pub fn concat(&mut self, axis: usize, parts: &[Var]) -> Result<Var> {
        assert!(axis < 2, "concat supports axes 0 and 1");
        assert!(!parts.is_empty(), "concat needs at least one part");
        let first = self
            .dims2(parts[0])
            .ok_or_else(|| self.shape_err("concat", parts[0], parts[0]))?;
        let mut rows = first.0;
        let mut cols = first.1;
        for &p in &parts[1..] {
            let (r, c) = self.dims2(p).ok_or_else(|| self.shape_err("concat", parts[0], p))?;
            match axis {
                0 if c == cols => rows += r,
                1 if r == rows => cols += c,
                _ => return Err(self.shape_err("concat", parts[0], p)),
            }
        }
        let mut data = Vec::with_capacity(rows * cols);
        if axis == 0 {
            for &p in parts {
                data.extend_from_slice(self.value(p));
            }
        } else {
            for i in 0..rows {
                for &p in parts {
                    let (_, c) = self.dims2(p).unwrap();
                    let pv = self.value(p);
                    data.extend_from_slice(&pv[i * c..(i + 1) * c]);
                }
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(data, vec![rows, cols], Op::Concat { axis, parts: parts.to_vec() }, ng))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x).ok_or_else(|| self.shape_err("transpose", x, x))?;
        let xv = self.value(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xv[i * c + j];
            }
        }
        let ng = self.needs(x);
        Ok(self.push(out, vec![c, r], Op::Transpose(x), ng))
    }

    /// Mean over every entry, producing a scalar.
    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.nodes[x.0].data.len();
        let m = self.value(x).iter().sum::<f64>() / n as f64;
        let ng = self.needs(x);
        self.push(vec![m], vec![1], Op::Mean(x), ng)
    }

    // ── Softmax ──────────────────────────────────────────────────────

    /// Row-wise softmax with an optional `{0,1}` keep-mask of the same
    /// shape. Masked entries get a large negative additive offset before
    /// normalization and are zeroed exactly afterwards.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&Tensor>) -> Result<Var> {
        let (m, n) = self.dims2(x).ok_or_else(|| self.shape_err("softmax_rows", x, x))?;
        if let Some(mk) = mask {
            if mk.shape != [m, n] {
                return Err(Error::Shape {
                    op: "softmax_rows mask",
                    lhs: vec![m, n],
                    rhs: mk.shape.clone(),
                });
            }
        }
        let xv = self.value(x);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let keep = |j: usize| mask.is_none_or(|mk| mk.data[i * n + j] != 0.0);
            if !(0..n).any(&keep) {
                return Err(Error::DegenerateRow { row: i });
            }
            let shifted: Vec<f64> = (0..n)
                .map(|j| if keep(j) { row[j] } else { row[j] - 1e9 })
                .collect();
            let max = shifted.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut exps: Vec<f64> =
                shifted.iter().map(|&v| (v - max).exp()).collect();
            for (j, e) in exps.iter_mut().enumerate() {
                if !keep(j) {
                    *e = 0.0;
                }
            }
            let sum: f64 = exps.iter().sum();
            for j in 0..n {
                out[i * n + j] = exps[j] / sum;
            }
        }
        let ng = self.needs(x);
        Ok(self.push(out, vec![m, n], Op::SoftmaxRows(x), ng))
    }

    // ── Layer normalization ──────────────────────────────────────────

    /// Per-row normalization with learned affine parameters.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (m, d) = self.dims2(x).ok_or_else(|| self.shape_err("layer_norm", x, gamma))?;
        for &p in &[gamma, beta] {
            let ok = matches!(self.nodes[p.0].shape.as_slice(), [len] if *len == d);
            if !ok {
                return Err(self.shape_err("layer_norm", x, p));
            }
        }
        let xv = self.value(x);
        let gv = self.value(gamma);
        let bv = self.value(beta);
        let mut out = vec![0.0; m * d];
        for i in 0..m {
            let row = &xv[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rstd = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                out[i * d + j] = gv[j] * (row[j] - mean) * rstd + bv[j];
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(out, vec![m, d], Op::LayerNorm { x, gamma, beta, eps }, ng))
    }

    // ── Row gather ───────────────────────────────────────────────────

    /// Select rows of `table` by index; gradients scatter back additively,
    /// so repeated indices sum their contributions. Doubles as the
    /// embedding lookup and as row slicing.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.dims2(table).ok_or_else(|| self.shape_err("gather", table, table))?;
        for &id in ids {
            if id >= v {
                return Err(Error::Index { what: "gather row", index: id, limit: v });
            }
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        let ng = self.needs(table);
        Ok(self.push(out, vec![ids.len(), d], Op::Gather { table, ids: ids.to_vec() }, ng))
    }

    // ── Paired row dot products ──────────────────────────────────────

    /// `S[i][j] = a[ia[i·n+j]] · b[ib[i·n+j]]` over an `n×n` grid.
    /// This is the primitive behind the position-aware attention terms:
    /// both sides select a row (content row or relative-position row) per
    /// cell and the score is their dot product.
    pub fn pair_dot(&mut self, a: Var, b: Var, ia: &[usize], ib: &[usize], n: usize) -> Result<Var> {
        let (ra, da) = self.dims2(a).ok_or_else(|| self.shape_err("pair_dot", a, b))?;
        let (rb, db) = self.dims2(b).ok_or_else(|| self.shape_err("pair_dot", a, b))?;
        if da != db {
            return Err(self.shape_err("pair_dot", a, b));
        }
        assert_eq!(ia.len(), n * n, "index grid must be n*n");
        assert_eq!(ib.len(), n * n, "index grid must be n*n");
        for &i in ia {
            if i >= ra {
                return Err(Error::Index { what: "pair_dot lhs row", index: i, limit: ra });
            }
        }
        for &i in ib {
            if i >= rb {
                return Err(Error::Index { what: "pair_dot rhs row", index: i, limit: rb });
            }
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = Vec::with_capacity(n * n);
        for cell in 0..n * n {
            let ar = &av[ia[cell] * da..(ia[cell] + 1) * da];
            let br = &bv[ib[cell] * da..(ib[cell] + 1) * da];
            out.push(ar.iter().zip(br).map(|(x, y)| x * y).sum());
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(
            out,
            vec![n, n],
            Op::PairDot { a, b, ia: ia.to_vec(), ib: ib.to_vec() },
            ng,
        ))
    }

    // ── Cross-entropy loss ───────────────────────────────────────────

    /// Mean over the batch of `-log softmax(logits)[label]`, stabilized by
    /// the log-sum-exp trick.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (b, c) = self.dims2(logits).ok_or_else(|| self.shape_err("cross_entropy", logits, logits))?;
        if labels.len() != b {
            return Err(Error::Contract(format!(
                "cross_entropy: {} labels for {b} logit rows",
                labels.len()
            )));
        }
        for &l in labels {
            if l >= c {
                return Err(Error::Contract(format!(
                    "cross_entropy: label {l} out of range for {c} classes"
                )));
            }
        }
        let lv = self.value(logits);
        let mut probs = vec![0.0; b * c];
        let mut loss = 0.0;
        for i in 0..b {
            let row = &lv[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = row.iter().map(|&v| (v - max).exp()).sum();
            let log_z = max + sum_exp.ln();
            for j in 0..c {
                probs[i * c + j] = (row[j] - log_z).exp();
            }
            loss += log_z - row[labels[i]];
        }
        loss /= b as f64;
        let ng = self.needs(logits);
        Ok(self.push(
            vec![loss],
            vec![1],
            Op::CrossEntropy { logits, labels: labels.to_vec(), probs },
            ng,
        ))
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Shape {
            op,
            lhs: self.nodes[a.0].shape.clone(),
            rhs: self.nodes[b.0].shape.clone(),
        }
    }

    // ── Backward pass ────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Gradients of every registered
    /// parameter leaf are accumulated into the store; the tape is consumed.
    pub fn backward(self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Contract("loss is not a node of this tape".into()));
        }
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(gout) = grads[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            // split borrows: the node being differentiated vs its inputs
            macro_rules! acc {
                ($var:expr, $delta:expr) => {{
                    let v: Var = $var;
                    if self.nodes[v.0].needs_grad {
                        let g = grads[v.0]
                            .get_or_insert_with(|| vec![0.0; self.nodes[v.0].data.len()]);
                        let delta: &[f64] = $delta;
                        for (slot, d) in g.iter_mut().zip(delta.iter()) {
                            *slot += *d;
                        }
                    }
                }};
            }
            match &self.nodes[idx].op {
                Op::LeafParam(pid) => {
                    store.get_mut(*pid).accumulate_grad(&gout);
                }
                Op::LeafValue => {}
                Op::Matmul(a, b) => {
                    let (m, k) = self.dims2(*a).unwrap();
                    let (_, n) = self.dims2(*b).unwrap();
                    if self.nodes[a.0].needs_grad {
                        // dA = dC · Bᵀ
                        let bv = self.value(*b);
                        let mut da = vec![0.0; m * k];
                        for i in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += gout[i * n + j] * bv[p * n + j];
                                }
                                da[i * k + p] = s;
                            }
                        }
                        acc!(*a, &da);
                    }
                    if self.nodes[b.0].needs_grad {
                        // dB = Aᵀ · dC
                        let av = self.value(*a);
                        let mut db = vec![0.0; k * n];
                        for p in 0..k {
                            for j in 0..n {
                                let mut s = 0.0;
                                for i in 0..m {
                                    s += av[i * k + p] * gout[i * n + j];
                                }
                                db[p * n + j] = s;
                            }
                        }
                        acc!(*b, &db);
                    }
                }
                Op::Add(a, b) => {
                    acc!(*a, &gout);
                    self.acc_rhs_broadcast(*a, *b, &gout, &mut grads, 1.0, None);
                }
                Op::Sub(a, b) => {
                    acc!(*a, &gout);
                    self.acc_rhs_broadcast(*a, *b, &gout, &mut grads, -1.0, None);
                }
                Op::Mul(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        let sa = &self.nodes[a.0].shape;
                        let sb = &self.nodes[b.0].shape;
                        let bv = self.value(*b);
                        let da: Vec<f64> = if sa == sb {
                            gout.iter().zip(bv).map(|(&g, &y)| g * y).collect()
                        } else {
                            let (n, d) = shape2(sa).unwrap();
                            let mut out = vec![0.0; n * d];
                            for i in 0..n {
                                for j in 0..d {
                                    out[i * d + j] = gout[i * d + j] * bv[i];
                                }
                            }
                            out
                        };
                        acc!(*a, &da);
                    }
                    let av_data: Vec<f64> = self.value(*a).to_vec();
                    self.acc_rhs_broadcast(*a, *b, &gout, &mut grads, 1.0, Some(&av_data));
                }
                Op::Scale(x, c) => {
                    let dx: Vec<f64> = gout.iter().map(|&g| g * c).collect();
                    acc!(*x, &dx);
                }
                Op::BiasAdd(x, b) => {
                    acc!(*x, &gout);
                    if self.nodes[b.0].needs_grad {
                        let (n, d) = self.dims2(*x).unwrap();
                        let mut db = vec![0.0; d];
                        for i in 0..n {
                            for j in 0..d {
                                db[j] += gout[i * d + j];
                            }
                        }
                        acc!(*b, &db);
                    }
                }
                Op::Tanh(x) => {
                    let y = &self.nodes[idx].data;
                    let dx: Vec<f64> =
                        gout.iter().zip(y).map(|(&g, &t)| g * (1.0 - t * t)).collect();
                    acc!(*x, &dx);
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x);
                    let dx: Vec<f64> =
                        gout.iter().zip(xv).map(|(&g, &v)| g * gelu_grad_raw(v)).collect();
                    acc!(*x, &dx);
                }
                Op::Dropout { x, mask } => {
                    let dx: Vec<f64> = gout.iter().zip(mask).map(|(&g, &m)| g * m).collect();
                    acc!(*x, &dx);
                }
                Op::Concat { axis, parts } => {
                    if *axis == 0 {
                        let mut offset = 0;
                        for &p in parts {
                            let len = self.nodes[p.0].data.len();
                            acc!(p, &gout[offset..offset + len]);
                            offset += len;
                        }
                    } else {
                        let rows = self.nodes[idx].shape[0];
                        let total_cols = self.nodes[idx].shape[1];
                        let mut col_offset = 0;
                        for &p in parts {
                            let (_, c) = self.dims2(p).unwrap();
                            if self.nodes[p.0].needs_grad {
                                let mut dp = vec![0.0; rows * c];
                                for i in 0..rows {
                                    for j in 0..c {
                                        dp[i * c + j] = gout[i * total_cols + col_offset + j];
                                    }
                                }
                                acc!(p, &dp);
                            }
                            col_offset += c;
                        }
                    }
                }
                Op::Transpose(x) => {
                    let (c, r) = shape2(&self.nodes[idx].shape).unwrap();
                    let mut dx = vec![0.0; r * c];
                    for i in 0..c {
                        for j in 0..r {
                            dx[j * c + i] = gout[i * r + j];
                        }
                    }
                    acc!(*x, &dx);
                }
                Op::Mean(x) => {
                    let n = self.nodes[x.0].data.len();
                    let dx = vec![gout[0] / n as f64; n];
                    acc!(*x, &dx);
                }
                Op::SoftmaxRows(x) => {
                    let (m, n) = shape2(&self.nodes[idx].shape).unwrap();
                    let y = &self.nodes[idx].data;
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        let yrow = &y[i * n..(i + 1) * n];
                        let grow = &gout[i * n..(i + 1) * n];
                        let dot: f64 = yrow.iter().zip(grow).map(|(&a, &b)| a * b).sum();
                        for j in 0..n {
                            dx[i * n + j] = yrow[j] * (grow[j] - dot);
                        }
                    }
                    acc!(*x, &dx);
                }
                Op::LayerNorm { x, gamma, beta, eps } => {
                    let (m, d) = self.dims2(*x).unwrap();
                    let xv = self.value(*x);
                    let gv = self.value(*gamma);
                    let mut dx = vec![0.0; m * d];
                    let mut dgamma = vec![0.0; d];
                    let mut dbeta = vec![0.0; d];
                    for i in 0..m {
                        let row = &xv[i * d..(i + 1) * d];
                        let grow = &gout[i * d..(i + 1) * d];
                        let mean = row.iter().sum::<f64>() / d as f64;
                        let var =
                            row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                        let rstd = 1.0 / (var + eps).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|&v| (v - mean) * rstd).collect();
                        let dyh: Vec<f64> =
                            grow.iter().zip(gv).map(|(&g, &gm)| g * gm).collect();
                        let mean_dyh = dyh.iter().sum::<f64>() / d as f64;
                        let mean_dyh_xhat =
                            dyh.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<f64>() / d as f64;
                        for j in 0..d {
                            dx[i * d + j] =
                                rstd * (dyh[j] - mean_dyh - xhat[j] * mean_dyh_xhat);
                            dgamma[j] += grow[j] * xhat[j];
                            dbeta[j] += grow[j];
                        }
                    }
                    acc!(*x, &dx);
                    acc!(*gamma, &dgamma);
                    acc!(*beta, &dbeta);
                }
                Op::Gather { table, ids } => {
                    if self.nodes[table.0].needs_grad {
                        let (v, d) = self.dims2(*table).unwrap();
                        let mut dt = vec![0.0; v * d];
                        for (r, &id) in ids.iter().enumerate() {
                            for j in 0..d {
                                dt[id * d + j] += gout[r * d + j];
                            }
                        }
                        acc!(*table, &dt);
                    }
                }
                Op::PairDot { a, b, ia, ib } => {
                    let (ra, da) = self.dims2(*a).unwrap();
                    let (rb, _) = self.dims2(*b).unwrap();
                    if self.nodes[a.0].needs_grad {
                        let bv = self.value(*b);
                        let mut dag = vec![0.0; ra * da];
                        for (cell, &g) in gout.iter().enumerate() {
                            let (ar, br) = (ia[cell], ib[cell]);
                            for t in 0..da {
                                dag[ar * da + t] += g * bv[br * da + t];
                            }
                        }
                        acc!(*a, &dag);
                    }
                    if self.nodes[b.0].needs_grad {
                        let av = self.value(*a);
                        let mut dbg = vec![0.0; rb * da];
                        for (cell, &g) in gout.iter().enumerate() {
                            let (ar, br) = (ia[cell], ib[cell]);
                            for t in 0..da {
                                dbg[br * da + t] += g * av[ar * da + t];
                            }
                        }
                        acc!(*b, &dbg);
                    }
                }
                Op::CrossEntropy { logits, labels, probs } => {
                    let (bsz, c) = self.dims2(*logits).unwrap();
                    let scale = gout[0] / bsz as f64;
                    let mut dl = vec![0.0; bsz * c];
                    for i in 0..bsz {
                        for j in 0..c {
                            let indicator = if labels[i] == j { 1.0 } else { 0.0 };
                            dl[i * c + j] = scale * (probs[i * c + j] - indicator);
                        }
                    }
                    acc!(*logits, &dl);
                }
            }
        }
        Ok(())
    }

    /// Gradient for the right operand of add/sub/mul, handling the
    /// `[n×1]` row-broadcast case. `factor_from_lhs` is `Some(lhs data)`
    /// for mul, `None` for add/sub; `sign` is -1 for sub.
    fn acc_rhs_broadcast(
        &self,
        a: Var,
        b: Var,
        gout: &[f64],
        grads: &mut [Option<Vec<f64>>],
        sign: f64,
        factor_from_lhs: Option<&[f64]>,
    ) {
        if !self.nodes[b.0].needs_grad {
            return;
        }
        let sa = &self.nodes[a.0].shape;
        let sb = &self.nodes[b.0].shape;
        let db: Vec<f64> = if sa == sb {
            match factor_from_lhs {
                None => gout.iter().map(|&g| g * sign).collect(),
                Some(av) => gout.iter().zip(av).map(|(&g, &x)| g * x * sign).collect(),
            }
        } else {
            let (n, d) = shape2(sa).unwrap();
            let mut out = vec![0.0; n];
            for i in 0..n {
                for j in 0..d {
                    let f = factor_from_lhs.map_or(1.0, |av| av[i * d + j]);
                    out[i] += gout[i * d + j] * f * sign;
                }
            }
            out
        };
        let slot = grads[b.0].get_or_insert_with(|| vec![0.0; self.nodes[b.0].data.len()]);
        for (s, d) in slot.iter_mut().zip(&db) {
            *s += d;
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

// ── Raw kernels ──────────────────────────────────────────────────────

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            for j in 0..n {
                c[i * n + j] += av * b[p * n + j];
            }
        }
    }
    c
}

fn gelu_raw(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const A: f64 = 0.044715;
    0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh())
}

fn gelu_grad_raw(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    const A: f64 = 0.044715;
    let u = C * (x + A * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * C * (1.0 + 3.0 * A * x * x)
}

fn shape2(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [r, c] => Some((*r, *c)),
        _ => None,
    }
}
