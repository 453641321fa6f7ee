//! Dense 2-D tensors with reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation on a tape; [`Graph::backward`]
//! replays the tape in reverse and accumulates gradients for every
//! parameter leaf. Tensors are row-major `(rows, cols)` matrices of
//! `f64`; row vectors are `(1, n)`. Any operation producing a NaN or
//! infinity raises an error instead of propagating it.

mod check;
mod nn;
mod params;

pub use check::grad_check;
pub use nn::{Dense, GruCell};
pub use params::{AdamConfig, Param, ParamId, ParamStore};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: left is {lhs:?}, right is {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: value count {values} does not match shape {shape:?}")]
    BadValueCount {
        op: &'static str,
        values: usize,
        shape: (usize, usize),
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },
    #[error("{op} expects a scalar, got shape {shape:?}")]
    NotScalar { op: &'static str, shape: (usize, usize) },
    #[error("{op} needs at least one input")]
    EmptyInput { op: &'static str },
}

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Constant or parameter leaf.
    Leaf,
    MatMul(TensorId, TensorId),
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    /// Elementwise product.
    Mul(TensorId, TensorId),
    Scale(TensorId, f64),
    /// Column-wise concatenation of equal-row tensors.
    ConcatCols(TensorId, TensorId),
    /// Stacks `(1, c)` rows into `(k, c)`.
    StackRows(Vec<TensorId>),
    /// Elementwise sum of same-shape tensors.
    SumList(Vec<TensorId>),
    /// Collapses `(r, c)` to `(1, c)` by summing rows.
    SumRows(TensorId),
    Selu(TensorId),
    Sigmoid(TensorId),
    Tanh(TensorId),
    /// Mean squared error between two same-shape tensors, `(1, 1)`.
    Mse(TensorId, TensorId),
}

struct Node {
    op: Op,
    shape: (usize, usize),
    value: Vec<f64>,
    /// Set on parameter leaves so backward can export their gradients.
    param: Option<ParamId>,
}

/// Gradients of a scalar with respect to every parameter used in a
/// graph, indexed by [`ParamId`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    by_param: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros(param_count: usize) -> Self {
        Gradients { by_param: vec![None; param_count] }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.by_param.get(id.index()).and_then(|g| g.as_deref())
    }

    /// Adds `other`, scaled, into `self` (gradient accumulation over a
    /// batch).
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) {
        if self.by_param.len() < other.by_param.len() {
            self.by_param.resize(other.by_param.len(), None);
        }
        for (slot, g) in self.by_param.iter_mut().zip(&other.by_param) {
            if let Some(g) = g {
                match slot {
                    Some(acc) => acc.iter_mut().zip(g).for_each(|(a, v)| *a += v * factor),
                    None => *slot = Some(g.iter().map(|v| v * factor).collect()),
                }
            }
        }
    }
}

/// SELU self-normalizing constants.
pub const SELU_LAMBDA: f64 = 1.0507009873554804934193349852946;
pub const SELU_ALPHA: f64 = 1.6732632423543772848170429916717;

/// A forward tape bound to a parameter store.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    /// One leaf per parameter so gradients from repeated uses
    /// accumulate on a single node.
    param_leaves: Vec<Option<TensorId>>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_leaves: vec![None; params.len()],
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn shape(&self, t: TensorId) -> (usize, usize) {
        self.nodes[t.0].shape
    }

    pub fn value(&self, t: TensorId) -> &[f64] {
        &self.nodes[t.0].value
    }

    /// Value of a `(1, 1)` tensor.
    pub fn scalar_value(&self, t: TensorId) -> Result<f64, TensorError> {
        let shape = self.shape(t);
        if shape != (1, 1) {
            return Err(TensorError::NotScalar { op: "scalar_value", shape });
        }
        Ok(self.nodes[t.0].value[0])
    }

    fn push(
        &mut self,
        op: Op,
        shape: (usize, usize),
        value: Vec<f64>,
        param: Option<ParamId>,
        name: &'static str,
    ) -> Result<TensorId, TensorError> {
        debug_assert_eq!(value.len(), shape.0 * shape.1);
        if value.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: name });
        }
        self.nodes.push(Node { op, shape, value, param });
        Ok(TensorId(self.nodes.len() - 1))
    }

    pub fn constant(
        &mut self,
        shape: (usize, usize),
        values: Vec<f64>,
    ) -> Result<TensorId, TensorError> {
        if values.len() != shape.0 * shape.1 {
            return Err(TensorError::BadValueCount {
                op: "constant",
                values: values.len(),
                shape,
            });
        }
        self.push(Op::Leaf, shape, values, None, "constant")
    }

    pub fn scalar(&mut self, v: f64) -> Result<TensorId, TensorError> {
        self.constant((1, 1), vec![v])
    }

    pub fn zeros(&mut self, shape: (usize, usize)) -> Result<TensorId, TensorError> {
        self.constant(shape, vec![0.0; shape.0 * shape.1])
    }

    /// Leaf holding the current value of a stored parameter.
    pub fn param(&mut self, id: ParamId) -> Result<TensorId, TensorError> {
        if let Some(t) = self.param_leaves[id.index()] {
            return Ok(t);
        }
        let p = self.params.get(id);
        let t = self.push(
            Op::Leaf,
            (p.rows, p.cols),
            p.values.clone(),
            Some(id),
            "param",
        )?;
        self.param_leaves[id.index()] = Some(t);
        Ok(t)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: (ar, ac),
                rhs: (br, bc),
            });
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut out = vec![0.0; ar * bc];
        for i in 0..ar {
            for k in 0..ac {
                let aik = av[i * ac + k];
                if aik == 0.0 {
                    continue;
                }
                let brow = &bv[k * bc..(k + 1) * bc];
                let orow = &mut out[i * bc..(i + 1) * bc];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += aik * b;
                }
            }
        }
        self.push(Op::MatMul(a, b), (ar, bc), out, None, "matmul")
    }

    fn zip_elementwise(
        &mut self,
        a: TensorId,
        b: TensorId,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId, TensorError> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(TensorError::ShapeMismatch { op: name, lhs: sa, rhs: sb });
        }
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(op, sa, out, None, name)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.zip_elementwise(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.zip_elementwise(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.zip_elementwise(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: TensorId, factor: f64) -> Result<TensorId, TensorError> {
        let shape = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|&x| x * factor).collect();
        self.push(Op::Scale(a, factor), shape, out, None, "scale")
    }

    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ar != br {
            return Err(TensorError::ShapeMismatch {
                op: "concat_cols",
                lhs: (ar, ac),
                rhs: (br, bc),
            });
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut out = Vec::with_capacity(ar * (ac + bc));
        for i in 0..ar {
            out.extend_from_slice(&av[i * ac..(i + 1) * ac]);
            out.extend_from_slice(&bv[i * bc..(i + 1) * bc]);
        }
        self.push(Op::ConcatCols(a, b), (ar, ac + bc), out, None, "concat_cols")
    }

    pub fn stack_rows(&mut self, rows: &[TensorId]) -> Result<TensorId, TensorError> {
        let Some(&first) = rows.first() else {
            return Err(TensorError::EmptyInput { op: "stack_rows" });
        };
        let (r, c) = self.shape(first);
        if r != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "stack_rows",
                lhs: (r, c),
                rhs: (1, c),
            });
        }
        let mut out = Vec::with_capacity(rows.len() * c);
        for &t in rows {
            let s = self.shape(t);
            if s != (1, c) {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_rows",
                    lhs: (1, c),
                    rhs: s,
                });
            }
            out.extend_from_slice(&self.nodes[t.0].value);
        }
        self.push(
            Op::StackRows(rows.to_vec()),
            (rows.len(), c),
            out,
            None,
            "stack_rows",
        )
    }

    /// Elementwise sum of one or more same-shape tensors.
    pub fn sum_list(&mut self, terms: &[TensorId]) -> Result<TensorId, TensorError> {
        let Some(&first) = terms.first() else {
            return Err(TensorError::EmptyInput { op: "sum_list" });
        };
        let shape = self.shape(first);
        let mut out = self.nodes[first.0].value.clone();
        for &t in &terms[1..] {
            let s = self.shape(t);
            if s != shape {
                return Err(TensorError::ShapeMismatch { op: "sum_list", lhs: shape, rhs: s });
            }
            out.iter_mut()
                .zip(&self.nodes[t.0].value)
                .for_each(|(o, v)| *o += v);
        }
        self.push(Op::SumList(terms.to_vec()), shape, out, None, "sum_list")
    }

    pub fn sum_rows(&mut self, a: TensorId) -> Result<TensorId, TensorError> {
        let (r, c) = self.shape(a);
        let av = &self.nodes[a.0].value;
        let mut out = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                out[j] += av[i * c + j];
            }
        }
        self.push(Op::SumRows(a), (1, c), out, None, "sum_rows")
    }

    fn map_elementwise(
        &mut self,
        a: TensorId,
        name: &'static str,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<TensorId, TensorError> {
        let shape = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(op, shape, out, None, name)
    }

    /// Scaled exponential linear unit with the standard constants.
    pub fn selu(&mut self, a: TensorId) -> Result<TensorId, TensorError> {
        self.map_elementwise(
            a,
            "selu",
            |x| {
                if x > 0.0 {
                    SELU_LAMBDA * x
                } else {
                    SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
                }
            },
            Op::Selu(a),
        )
    }

    pub fn sigmoid(&mut self, a: TensorId) -> Result<TensorId, TensorError> {
        self.map_elementwise(a, "sigmoid", |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: TensorId) -> Result<TensorId, TensorError> {
        self.map_elementwise(a, "tanh", f64::tanh, Op::Tanh(a))
    }

    /// Mean of squared differences, as a `(1, 1)` tensor.
    pub fn mse(&mut self, pred: TensorId, target: TensorId) -> Result<TensorId, TensorError> {
        let sp = self.shape(pred);
        let st = self.shape(target);
        if sp != st {
            return Err(TensorError::ShapeMismatch { op: "mse", lhs: sp, rhs: st });
        }
        let n = (sp.0 * sp.1) as f64;
        let sum: f64 = self.nodes[pred.0]
            .value
            .iter()
            .zip(&self.nodes[target.0].value)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        self.push(Op::Mse(pred, target), (1, 1), vec![sum / n], None, "mse")
    }

    /// Reverse pass from a scalar loss; returns per-parameter gradients.
    pub fn backward(&self, loss: TensorId) -> Result<Gradients, TensorError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(TensorError::NotScalar { op: "backward", shape });
        }
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        grads[loss.0][0] = 1.0;

        for idx in (0..=loss.0).rev() {
            if grads[idx].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = std::mem::take(&mut grads[idx]);
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = g; // keep for param export
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (ar, ac) = self.nodes[a.0].shape;
                    let bc = self.nodes[b.0].shape.1;
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    // dA = dC * B^T
                    {
                        let da = &mut grads[a.0];
                        for i in 0..ar {
                            for k in 0..ac {
                                let mut acc = 0.0;
                                let grow = &g[i * bc..(i + 1) * bc];
                                let brow = &bv[k * bc..(k + 1) * bc];
                                for (gc, bkj) in grow.iter().zip(brow) {
                                    acc += gc * bkj;
                                }
                                da[i * ac + k] += acc;
                            }
                        }
                    }
                    // dB = A^T * dC
                    {
                        let db = &mut grads[b.0];
                        for i in 0..ar {
                            for k in 0..ac {
                                let aik = av[i * ac + k];
                                if aik == 0.0 {
                                    continue;
                                }
                                let grow = &g[i * bc..(i + 1) * bc];
                                let brow = &mut db[k * bc..(k + 1) * bc];
                                for (dbj, gc) in brow.iter_mut().zip(grow) {
                                    *dbj += aik * gc;
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(&mut grads[a.0], &g, 1.0);
                    add_into(&mut grads[b.0], &g, 1.0);
                }
                Op::Sub(a, b) => {
                    add_into(&mut grads[a.0], &g, 1.0);
                    add_into(&mut grads[b.0], &g, -1.0);
                }
                Op::Mul(a, b) => {
                    mul_add_into(&mut grads[a.0], &g, &self.nodes[b.0].value);
                    mul_add_into(&mut grads[b.0], &g, &self.nodes[a.0].value);
                }
                Op::Scale(a, factor) => add_into(&mut grads[a.0], &g, *factor),
                Op::ConcatCols(a, b) => {
                    let (r, ac) = self.nodes[a.0].shape;
                    let bc = self.nodes[b.0].shape.1;
                    for i in 0..r {
                        let row = &g[i * (ac + bc)..(i + 1) * (ac + bc)];
                        grads[a.0][i * ac..(i + 1) * ac]
                            .iter_mut()
                            .zip(&row[..ac])
                            .for_each(|(d, v)| *d += v);
                        grads[b.0][i * bc..(i + 1) * bc]
                            .iter_mut()
                            .zip(&row[ac..])
                            .for_each(|(d, v)| *d += v);
                    }
                }
                Op::StackRows(rows) => {
                    let c = node.shape.1;
                    for (i, t) in rows.iter().enumerate() {
                        add_into(&mut grads[t.0], &g[i * c..(i + 1) * c], 1.0);
                    }
                }
                Op::SumList(terms) => {
                    for t in terms {
                        add_into(&mut grads[t.0], &g, 1.0);
                    }
                }
                Op::SumRows(a) => {
                    let (r, c) = self.nodes[a.0].shape;
                    for i in 0..r {
                        add_into(&mut grads[a.0][i * c..(i + 1) * c], &g, 1.0);
                    }
                }
                Op::Selu(a) => {
                    let deriv: Vec<f64> = self.nodes[a.0]
                        .value
                        .iter()
                        .map(|&x| {
                            if x > 0.0 {
                                SELU_LAMBDA
                            } else {
                                SELU_LAMBDA * SELU_ALPHA * x.exp()
                            }
                        })
                        .collect();
                    mul_add_into(&mut grads[a.0], &g, &deriv);
                }
                Op::Sigmoid(a) => {
                    let deriv: Vec<f64> =
                        node.value.iter().map(|&s| s * (1.0 - s)).collect();
                    mul_add_into(&mut grads[a.0], &g, &deriv);
                }
                Op::Tanh(a) => {
                    let deriv: Vec<f64> = node.value.iter().map(|&t| 1.0 - t * t).collect();
                    mul_add_into(&mut grads[a.0], &g, &deriv);
                }
                Op::Mse(a, b) => {
                    let (r, c) = self.nodes[a.0].shape;
                    let scale = 2.0 * g[0] / (r * c) as f64;
                    let diffs: Vec<f64> = self.nodes[a.0]
                        .value
                        .iter()
                        .zip(&self.nodes[b.0].value)
                        .map(|(&x, &y)| x - y)
                        .collect();
                    add_vec_into(&mut grads[a.0], &diffs, scale);
                    add_vec_into(&mut grads[b.0], &diffs, -scale);
                }
            }
        }

        let mut out = Gradients::zeros(self.params.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Some(pid) = node.param {
                if !grads[idx].is_empty() {
                    out.by_param[pid.index()] = Some(std::mem::take(&mut grads[idx]));
                } else {
                    out.by_param[pid.index()] = Some(vec![0.0; node.value.len()]);
                }
            }
        }
        Ok(out)
    }
}

fn add_into(dst: &mut [f64], src: &[f64], factor: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s * factor;
    }
}

fn add_vec_into(dst: &mut [f64], src: &[f64], factor: f64) {
    add_into(dst, src, factor)
}

fn mul_add_into(dst: &mut [f64], g: &[f64], factor: &[f64]) {
    for ((d, &gv), &fv) in dst.iter_mut().zip(g).zip(factor) {
        *d += gv * fv;
    }
}

#[cfg(test)]
mod tests;
