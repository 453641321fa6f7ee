//! Named trainable parameters with Adam optimizer state.

use rand::Rng;

use super::{Gradients, TensorError};
use crate::codec::{ByteReader, ByteWriter, DecodeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub(crate) fn index(self) -> usize {
        self.0
    }
}

/// One tensor of trainable values plus its Adam moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    /// First / second moment estimates, same shape as `values`.
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Biases are exempt from L2 regularization.
    pub is_bias: bool,
}

/// Adam hyperparameters with a stepped learning-rate decay:
/// `lr(t) = lr0 * decay^floor(t / interval)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub lr0: f64,
    pub decay: f64,
    pub decay_interval: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Coefficient of the `lambda * ||w||^2` regularization term,
    /// applied to weights only.
    pub l2_lambda: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr0: 0.001,
            decay: 0.6,
            decay_interval: 80_000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2_lambda: 0.1,
        }
    }
}

impl AdamConfig {
    /// Learning rate in effect at a given (1-based) step number.
    pub fn lr_at(&self, step: u64) -> f64 {
        self.lr0 * self.decay.powi((step / self.decay_interval) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    /// Number of optimizer steps taken so far.
    pub step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        is_bias: bool,
    ) -> ParamId {
        assert_eq!(values.len(), rows * cols);
        let n = values.len();
        self.params.push(Param {
            name: name.into(),
            rows,
            cols,
            values,
            m: vec![0.0; n],
            v: vec![0.0; n],
            is_bias,
        });
        ParamId(self.params.len() - 1)
    }

    /// Weight matrix initialized uniformly in +-1/sqrt(fan_in).
    pub fn add_weight(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let bound = 1.0 / (rows as f64).sqrt();
        let values = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        self.add(name, rows, cols, values, false)
    }

    /// Zero-initialized bias row vector.
    pub fn add_bias(&mut self, name: impl Into<String>, cols: usize) -> ParamId {
        self.add(name, 1, cols, vec![0.0; cols], true)
    }

    /// Total number of scalar values across all parameters.
    pub fn value_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    /// The `lambda * sum(w^2)` regularization penalty (weights only).
    pub fn l2_penalty(&self, lambda: f64) -> f64 {
        lambda
            * self
                .params
                .iter()
                .filter(|p| !p.is_bias)
                .flat_map(|p| p.values.iter())
                .map(|v| v * v)
                .sum::<f64>()
    }

    /// One Adam update. The effective gradient is the supplied gradient
    /// plus `2 * lambda * w` from the L2 term (weights only).
    /// Parameters without a gradient entry are left untouched.
    pub fn adam_step(
        &mut self,
        grads: &Gradients,
        cfg: &AdamConfig,
    ) -> Result<(), TensorError> {
        self.step += 1;
        let t = self.step;
        let lr = cfg.lr_at(t);
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        for (i, p) in self.params.iter_mut().enumerate() {
            let Some(g) = grads.by_param.get(i).and_then(|g| g.as_ref()) else {
                continue;
            };
            if g.iter().any(|v| !v.is_finite()) {
                return Err(TensorError::NonFiniteGradient { name: p.name.clone() });
            }
            let l2 = if p.is_bias { 0.0 } else { 2.0 * cfg.l2_lambda };
            for j in 0..p.values.len() {
                let grad = g[j] + l2 * p.values[j];
                p.m[j] = cfg.beta1 * p.m[j] + (1.0 - cfg.beta1) * grad;
                p.v[j] = cfg.beta2 * p.v[j] + (1.0 - cfg.beta2) * grad * grad;
                let m_hat = p.m[j] / bc1;
                let v_hat = p.v[j] / bc2;
                p.values[j] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }

    pub fn encode(&self, w: &mut ByteWriter) {
        w.u64(self.step);
        w.u64(self.params.len() as u64);
        for p in &self.params {
            w.str(&p.name);
            w.u64(p.rows as u64);
            w.u64(p.cols as u64);
            w.u8(p.is_bias as u8);
            w.f64_slice(&p.values);
            w.f64_slice(&p.m);
            w.f64_slice(&p.v);
        }
    }

    pub fn decode(r: &mut ByteReader) -> Result<Self, DecodeError> {
        let step = r.u64()?;
        let count = r.usize()?;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.str()?;
            let rows = r.usize()?;
            let cols = r.usize()?;
            let is_bias = r.u8()? != 0;
            let offset = r.offset();
            let values = r.f64_vec()?;
            let m = r.f64_vec()?;
            let v = r.f64_vec()?;
            if values.len() != rows * cols || m.len() != values.len() || v.len() != values.len() {
                return Err(DecodeError::Invalid {
                    offset,
                    message: format!("parameter `{name}` has inconsistent lengths"),
                });
            }
            params.push(Param { name, rows, cols, values, m, v, is_bias });
        }
        Ok(ParamStore { params, step })
    }
}
