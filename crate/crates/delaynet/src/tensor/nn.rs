//! Neural building blocks on top of the tape: a dense layer and a
//! gated recurrent (GRU) cell.

use rand::Rng;

use super::{Graph, ParamId, ParamStore, TensorId, TensorError};

/// Fully-connected layer `x * W + b` with `W` of shape `(input, output)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Dense {
            w: store.add_weight(format!("{name}.w"), input, output, rng),
            b: store.add_bias(format!("{name}.b"), output),
            input,
            output,
        }
    }

    /// Looks the layer up by name in a restored store.
    pub fn from_store(store: &ParamStore, name: &str) -> Option<Self> {
        let w = store.find(&format!("{name}.w"))?;
        let b = store.find(&format!("{name}.b"))?;
        let p = store.get(w);
        Some(Dense { w, b, input: p.rows, output: p.cols })
    }

    pub fn apply(&self, g: &mut Graph, x: TensorId) -> Result<TensorId, TensorError> {
        let w = g.param(self.w)?;
        let b = g.param(self.b)?;
        let xw = g.matmul(x, w)?;
        g.add(xw, b)
    }
}

/// Gated recurrent cell:
///
/// ```text
/// z = sigmoid(x Wz + h Uz + bz)
/// r = sigmoid(x Wr + h Ur + br)
/// c = tanh(x Wc + (r * h) Uc + bc)
/// h' = h + z * (c - h)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wc: ParamId,
    pub uc: ParamId,
    pub bc: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut weight = |suffix: &str, rows: usize| {
            store.add_weight(format!("{name}.{suffix}"), rows, hidden, rng)
        };
        let wz = weight("wz", input);
        let uz = weight("uz", hidden);
        let wr = weight("wr", input);
        let ur = weight("ur", hidden);
        let wc = weight("wc", input);
        let uc = weight("uc", hidden);
        let bz = store.add_bias(format!("{name}.bz"), hidden);
        let br = store.add_bias(format!("{name}.br"), hidden);
        let bc = store.add_bias(format!("{name}.bc"), hidden);
        GruCell { wz, uz, bz, wr, ur, br, wc, uc, bc, input, hidden }
    }

    pub fn from_store(store: &ParamStore, name: &str) -> Option<Self> {
        let find = |suffix: &str| store.find(&format!("{name}.{suffix}"));
        let wz = find("wz")?;
        let p = store.get(wz);
        Some(GruCell {
            wz,
            uz: find("uz")?,
            bz: find("bz")?,
            wr: find("wr")?,
            ur: find("ur")?,
            br: find("br")?,
            wc: find("wc")?,
            uc: find("uc")?,
            bc: find("bc")?,
            input: p.rows,
            hidden: p.cols,
        })
    }

    fn gate(
        &self,
        g: &mut Graph,
        x: TensorId,
        h: TensorId,
        w: ParamId,
        u: ParamId,
        b: ParamId,
    ) -> Result<TensorId, TensorError> {
        let w = g.param(w)?;
        let u = g.param(u)?;
        let b = g.param(b)?;
        let xw = g.matmul(x, w)?;
        let hu = g.matmul(h, u)?;
        let s = g.add(xw, hu)?;
        g.add(s, b)
    }

    /// One recurrent update; differentiable through both arguments.
    pub fn step(&self, g: &mut Graph, h: TensorId, x: TensorId) -> Result<TensorId, TensorError> {
        let (hr, hc_) = g.shape(h);
        let (xr, xc) = g.shape(x);
        if hc_ != self.hidden || xc != self.input || hr != xr {
            return Err(TensorError::ShapeMismatch {
                op: "gru_step",
                lhs: (hr, hc_),
                rhs: (xr, xc),
            });
        }
        let z_pre = self.gate(g, x, h, self.wz, self.uz, self.bz)?;
        let z = g.sigmoid(z_pre)?;
        let r_pre = self.gate(g, x, h, self.wr, self.ur, self.br)?;
        let r = g.sigmoid(r_pre)?;
        let rh = g.mul(r, h)?;
        let c_pre = self.gate(g, x, rh, self.wc, self.uc, self.bc)?;
        let c = g.tanh(c_pre)?;
        // h' = h + z * (c - h)
        let cmh = g.sub(c, h)?;
        let zc = g.mul(z, cmh)?;
        g.add(h, zc)
    }
}
