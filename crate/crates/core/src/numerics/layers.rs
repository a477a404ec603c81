//! Layer building blocks on top of [`Graph`].
//!
//! Layers only hold [`ParamId`]s; values live in the [`ParamStore`] and are
//! pulled onto the tape at each forward pass.

use std::ops::Range;

use rand::Rng;

use super::graph::{AttentionWeights, Graph, Mat, Var};
use super::params::{glorot, ParamId, ParamStore};
use crate::error::{contract, Result};

#[derive(Clone, Debug)]
pub struct Affine {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Affine {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add(format!("{name}.weight"), glorot(rng, fan_in, fan_out))?;
        let bias = store.add(format!("{name}.bias"), Mat::zeros((1, fan_out)))?;
        Ok(Affine {
            weight,
            bias,
            fan_in,
            fan_out,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xw = g.matmul(x, w)?;
        g.add_row(xw, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: store.add(format!("{name}.gain"), Mat::ones((1, dim)))?,
            bias: store.add(format!("{name}.bias"), Mat::zeros((1, dim)))?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gamma = g.param(store, self.gain);
        let beta = g.param(store, self.bias);
        g.layer_norm(x, gamma, beta)
    }
}

/// Standard LSTM cell. Gate columns are laid out as input, forget, candidate,
/// output; the forget-gate bias starts at +1.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w_input = store.add(format!("{name}.w_input"), glorot(rng, input_dim, 4 * hidden))?;
        let w_hidden = store.add(format!("{name}.w_hidden"), glorot(rng, hidden, 4 * hidden))?;
        let mut b = Mat::zeros((1, 4 * hidden));
        b.slice_mut(ndarray::s![.., hidden..2 * hidden]).fill(1.0);
        let bias = store.add(format!("{name}.bias"), b)?;
        Ok(LstmCell {
            w_input,
            w_hidden,
            bias,
            input_dim,
            hidden,
        })
    }

    /// One step for a batch of rows: returns `(h, c)`.
    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        h_prev: Var,
        c_prev: Var,
    ) -> Result<(Var, Var)> {
        let (rows, in_dim) = g.shape(x);
        let hd = self.hidden;
        if in_dim != self.input_dim
            || g.shape(h_prev) != (rows, hd)
            || g.shape(c_prev) != (rows, hd)
        {
            return Err(contract(format!(
                "lstm step: x {:?}, h {:?}, c {:?} for input {} hidden {}",
                g.shape(x),
                g.shape(h_prev),
                g.shape(c_prev),
                self.input_dim,
                hd
            )));
        }
        let wi = g.param(store, self.w_input);
        let wh = g.param(store, self.w_hidden);
        let b = g.param(store, self.bias);
        let xi = g.matmul(x, wi)?;
        let hh = g.matmul(h_prev, wh)?;
        let pre = g.add(xi, hh)?;
        let pre = g.add_row(pre, b)?;
        let i_pre = g.slice_cols(pre, 0..hd)?;
        let f_pre = g.slice_cols(pre, hd..2 * hd)?;
        let c_pre = g.slice_cols(pre, 2 * hd..3 * hd)?;
        let o_pre = g.slice_cols(pre, 3 * hd..4 * hd)?;
        let i = g.sigmoid(i_pre);
        let f = g.sigmoid(f_pre);
        let cand = g.tanh(c_pre);
        let o = g.sigmoid(o_pre);
        let keep = g.mul(f, c_prev)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok((h, c))
    }
}

/// Scaled dot-product attention over already-projected queries, keys and
/// values, returning the outputs and a copy of the per-head weights.
pub fn multi_head_attention(
    g: &mut Graph,
    queries: Var,
    keys: Var,
    values: Var,
    segments: &[Range<usize>],
    mask: &[bool],
    heads: usize,
) -> Result<(Var, AttentionWeights)> {
    let out = g.attention(queries, keys, values, segments, mask, heads)?;
    let weights = g.attention_weights(out).cloned().unwrap_or_default();
    Ok((out, weights))
}

#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub query: Affine,
    pub key: Affine,
    pub value: Affine,
    pub output: Affine,
    pub heads: usize,
}

impl SelfAttention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(contract(format!("model dim {dim} not divisible by {heads} heads")));
        }
        Ok(SelfAttention {
            query: Affine::new(store, &format!("{name}.query"), dim, dim, rng)?,
            key: Affine::new(store, &format!("{name}.key"), dim, dim, rng)?,
            value: Affine::new(store, &format!("{name}.value"), dim, dim, rng)?,
            output: Affine::new(store, &format!("{name}.output"), dim, dim, rng)?,
            heads,
        })
    }

    /// Returns the projected output and the attention node (for weights).
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        segments: &[Range<usize>],
        mask: &[bool],
    ) -> Result<(Var, Var)> {
        let q = self.query.forward(g, store, x)?;
        let k = self.key.forward(g, store, x)?;
        let v = self.value.forward(g, store, x)?;
        let att = g.attention(q, k, v, segments, mask, self.heads)?;
        let out = self.output.forward(g, store, att)?;
        Ok((out, att))
    }
}

/// Post-norm transformer encoder block: `LN(x + MHA(x))` then
/// `LN(y + FF(y))` with a rectified hidden layer.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub attention: SelfAttention,
    pub norm_attention: LayerNorm,
    pub ff_in: Affine,
    pub ff_out: Affine,
    pub norm_ff: LayerNorm,
}

impl EncoderLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        ff_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(EncoderLayer {
            attention: SelfAttention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            norm_attention: LayerNorm::new(store, &format!("{name}.norm_attn"), dim)?,
            ff_in: Affine::new(store, &format!("{name}.ff_in"), dim, ff_dim, rng)?,
            ff_out: Affine::new(store, &format!("{name}.ff_out"), ff_dim, dim, rng)?,
            norm_ff: LayerNorm::new(store, &format!("{name}.norm_ff"), dim)?,
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        segments: &[Range<usize>],
        mask: &[bool],
    ) -> Result<(Var, Var)> {
        let (a, att) = self.attention.forward(g, store, x, segments, mask)?;
        let r = g.add(x, a)?;
        let y = self.norm_attention.forward(g, store, r)?;
        let f = self.ff_in.forward(g, store, y)?;
        let f = g.relu(f);
        let f = self.ff_out.forward(g, store, f)?;
        let r = g.add(y, f)?;
        let out = self.norm_ff.forward(g, store, r)?;
        Ok((out, att))
    }
}

/// Sinusoidal position code: entry `2i` is `sin(pos / 10000^(2i/dim))`,
/// entry `2i+1` the matching cosine.
pub fn positional_encoding(position: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(contract(format!("positional encoding needs an even dim, got {dim}")));
    }
    let mut out = vec![0.0; dim];
    for i in 0..dim / 2 {
        let angle = position as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positional_encoding_values() {
        let p0 = positional_encoding(0, 8).unwrap();
        assert_eq!(p0, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let p1 = positional_encoding(1, 4).unwrap();
        assert!((p1[0] - 0.8414709848078965).abs() < 1e-15);
        // entry 2: sin(1 / 10000^(2/4)) = sin(0.01)
        assert!((p1[2] - 0.01f64.sin()).abs() < 1e-15);
        for pos in 0..600 {
            assert!(positional_encoding(pos, 64)
                .unwrap()
                .iter()
                .all(|v| (-1.0..=1.0).contains(v)));
        }
        assert!(positional_encoding(3, 5).is_err());
    }

    #[test]
    fn zero_lstm_cell_outputs_zero() {
        let mut store = ParamStore::new();
        let mut rng = crate::rng::stream(0, "t", 0);
        let cell = LstmCell::new(&mut store, "c", 3, 4, &mut rng).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).fill(0.0);
        }
        let mut g = Graph::new();
        let x = g.constant(Mat::from_elem((2, 3), 0.9));
        let h0 = g.constant(Mat::zeros((2, 4)));
        let c0 = g.constant(Mat::zeros((2, 4)));
        let (h, c) = cell.step(&mut g, &store, x, h0, c0).unwrap();
        assert!(g.value(h).iter().all(|&v| v == 0.0));
        assert!(g.value(c).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_dimension_mismatch_is_contract_error() {
        let mut store = ParamStore::new();
        let mut rng = crate::rng::stream(0, "t", 0);
        let cell = LstmCell::new(&mut store, "c", 3, 4, &mut rng).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Mat::zeros((2, 5)));
        let h0 = g.constant(Mat::zeros((2, 4)));
        let c0 = g.constant(Mat::zeros((2, 4)));
        assert!(cell.step(&mut g, &store, x, h0, c0).is_err());
    }
}
