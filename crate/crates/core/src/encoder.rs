//! Transformer encoder layers and cascaded stacks.
//!
//! Each layer is post-norm:
//!
//! ```text
//! u = LayerNorm(x + Dropout(MultiHeadSelfAttention(x)))
//! y = LayerNorm(u + Dropout(PointWiseFeedForward(u)))
//! ```
//!
//! Attention is unmasked; every position attends over the whole sequence.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{ForwardCtx, LayerNorm, Linear};
use crate::params::ParamStore;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    /// Inner model dimension `D_e`.
    pub d_e: usize,
    /// Attention heads `h`.
    pub heads: usize,
    /// Feed-forward width `D_ff`.
    pub d_ff: usize,
    pub p_drop: f64,
    /// Number of cascaded layers `E`.
    pub layers: usize,
    /// Per-head width. When absent it is `d_e / heads`, which must divide evenly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_dim: Option<usize>,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::Config(format!("E ≥ 1 violated: encoder has {} layers", self.layers)));
        }
        if self.d_e < 1 {
            return Err(Error::Config("D_e ≥ 1 violated".into()));
        }
        if self.heads < 1 {
            return Err(Error::Config("h ≥ 1 violated: zero attention heads".into()));
        }
        if self.d_ff < 1 {
            return Err(Error::Config("D_ff ≥ 1 violated".into()));
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            return Err(Error::Config(format!("0 ≤ P_drop < 1 violated: P_drop = {}", self.p_drop)));
        }
        match self.head_dim {
            Some(0) => Err(Error::Config("head_dim ≥ 1 violated".into())),
            Some(_) => Ok(()),
            None if !self.d_e.is_multiple_of(self.heads) => Err(Error::Config(format!(
                "D_e divisible by h violated: D_e = {} is not divisible by h = {}",
                self.d_e, self.heads
            ))),
            None => Ok(()),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim.unwrap_or(self.d_e / self.heads.max(1))
    }
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub ff_up: Linear,
    pub ff_down: Linear,
    pub norm_attention: LayerNorm,
    pub norm_feed_forward: LayerNorm,
    pub heads: usize,
    pub head_dim: usize,
    pub p_drop: f64,
}

impl EncoderLayer {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let inner = cfg.heads * cfg.head_dim();
        Ok(EncoderLayer {
            query: Linear::new(store, &format!("{name}.attention.query"), cfg.d_e, inner, rng)?,
            key: Linear::new(store, &format!("{name}.attention.key"), cfg.d_e, inner, rng)?,
            value: Linear::new(store, &format!("{name}.attention.value"), cfg.d_e, inner, rng)?,
            output: Linear::new(store, &format!("{name}.attention.output"), inner, cfg.d_e, rng)?,
            norm_attention: LayerNorm::new(store, &format!("{name}.attention_norm"), cfg.d_e)?,
            ff_up: Linear::new(store, &format!("{name}.feed_forward.up"), cfg.d_e, cfg.d_ff, rng)?,
            ff_down: Linear::new(store, &format!("{name}.feed_forward.down"), cfg.d_ff, cfg.d_e, rng)?,
            norm_feed_forward: LayerNorm::new(store, &format!("{name}.feed_forward_norm"), cfg.d_e)?,
            heads: cfg.heads,
            head_dim: cfg.head_dim(),
            p_drop: cfg.p_drop,
        })
    }

    pub fn d_e(&self) -> usize {
        self.query.fan_in
    }

    fn check_input<T: Scalar>(&self, x: &Var<'_, T>) -> Result<(usize, usize)> {
        let shape = x.shape();
        match shape.dims() {
            &[b, s, d] if d == self.d_e() => Ok((b, s)),
            _ => Err(Error::Dimension(format!(
                "encoder layer expects (B, S, {}) input, got {shape}",
                self.d_e()
            ))),
        }
    }

    fn split_heads<'t, T: Scalar>(&self, x: Var<'t, T>, b: usize, s: usize) -> Result<Var<'t, T>> {
        x.reshape([b, s, self.heads, self.head_dim])?.permute(&[0, 2, 1, 3])
    }

    /// Multi-head self-attention. Also returns the `(B, h, S, S)` attention weights.
    pub fn self_attention<'t, T: Scalar>(
        &self,
        tape: &'t Tape<T>,
        store: &ParamStore<T>,
        x: &Var<'t, T>,
    ) -> Result<(Var<'t, T>, Var<'t, T>)> {
        let (b, s) = self.check_input(x)?;
        let q = self.split_heads(self.query.forward(tape, store, x)?, b, s)?;
        let k = self.split_heads(self.key.forward(tape, store, x)?, b, s)?;
        let v = self.split_heads(self.value.forward(tape, store, x)?, b, s)?;
        let scale = T::one() / T::of(self.head_dim as f64).sqrt();
        let scores = q.matmul(&k.transpose()?)?.scale(scale);
        let weights = scores.softmax(3)?;
        let context = weights
            .matmul(&v)?
            .permute(&[0, 2, 1, 3])?
            .reshape([b, s, self.heads * self.head_dim])?;
        Ok((self.output.forward(tape, store, &context)?, weights))
    }

    /// Position-wise `Dense(D_e -> D_ff) -> ReLU -> Dense(D_ff -> D_e)`.
    pub fn feed_forward<'t, T: Scalar>(&self, tape: &'t Tape<T>, store: &ParamStore<T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.check_input(x)?;
        let hidden = self.ff_up.forward(tape, store, x)?.relu();
        self.ff_down.forward(tape, store, &hidden)
    }

    pub fn forward<'t, T: Scalar>(
        &self,
        tape: &'t Tape<T>,
        store: &ParamStore<T>,
        x: &Var<'t, T>,
        ctx: &mut ForwardCtx,
    ) -> Result<Var<'t, T>> {
        let (attended, _) = self.self_attention(tape, store, x)?;
        let attended = attended.dropout(self.p_drop, ctx.training, &mut ctx.rng)?;
        let u = self.norm_attention.forward(tape, store, &x.add(&attended)?)?;
        let fed = self.feed_forward(tape, store, &u)?.dropout(self.p_drop, ctx.training, &mut ctx.rng)?;
        self.norm_feed_forward.forward(tape, store, &u.add(&fed)?)
    }
}

/// `E` cascaded encoder layers; the output shape always equals the input shape.
#[derive(Clone, Debug)]
pub struct EncoderStack {
    pub layers: Vec<EncoderLayer>,
}

impl EncoderStack {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let layers = (0..cfg.layers)
            .map(|i| EncoderLayer::new(store, &format!("{name}.layer{i}"), cfg, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncoderStack { layers })
    }

    pub fn forward<'t, T: Scalar>(
        &self,
        tape: &'t Tape<T>,
        store: &ParamStore<T>,
        x: &Var<'t, T>,
        ctx: &mut ForwardCtx,
    ) -> Result<Var<'t, T>> {
        let mut h = *x;
        for layer in &self.layers {
            h = layer.forward(tape, store, &h, ctx)?;
        }
        Ok(h)
    }
}
