//! Small building blocks shared by embeddings, encoders and heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::Result;
use crate::params::{glorot_uniform, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mode and randomness for one forward pass.
pub struct ForwardCtx {
    pub training: bool,
    pub rng: ChaCha8Rng,
}

impl ForwardCtx {
    /// Inference: dropout disabled, the RNG is never consulted.
    pub fn eval() -> Self {
        ForwardCtx {
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn train(seed: u64) -> Self {
        ForwardCtx {
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Gelu,
}

impl Activation {
    pub fn apply<'t, T: Scalar>(self, x: Var<'t, T>) -> Var<'t, T> {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.relu(),
            Activation::Gelu => x.gelu(),
        }
    }
}

/// Dense layer `y = x W + b` applied over the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let weight = store.add(
            format!("{name}.weight"),
            glorot_uniform(rng, [fan_in, fan_out], fan_in, fan_out),
        )?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros([fan_out]))?;
        Ok(Linear {
            weight,
            bias,
            fan_in,
            fan_out,
        })
    }

    pub fn forward<'t, T: Scalar>(&self, tape: &'t Tape<T>, store: &ParamStore<T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        x.matmul(&w)?.add(&b)
    }

    pub fn num_params(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub epsilon: f64,
}

impl LayerNorm {
    pub const DEFAULT_EPSILON: f64 = 1e-6;

    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: store.add(format!("{name}.gain"), Tensor::ones([dim]))?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros([dim]))?,
            epsilon: Self::DEFAULT_EPSILON,
        })
    }

    pub fn forward<'t, T: Scalar>(&self, tape: &'t Tape<T>, store: &ParamStore<T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        let gain = tape.param(store, self.gain);
        let bias = tape.param(store, self.bias);
        x.layer_norm(&gain, &bias, T::of(self.epsilon))
    }
}

/// Stack of `Dense -> activation -> Dropout` sub-layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
    pub p_drop: f64,
}

impl Mlp {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        widths: &[usize],
        activation: Activation,
        p_drop: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Linear::new(store, &format!("{name}.dense{i}"), fan_in, w, rng)?);
            fan_in = w;
        }
        Ok(Mlp {
            layers,
            activation,
            p_drop,
        })
    }

    /// Width of the final sub-layer, or `input` when the stack is empty.
    pub fn output_dim(&self, input: usize) -> usize {
        self.layers.last().map_or(input, |l| l.fan_out)
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
            h = self.activation.apply(layer.forward(tape, store, &h)?);
            h = h.dropout(self.p_drop, ctx.training, &mut ctx.rng)?;
        }
        Ok(h)
    }
}
