//! Task-specific output heads.
//!
//! - [`RegressionHead`]: flatten, GeLU sub-layers, linear output (forecasting).
//! - [`ClassificationHead`]: flatten, GeLU sub-layers, softmax output (vision).
//! - [`FusionClassificationHead`]: flattens every pipeline, concatenates, then
//!   ReLU sub-layers and a softmax output.
//! - [`FusionRegressionHead`]: projects every pipeline to a shared width
//!   `D_fusion`, concatenates along the sequence axis, flattens, then ReLU
//!   sub-layers and a linear output.
//!
//! Heads only read pipeline outputs; they never share parameters.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{concat, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{Activation, ForwardCtx, Linear, Mlp};
use crate::params::ParamStore;
use crate::scalar::Scalar;

pub fn default_hidden_dims() -> Vec<usize> {
    vec![128, 64]
}

fn one() -> usize {
    1
}

fn check_p_drop(p_drop: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p_drop) {
        return Err(Error::Config(format!("0 ≤ P_drop < 1 violated: P_drop = {p_drop}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionHeadSpec {
    pub f_out: usize,
    /// Horizon length; only 1 is supported.
    #[serde(default = "one")]
    pub s_out: usize,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    pub p_drop: f64,
}

impl RegressionHeadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.s_out != 1 {
            return Err(Error::Config(format!("S_out = 1 required, got {}", self.s_out)));
        }
        if self.f_out < 1 {
            return Err(Error::Config("F_out ≥ 1 violated".into()));
        }
        check_p_drop(self.p_drop)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationHeadSpec {
    pub n_classes: usize,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    pub p_drop: f64,
}

impl ClassificationHeadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config(format!("n_classes ≥ 2 violated: {}", self.n_classes)));
        }
        check_p_drop(self.p_drop)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionRegressionHeadSpec {
    pub d_fusion: usize,
    pub f_out: usize,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    pub p_drop: f64,
}

impl FusionRegressionHeadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_fusion < 1 {
            return Err(Error::Config("D_fusion ≥ 1 violated".into()));
        }
        if self.f_out < 1 {
            return Err(Error::Config("F_out ≥ 1 violated".into()));
        }
        check_p_drop(self.p_drop)
    }
}

/// `(S, F)` extents of one pipeline output.
pub type SeqShape = (usize, usize);

fn check_pipeline<T: Scalar>(x: &Var<'_, T>, expected: SeqShape) -> Result<usize> {
    let shape = x.shape();
    match shape.dims() {
        &[b, s, f] if (s, f) == expected => Ok(b),
        _ => Err(Error::Dimension(format!(
            "head expects (B, {}, {}) input, got {shape}",
            expected.0, expected.1
        ))),
    }
}

#[derive(Clone, Debug)]
pub struct RegressionHead {
    pub input: SeqShape,
    pub hidden: Mlp,
    pub out: Linear,
}

impl RegressionHead {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, input: SeqShape, spec: &RegressionHeadSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let flat = input.0 * input.1;
        let hidden = Mlp::new(store, &format!("{name}.hidden"), flat, &spec.hidden_dims, Activation::Gelu, spec.p_drop, rng)?;
        let out = Linear::new(store, &format!("{name}.out"), hidden.output_dim(flat), spec.f_out * spec.s_out, rng)?;
        Ok(RegressionHead { input, hidden, out })
    }

    /// `(B, S, D)` to `(B, F_out)`.
    pub fn forward<'t, T: Scalar>(&self, tape: &'t Tape<T>, store: &ParamStore<T>, enc: &Var<'t, T>, ctx: &mut ForwardCtx) -> Result<Var<'t, T>> {
        check_pipeline(enc, self.input)?;
        let h = self.hidden.forward(tape, store, &enc.flatten_from(1)?, ctx)?;
        self.out.forward(tape, store, &h)
    }
}

#[derive(Clone, Debug)]
pub struct ClassificationHead {
    pub input: SeqShape,
    pub hidden: Mlp,
    pub out: Linear,
}

impl ClassificationHead {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, input: SeqShape, spec: &ClassificationHeadSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let flat = input.0 * input.1;
        let hidden = Mlp::new(store, &format!("{name}.hidden"), flat, &spec.hidden_dims, Activation::Gelu, spec.p_drop, rng)?;
        let out = Linear::new(store, &format!("{name}.out"), hidden.output_dim(flat), spec.n_classes, rng)?;
        Ok(ClassificationHead { input, hidden, out })
    }

    /// Pre-softmax scores `(B, n_classes)`.
    pub fn logits<'t, T: Scalar>(&self, tape: &'t Tape<T>, store: &ParamStore<T>, enc: &Var<'t, T>, ctx: &mut ForwardCtx) -> Result<Var<'t, T>> {
        check_pipeline(enc, self.input)?;
        let h = self.hidden.forward(tape, store, &enc.flatten_from(1)?, ctx)?;
        self.out.forward(tape, store, &h)
    }

    /// Class probabilities `(B, n_classes)`.
    pub fn forward<'t, T: Scalar>(&self, tape: &'t Tape<T>, store: &ParamStore<T>, enc: &Var<'t, T>, ctx: &mut ForwardCtx) -> Result<Var<'t, T>> {
        self.logits(tape, store, enc, ctx)?.softmax(1)
    }
}

fn check_pipelines<T: Scalar>(encs: &[Var<'_, T>], inputs: &[SeqShape]) -> Result<()> {
    if encs.len() != inputs.len() {
        return Err(Error::Input(format!(
            "fusion head built for {} pipelines received {}",
            inputs.len(),
            encs.len()
        )));
    }
    let mut batch = None;
    for (x, &shape) in encs.iter().zip(inputs) {
        let b = check_pipeline(x, shape)?;
        if *batch.get_or_insert(b) != b {
            return Err(Error::Dimension("pipelines disagree on batch size".into()));
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FusionClassificationHead {
    pub inputs: Vec<SeqShape>,
    pub hidden: Mlp,
    pub out: Linear,
}

impl FusionClassificationHead {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: &[SeqShape],
        spec: &ClassificationHeadSpec,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        spec.validate()?;
        if inputs.is_empty() {
            return Err(Error::Config("fusion classification head needs at least one pipeline".into()));
        }
        let flat = Self::fused_width(inputs);
        let hidden = Mlp::new(store, &format!("{name}.hidden"), flat, &spec.hidden_dims, Activation::Relu, spec.p_drop, rng)?;
        let out = Linear::new(store, &format!("{name}.out"), hidden.output_dim(flat), spec.n_classes, rng)?;
        Ok(FusionClassificationHead {
            inputs: inputs.to_vec(),
            hidden,
            out,
        })
    }

    /// Length of the concatenated flattened pipelines, `Σ S_i × F_i`.
    pub fn fused_width(inputs: &[SeqShape]) -> usize {
        inputs.iter().map(|(s, f)| s * f).sum()
    }

    pub fn forward<'t, T: Scalar>(&self, tape: &'t Tape<T>, store: &ParamStore<T>, encs: &[Var<'t, T>], ctx: &mut ForwardCtx) -> Result<Var<'t, T>> {
        if encs.is_empty() {
            return Err(Error::Config("fusion classification head received no pipelines".into()));
        }
        check_pipelines(encs, &self.inputs)?;
        let flat = encs.iter().map(|x| x.flatten_from(1)).collect::<Result<Vec<_>>>()?;
        let fused = concat(&flat, 1)?;
        let h = self.hidden.forward(tape, store, &fused, ctx)?;
        self.out.forward(tape, store, &h)?.softmax(1)
    }
}

#[derive(Clone, Debug)]
pub struct FusionRegressionHead {
    pub inputs: Vec<SeqShape>,
    pub d_fusion: usize,
    pub projections: Vec<Linear>,
    pub hidden: Mlp,
    pub out: Linear,
}

impl FusionRegressionHead {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: &[SeqShape],
        spec: &FusionRegressionHeadSpec,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        spec.validate()?;
        if inputs.is_empty() {
            return Err(Error::Config("fusion regression head needs at least one pipeline".into()));
        }
        let projections = inputs
            .iter()
            .enumerate()
            .map(|(i, &(_, f))| Linear::new(store, &format!("{name}.projection{i}"), f, spec.d_fusion, rng))
            .collect::<Result<Vec<_>>>()?;
        let flat = Self::unified_len(inputs) * spec.d_fusion;
        let hidden = Mlp::new(store, &format!("{name}.hidden"), flat, &spec.hidden_dims, Activation::Relu, spec.p_drop, rng)?;
        let out = Linear::new(store, &format!("{name}.out"), hidden.output_dim(flat), spec.f_out, rng)?;
        Ok(FusionRegressionHead {
            inputs: inputs.to_vec(),
            d_fusion: spec.d_fusion,
            projections,
            hidden,
            out,
        })
    }

    /// Sequence length of the unified matrix, `Σ S_i`.
    pub fn unified_len(inputs: &[SeqShape]) -> usize {
        inputs.iter().map(|(s, _)| s).sum()
    }

    /// The `(B, Σ S_i, D_fusion)` matrix before flattening.
    pub fn unify<'t, T: Scalar>(&self, tape: &'t Tape<T>, store: &ParamStore<T>, encs: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        if encs.is_empty() {
            return Err(Error::Config("fusion regression head received no pipelines".into()));
        }
        check_pipelines(encs, &self.inputs)?;
        let projected = encs
            .iter()
            .zip(&self.projections)
            .map(|(x, p)| p.forward(tape, store, x))
            .collect::<Result<Vec<_>>>()?;
        concat(&projected, 1)
    }

    pub fn forward<'t, T: Scalar>(&self, tape: &'t Tape<T>, store: &ParamStore<T>, encs: &[Var<'t, T>], ctx: &mut ForwardCtx) -> Result<Var<'t, T>> {
        let unified = self.unify(tape, store, encs)?;
        let h = self.hidden.forward(tape, store, &unified.flatten_from(1)?, ctx)?;
        self.out.forward(tape, store, &h)
    }
}
