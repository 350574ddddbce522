//! Multivariate Time2Vec embedding.
//!
//! For a time step with feature vector `tau` (length `F_in`) the embedding is
//! an `(F_in, k)` matrix whose column 0 is linear, `omega[i][0] * tau[i] +
//! phi[i][0]`, and whose columns `1..k` are periodic,
//! `sin(omega[i][j] * tau[i] + phi[i][j])`. The matrix is flattened
//! row-major to `F_in * k` values and appended to the raw features, giving an
//! encoder width of `F_in * (1 + k)`.
//!
//! The same learned `(omega, phi)` are applied at every sequence position;
//! each position is embedded from its own feature vector.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{concat, Tape, Var};
use crate::error::{Error, Result};
use crate::params::{uniform, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The periodic function applied to embedding columns `1..k`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodicFn {
    #[default]
    Sin,
}

#[derive(Clone, Debug)]
pub struct Mt2vEmbedding {
    pub omega: ParamId,
    pub phi: ParamId,
    pub features: usize,
    pub k: usize,
    pub periodic: PeriodicFn,
}

/// Encoder width produced by an MT2V head: `F_in * (1 + k)`.
pub fn mt2v_width(features: usize, k: usize) -> usize {
    features * (1 + k)
}

impl Mt2vEmbedding {
    /// `omega` and `phi` start uniform in `[-1, 1]`.
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        features: usize,
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if features == 0 || k == 0 {
            return Err(Error::Config(format!(
                "MT2V needs F_in >= 1 and k >= 1 (got F_in={features}, k={k})"
            )));
        }
        let omega = store.add(format!("{name}.omega"), uniform(rng, [features, k], -1.0, 1.0))?;
        let phi = store.add(format!("{name}.phi"), uniform(rng, [features, k], -1.0, 1.0))?;
        Ok(Mt2vEmbedding {
            omega,
            phi,
            features,
            k,
            periodic: PeriodicFn::Sin,
        })
    }

    pub fn output_dim(&self) -> usize {
        mt2v_width(self.features, self.k)
    }

    /// Column masks selecting the linear column (0) and the periodic ones.
    fn masks<T: Scalar>(&self) -> (Tensor<T>, Tensor<T>) {
        let (f, k) = (self.features, self.k);
        let linear: Vec<T> = (0..f * k).map(|i| if i % k == 0 { T::one() } else { T::zero() }).collect();
        let periodic: Vec<T> = linear.iter().map(|&m| T::one() - m).collect();
        (
            Tensor::new([f, k], linear).expect("mask shape"),
            Tensor::new([f, k], periodic).expect("mask shape"),
        )
    }

    /// Embedding block only: `(B, S, F_in) -> (B, S, F_in * k)`.
    pub fn embed<'t, T: Scalar>(&self, tape: &'t Tape<T>, store: &ParamStore<T>, tau: &Var<'t, T>) -> Result<Var<'t, T>> {
        let shape = tau.shape();
        let dims = shape.dims();
        if dims.len() != 3 || dims[2] != self.features {
            return Err(Error::Dimension(format!(
                "MT2V expects (B, S, {}) input, got {shape}",
                self.features
            )));
        }
        let (b, s, f, k) = (dims[0], dims[1], self.features, self.k);
        let omega = tape.param(store, self.omega);
        let phi = tape.param(store, self.phi);
        // tau[b, s, i] repeated across the k embedding columns
        let spread = tau
            .reshape([b, s, f, 1])?
            .matmul(&tape.constant(Tensor::ones([1, k])))?;
        let affine = spread.mul(&omega)?.add(&phi)?;
        let periodic = match self.periodic {
            PeriodicFn::Sin => affine.sin(),
        };
        let (linear_mask, periodic_mask) = self.masks::<T>();
        let block = affine.mul_const(&linear_mask)?.add(&periodic.mul_const(&periodic_mask)?)?;
        block.reshape([b, s, f * k])
    }

    /// Full head output: raw features first, then the flattened embedding.
    pub fn forward<'t, T: Scalar>(&self, tape: &'t Tape<T>, store: &ParamStore<T>, tau: &Var<'t, T>) -> Result<Var<'t, T>> {
        let block = self.embed(tape, store, tau)?;
        concat(&[*tau, block], 2)
    }
}
