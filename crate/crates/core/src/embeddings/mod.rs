//! Input embedding heads: each turns one raw modality into an `(S, D_e)`
//! sequence for its encoder pipeline.

mod mt2v;
mod patches;

pub use mt2v::{mt2v_width, Mt2vEmbedding, PeriodicFn};
pub use patches::{extract_patches, extract_patches_batch, reassemble, PatchConfig, PatchEncoder, PatchGrid};

use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

impl PatchEncoder {
    /// Encodes one extracted grid to `(S_p, D_e)`.
    pub fn encode<'t, T: Scalar>(&self, tape: &'t Tape<T>, store: &ParamStore<T>, grid: &PatchGrid<T>) -> Result<Var<'t, T>> {
        if grid.num_patches() != self.num_patches {
            return Err(Error::Dimension(format!(
                "grid has {} patches but the position table has {} rows",
                grid.num_patches(),
                self.num_patches
            )));
        }
        self.forward(tape, store, &tape.constant(grid.patches.clone()))
    }
}

/// Image input head: patch extraction followed by a [`PatchEncoder`].
#[derive(Clone, Debug)]
pub struct ImageEmbedding {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub patch: PatchConfig,
    pub encoder: PatchEncoder,
}

impl ImageEmbedding {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        (height, width, channels): (usize, usize, usize),
        patch: PatchConfig,
        d_e: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let (n_row, n_col) = patch.grid_for(height, width).map_err(|e| match e {
            Error::Dimension(msg) => Error::Config(msg),
            other => other,
        })?;
        let encoder = PatchEncoder::new(store, &format!("{name}.patch_encoder"), n_row * n_col, patch.patch_len(channels), d_e, rng)?;
        Ok(ImageEmbedding {
            height,
            width,
            channels,
            patch,
            encoder,
        })
    }

    pub fn sequence_len(&self) -> usize {
        self.encoder.num_patches
    }

    pub fn output_dim(&self) -> usize {
        self.encoder.d_e
    }

    /// `(B, H, W, C)` images to `(B, S_p, D_e)`.
    pub fn forward<'t, T: Scalar>(&self, tape: &'t Tape<T>, store: &ParamStore<T>, images: &Tensor<T>) -> Result<Var<'t, T>> {
        if images.rank() != 4 || images.dims()[1..] != [self.height, self.width, self.channels] {
            return Err(Error::Input(format!(
                "image head expects (B, {}, {}, {}) input, got {}",
                self.height,
                self.width,
                self.channels,
                images.shape()
            )));
        }
        let patches = extract_patches_batch(images, &self.patch)?;
        self.encoder.forward(tape, store, &tape.constant(patches))
    }
}
