//! Image patch extraction and patch encoding.
//!
//! A `(H_p, W_p)` window slides over an `(H, W, C)` image with the configured
//! stride, copying the pixels it covers. Windows that would run past the
//! image edge are not produced, so the grid has
//! `floor((H - H_p) / stride_h) + 1` rows (which is `floor(H / H_p)` when the
//! stride equals the patch size) and likewise for columns. Each patch is
//! flattened in `(row, column, channel)` order to `D_p = H_p * W_p * C` values.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::params::{glorot_uniform, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub patch_h: usize,
    pub patch_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
}

impl PatchConfig {
    /// Non-overlapping patches: stride equals the patch size.
    pub fn new(patch_h: usize, patch_w: usize) -> Self {
        PatchConfig {
            patch_h,
            patch_w,
            stride_h: patch_h,
            stride_w: patch_w,
        }
    }

    pub fn with_stride(self, stride_h: usize, stride_w: usize) -> Self {
        PatchConfig {
            stride_h,
            stride_w,
            ..self
        }
    }

    pub fn is_tiling(&self) -> bool {
        self.stride_h == self.patch_h && self.stride_w == self.patch_w
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_h == 0 || self.patch_w == 0 || self.stride_h == 0 || self.stride_w == 0 {
            return Err(Error::Config(format!("patch and stride extents must be positive: {self:?}")));
        }
        Ok(())
    }

    /// `(n_row, n_col)` for an `height x width` image.
    pub fn grid_for(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        self.validate()?;
        if height < self.patch_h || width < self.patch_w {
            return Err(Error::Dimension(format!(
                "patch ({}, {}) is larger than image ({height}, {width})",
                self.patch_h, self.patch_w
            )));
        }
        Ok((
            (height - self.patch_h) / self.stride_h + 1,
            (width - self.patch_w) / self.stride_w + 1,
        ))
    }

    /// Flattened patch length for `channels` colour channels.
    pub fn patch_len(&self, channels: usize) -> usize {
        self.patch_h * self.patch_w * channels
    }
}

/// Patches of one image in row-major grid order.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid<T> {
    pub n_row: usize,
    pub n_col: usize,
    pub channels: usize,
    pub config: PatchConfig,
    /// `(S_p, D_p)`
    pub patches: Tensor<T>,
}

impl<T: Scalar> PatchGrid<T> {
    pub fn num_patches(&self) -> usize {
        self.n_row * self.n_col
    }

    pub fn patch_len(&self) -> usize {
        self.config.patch_len(self.channels)
    }

    /// The `(N_row, N_col, H_p, W_p, C)` view of the patches.
    pub fn to_grid(&self) -> Tensor<T> {
        self.patches
            .reshape([self.n_row, self.n_col, self.config.patch_h, self.config.patch_w, self.channels])
            .expect("patch tensor is consistent with its grid")
    }
}

fn image_dims<T: Scalar>(image: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match image.dims() {
        &[h, w, c] => Ok((h, w, c)),
        _ => Err(Error::Dimension(format!("expected an (H, W, C) image, got {}", image.shape()))),
    }
}

fn copy_patches<T: Scalar>(pixels: &[T], h_w_c: (usize, usize, usize), cfg: &PatchConfig, grid: (usize, usize), out: &mut Vec<T>) {
    let (_, width, channels) = h_w_c;
    let (n_row, n_col) = grid;
    let row_len = cfg.patch_w * channels;
    for gr in 0..n_row {
        for gc in 0..n_col {
            let top = gr * cfg.stride_h;
            let left = gc * cfg.stride_w;
            for r in 0..cfg.patch_h {
                let start = ((top + r) * width + left) * channels;
                out.extend_from_slice(&pixels[start..start + row_len]);
            }
        }
    }
}

pub fn extract_patches<T: Scalar>(image: &Tensor<T>, cfg: &PatchConfig) -> Result<PatchGrid<T>> {
    let dims = image_dims(image)?;
    let (n_row, n_col) = cfg.grid_for(dims.0, dims.1)?;
    let mut data = Vec::with_capacity(n_row * n_col * cfg.patch_len(dims.2));
    copy_patches(image.data(), dims, cfg, (n_row, n_col), &mut data);
    Ok(PatchGrid {
        n_row,
        n_col,
        channels: dims.2,
        config: *cfg,
        patches: Tensor::new([n_row * n_col, cfg.patch_len(dims.2)], data)?,
    })
}

/// `(B, H, W, C)` images to `(B, S_p, D_p)` patch sequences.
pub fn extract_patches_batch<T: Scalar>(images: &Tensor<T>, cfg: &PatchConfig) -> Result<Tensor<T>> {
    let &[b, h, w, c] = images.dims() else {
        return Err(Error::Dimension(format!("expected (B, H, W, C) images, got {}", images.shape())));
    };
    let (n_row, n_col) = cfg.grid_for(h, w)?;
    let d_p = cfg.patch_len(c);
    let per_image = h * w * c;
    let mut data = Vec::with_capacity(b * n_row * n_col * d_p);
    for i in 0..b {
        let pixels = &images.data()[i * per_image..(i + 1) * per_image];
        copy_patches(pixels, (h, w, c), cfg, (n_row, n_col), &mut data);
    }
    Tensor::new([b, n_row * n_col, d_p], data)
}

/// Rebuilds the covered `(n_row * H_p, n_col * W_p, C)` region of the image.
pub fn reassemble<T: Scalar>(grid: &PatchGrid<T>) -> Result<Tensor<T>> {
    let cfg = grid.config;
    if !cfg.is_tiling() {
        return Err(Error::Config(format!(
            "reassembly needs stride equal to patch size, got patch ({}, {}) stride ({}, {})",
            cfg.patch_h, cfg.patch_w, cfg.stride_h, cfg.stride_w
        )));
    }
    let height = grid.n_row * cfg.patch_h;
    let width = grid.n_col * cfg.patch_w;
    let c = grid.channels;
    let row_len = cfg.patch_w * c;
    let mut out = vec![T::zero(); height * width * c];
    for (p, patch) in grid.patches.data().chunks(grid.patch_len()).enumerate() {
        let (gr, gc) = (p / grid.n_col, p % grid.n_col);
        for r in 0..cfg.patch_h {
            let dst = ((gr * cfg.patch_h + r) * width + gc * cfg.patch_w) * c;
            out[dst..dst + row_len].copy_from_slice(&patch[r * row_len..(r + 1) * row_len]);
        }
    }
    Tensor::new([height, width, c], out)
}

/// Projects flattened patches to the encoder width and adds a learned
/// position row per patch index.
#[derive(Clone, Debug)]
pub struct PatchEncoder {
    pub projection: Linear,
    pub positions: ParamId,
    pub num_patches: usize,
    pub d_e: usize,
}

impl PatchEncoder {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        num_patches: usize,
        patch_len: usize,
        d_e: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let projection = Linear::new(store, &format!("{name}.projection"), patch_len, d_e, rng)?;
        let positions = store.add(
            format!("{name}.positions"),
            glorot_uniform(rng, [num_patches, d_e], num_patches, d_e),
        )?;
        Ok(PatchEncoder {
            projection,
            positions,
            num_patches,
            d_e,
        })
    }

    /// `(B, S_p, D_p)` (or unbatched `(S_p, D_p)`) to the same leading shape with width `D_e`.
    pub fn forward<'t, T: Scalar>(&self, tape: &'t Tape<T>, store: &ParamStore<T>, patches: &Var<'t, T>) -> Result<Var<'t, T>> {
        let shape = patches.shape();
        let dims = shape.dims();
        if dims.len() < 2 || dims[dims.len() - 2] != self.num_patches || dims[dims.len() - 1] != self.projection.fan_in {
            return Err(Error::Dimension(format!(
                "patch encoder expects (.., {}, {}) patches, got {shape}",
                self.num_patches, self.projection.fan_in
            )));
        }
        let projected = self.projection.forward(tape, store, patches)?;
        projected.add(&tape.param(store, self.positions))
    }
}
