//! Single-file checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 8 bytes   magic "FUTCKPT\0"
//! u32       format version (currently 1)
//! u64       header length N
//! N bytes   UTF-8 JSON header
//! ...       parameter payloads, in header order, dtype-wide values
//! ...       Adam first moments, then second moments (only if header.optimizer)
//! 32 bytes  SHA-256 of every preceding byte
//! ```
//!
//! The header holds `dtype`, `epoch`, `seed`, the full model `spec`, the
//! `tensors` list (`name`, `shape`) and `optimizer` (`step`, `config`) or null.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Model, ModelSpec};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::{Adam, AdamConfig, AdamState};

pub const MAGIC: &[u8; 8] = b"FUTCKPT\0";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerEntry {
    step: u64,
    config: AdamConfig,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dtype: String,
    epoch: usize,
    seed: u64,
    spec: ModelSpec,
    tensors: Vec<TensorEntry>,
    optimizer: Option<OptimizerEntry>,
}

/// Everything needed to rebuild a model and resume its optimizer.
#[derive(Clone, Debug)]
pub struct Checkpoint<T: Scalar> {
    pub spec: ModelSpec,
    pub params: ParamStore<T>,
    pub epoch: usize,
    pub seed: u64,
    pub optimizer: Option<Adam<T>>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(corrupt(self.path, format!("truncated while reading {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn values<T: Scalar>(&mut self, n: usize, what: &str) -> Result<Vec<T>> {
        let len = n
            .checked_mul(T::BYTES)
            .ok_or_else(|| corrupt(self.path, format!("{what} is implausibly large")))?;
        Ok(self.take(len, what)?.chunks_exact(T::BYTES).map(T::read_le).collect())
    }
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::Corrupt {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_model(model: &Model<T>, epoch: usize, seed: u64, optimizer: Option<&Adam<T>>) -> Self {
        Checkpoint {
            spec: model.spec().clone(),
            params: model.params().clone(),
            epoch,
            seed,
            optimizer: optimizer.cloned(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            dtype: T::DTYPE.into(),
            epoch: self.epoch,
            seed: self.seed,
            spec: self.spec.clone(),
            tensors: self
                .params
                .iter()
                .map(|(_, p)| TensorEntry {
                    name: p.name().into(),
                    shape: p.value().dims().to_vec(),
                })
                .collect(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerEntry {
                step: o.state.step,
                config: o.config.clone(),
            }),
        };
        let text = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(text.len() + 64 + self.params.count() * T::BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(&text);
        for (_, p) in self.params.iter() {
            p.value().data().iter().for_each(|&x| x.write_le(&mut out));
        }
        if let Some(opt) = &self.optimizer {
            let n = self.params.len();
            let moments = |m: &Vec<Vec<T>>| if m.is_empty() { vec![Vec::new(); n] } else { m.clone() };
            for m in moments(&opt.state.first).iter().chain(moments(&opt.state.second).iter()) {
                m.iter().for_each(|&x| x.write_le(&mut out));
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    /// `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 12 + DIGEST_LEN {
            return Err(corrupt(path, "file too short to be a checkpoint"));
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt(path, "bad magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt(path, "checksum mismatch (truncated or modified)"));
        }

        let mut r = Reader { bytes: body, pos: 12, path };
        let header_len = u64::from_le_bytes(r.take(8, "header length")?.try_into().expect("8 bytes"));
        let header_len = usize::try_from(header_len).map_err(|_| corrupt(path, "header length overflows"))?;
        let header: Header =
            serde_json::from_slice(r.take(header_len, "header")?).map_err(|e| corrupt(path, format!("unreadable header: {e}")))?;
        if header.dtype != T::DTYPE {
            return Err(Error::Config(format!(
                "checkpoint {} stores {} values; expected {}",
                path.display(),
                header.dtype,
                T::DTYPE
            )));
        }
        let mut params = ParamStore::new();
        for entry in &header.tensors {
            let n = entry.shape.iter().product();
            let data = r.values::<T>(n, &entry.name)?;
            params.add(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?)?;
        }
        let optimizer = match header.optimizer {
            None => None,
            Some(o) => {
                let mut first = Vec::with_capacity(header.tensors.len());
                let mut second = Vec::with_capacity(header.tensors.len());
                for moments in [&mut first, &mut second] {
                    for entry in &header.tensors {
                        let n = if o.step == 0 { 0 } else { entry.shape.iter().product() };
                        moments.push(r.values::<T>(n, "optimizer moments")?);
                    }
                }
                if o.step == 0 {
                    first.clear();
                    second.clear();
                }
                Some(Adam::with_state(o.config, AdamState { step: o.step, first, second }))
            }
        };
        if r.pos != body.len() {
            return Err(corrupt(path, format!("{} unexpected trailing bytes", body.len() - r.pos)));
        }
        Ok(Checkpoint {
            spec: header.spec,
            params,
            epoch: header.epoch,
            seed: header.seed,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path: PathBuf = path.as_ref().into();
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_bytes(&bytes, &path)
    }

    /// Rebuilds the architecture from the stored spec and installs the weights.
    pub fn model(&self) -> Result<Model<T>> {
        let mut model = Model::build(&self.spec, self.seed)?;
        model.load_params(&self.params)?;
        Ok(model)
    }
}

impl<T: Scalar> Model<T> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Checkpoint::from_model(self, 0, 0, None).save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::load(path)?.model()
    }
}
