//! Samples, batches and the source trait the training loop pulls from.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Inputs;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}` (expected train, val or test)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target<T> {
    /// Real-valued target, flattened to `(F_out,)` when batched.
    Values(Tensor<T>),
    Class(usize),
}

/// One training example: named inputs and named targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Example<T> {
    pub inputs: BTreeMap<String, Tensor<T>>,
    pub targets: BTreeMap<String, Target<T>>,
}

impl<T: Scalar> Example<T> {
    pub fn new() -> Self {
        Example {
            inputs: BTreeMap::new(),
            targets: BTreeMap::new(),
        }
    }

    pub fn with_input(mut self, name: impl Into<String>, x: Tensor<T>) -> Self {
        self.inputs.insert(name.into(), x);
        self
    }

    pub fn with_target(mut self, name: impl Into<String>, y: Target<T>) -> Self {
        self.targets.insert(name.into(), y);
        self
    }
}

impl<T: Scalar> Default for Example<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BatchTarget<T> {
    /// `(B, F)`
    Values(Tensor<T>),
    Labels(Vec<usize>),
}

#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub inputs: Inputs<T>,
    pub targets: BTreeMap<String, BatchTarget<T>>,
    pub len: usize,
}

/// Stacks examples that share the same input and target keys.
pub fn collate<T: Scalar>(examples: &[Example<T>]) -> Result<Batch<T>> {
    let Some(first) = examples.first() else {
        return Err(Error::Data("cannot collate an empty batch".into()));
    };
    for (i, ex) in examples.iter().enumerate() {
        if !ex.inputs.keys().eq(first.inputs.keys()) || !ex.targets.keys().eq(first.targets.keys()) {
            return Err(Error::Data(format!("example {i} does not share the keys of example 0")));
        }
    }
    let mut inputs = BTreeMap::new();
    for name in first.inputs.keys() {
        let parts: Vec<Tensor<T>> = examples.iter().map(|e| e.inputs[name].clone()).collect();
        inputs.insert(name.clone(), Tensor::stack(&parts)?);
    }
    let mut targets = BTreeMap::new();
    for name in first.targets.keys() {
        let target = match &first.targets[name] {
            Target::Values(_) => {
                let parts = examples
                    .iter()
                    .map(|e| match &e.targets[name] {
                        Target::Values(v) => Ok(v.clone()),
                        Target::Class(_) => Err(Error::Data(format!("target `{name}` mixes values and classes"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let stacked = Tensor::stack(&parts)?;
                let width = parts[0].numel();
                BatchTarget::Values(stacked.reshape([examples.len(), width])?)
            }
            Target::Class(_) => BatchTarget::Labels(
                examples
                    .iter()
                    .map(|e| match e.targets[name] {
                        Target::Class(c) => Ok(c),
                        Target::Values(_) => Err(Error::Data(format!("target `{name}` mixes values and classes"))),
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        targets.insert(name.clone(), target);
    }
    Ok(Batch {
        inputs,
        targets,
        len: examples.len(),
    })
}

/// Index ranges of consecutive batches; the final partial batch is kept
/// unless `drop_last`.
pub fn batch_ranges(n: usize, size: usize, drop_last: bool) -> Result<Vec<Range<usize>>> {
    if size == 0 {
        return Err(Error::Config("batch size must be ≥ 1".into()));
    }
    let mut out = Vec::with_capacity(n.div_ceil(size));
    let mut start = 0;
    while start < n {
        let end = (start + size).min(n);
        if end - start < size && drop_last {
            break;
        }
        out.push(start..end);
        start = end;
    }
    Ok(out)
}

/// Anything that can hand the training loop the examples of a split.
///
/// `epoch` and `training` let sources vary augmentation and pairing per
/// epoch; with `training == false` the result must not depend on `epoch`.
pub trait DataSource<T: Scalar> {
    fn examples(&self, split: Split, epoch: usize, training: bool) -> Result<Vec<Example<T>>>;
}

/// Fixed, pre-built splits.
#[derive(Clone, Debug, Default)]
pub struct InMemory<T> {
    pub train: Vec<Example<T>>,
    pub val: Vec<Example<T>>,
    pub test: Vec<Example<T>>,
}

impl<T: Scalar> InMemory<T> {
    pub fn new(train: Vec<Example<T>>, val: Vec<Example<T>>, test: Vec<Example<T>>) -> Self {
        InMemory { train, val, test }
    }

    pub fn split(&self, split: Split) -> &[Example<T>] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

impl<T: Scalar> DataSource<T> for InMemory<T> {
    fn examples(&self, split: Split, _epoch: usize, _training: bool) -> Result<Vec<Example<T>>> {
        Ok(self.split(split).to_vec())
    }
}
