//! Complete architectures assembled from a [`ModelSpec`].

pub mod checkpoint;
mod spec;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use checkpoint::Checkpoint;
pub use spec::*;

use crate::autograd::{Tape, Var};
use crate::embeddings::{ImageEmbedding, Mt2vEmbedding};
use crate::encoder::EncoderStack;
use crate::error::{Error, Result};
use crate::heads::{ClassificationHead, FusionClassificationHead, FusionRegressionHead, RegressionHead, SeqShape};
use crate::nn::ForwardCtx;
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Named per-batch inputs, e.g. `series: (B, 24, 4)` and `image: (B, 72, 72, 3)`.
pub type Inputs<T> = BTreeMap<String, Tensor<T>>;

#[derive(Clone, Debug)]
enum Embedding {
    Series(Mt2vEmbedding),
    Image(ImageEmbedding),
}

#[derive(Clone, Debug)]
struct Branch {
    name: String,
    embedding: Embedding,
    encoder: EncoderStack,
}

#[derive(Clone, Debug)]
enum Head {
    Regression { head: RegressionHead, source: usize },
    Classification { head: ClassificationHead, source: usize },
    FusionRegression(FusionRegressionHead),
    FusionClassification(FusionClassificationHead),
}

#[derive(Clone, Debug)]
struct TaskBranch {
    name: String,
    target: String,
    kind: TaskKind,
    head: Head,
}

/// Exact learned-scalar counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub total: usize,
    /// Keys are `input.<name>`, `pipeline.<name>` and `task.<name>`.
    pub per_component: BTreeMap<String, usize>,
}

/// An initialised network: parameters plus the layer structure that reads them.
#[derive(Clone, Debug)]
pub struct Model<T: Scalar> {
    spec: ModelSpec,
    params: ParamStore<T>,
    branches: Vec<Branch>,
    tasks: Vec<TaskBranch>,
}

impl<T: Scalar> Model<T> {
    /// Builds and initialises every parameter; deterministic in `seed`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut branches = Vec::with_capacity(spec.inputs.len());
        let mut shapes: Vec<SeqShape> = Vec::with_capacity(spec.inputs.len());
        for input in &spec.inputs {
            let prefix = format!("input.{}", input.name);
            let embedding = match input.head {
                InputHeadSpec::TimeSeries { features, k, .. } => {
                    Embedding::Series(Mt2vEmbedding::new(&mut params, &format!("{prefix}.mt2v"), features, k, &mut rng)?)
                }
                InputHeadSpec::Image {
                    height,
                    width,
                    channels,
                    patch,
                    d_e,
                } => Embedding::Image(ImageEmbedding::new(
                    &mut params,
                    &prefix,
                    (height, width, channels),
                    patch,
                    d_e,
                    &mut rng,
                )?),
            };
            let shape = input.head.sequence_shape()?;
            let cfg = input.pipeline.encoder_config(shape.1);
            let encoder = EncoderStack::new(&mut params, &format!("pipeline.{}", input.name), &cfg, &mut rng)?;
            shapes.push(shape);
            branches.push(Branch {
                name: input.name.clone(),
                embedding,
                encoder,
            });
        }

        let mut tasks = Vec::with_capacity(spec.tasks.len());
        for task in &spec.tasks {
            let prefix = format!("task.{}", task.name);
            let source = || -> Result<usize> {
                match &task.source {
                    Some(name) => Ok(spec.inputs.iter().position(|i| &i.name == name).expect("validated source")),
                    None if spec.inputs.len() == 1 => Ok(0),
                    None => Err(Error::Config(format!(
                        "task `{}` reads a single pipeline but the model has {}; set `source`",
                        task.name,
                        spec.inputs.len()
                    ))),
                }
            };
            let head = match &task.head {
                TaskHeadSpec::Regression(h) => {
                    let source = source()?;
                    Head::Regression {
                        head: RegressionHead::new(&mut params, &prefix, shapes[source], h, &mut rng)?,
                        source,
                    }
                }
                TaskHeadSpec::Classification(h) => {
                    let source = source()?;
                    Head::Classification {
                        head: ClassificationHead::new(&mut params, &prefix, shapes[source], h, &mut rng)?,
                        source,
                    }
                }
                TaskHeadSpec::FusionRegression(h) => {
                    Head::FusionRegression(FusionRegressionHead::new(&mut params, &prefix, &shapes, h, &mut rng)?)
                }
                TaskHeadSpec::FusionClassification(h) => {
                    Head::FusionClassification(FusionClassificationHead::new(&mut params, &prefix, &shapes, h, &mut rng)?)
                }
            };
            tasks.push(TaskBranch {
                name: task.name.clone(),
                target: task.target.clone(),
                kind: task.head.kind(),
                head,
            });
        }
        Ok(Model {
            spec: spec.clone(),
            params,
            branches,
            tasks,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// `(task name, target key, kind)` for every head, in spec order.
    pub fn tasks(&self) -> impl Iterator<Item = (&str, &str, TaskKind)> {
        self.tasks.iter().map(|t| (t.name.as_str(), t.target.as_str(), t.kind))
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.branches.iter().map(|b| b.name.as_str())
    }

    /// Embeds and encodes every input once; returns pipeline outputs in input order.
    pub fn forward_pipelines<'t>(&self, tape: &'t Tape<T>, inputs: &Inputs<T>, ctx: &mut ForwardCtx) -> Result<Vec<Var<'t, T>>> {
        let mut batch = None;
        self.branches
            .iter()
            .map(|branch| {
                let x = inputs
                    .get(&branch.name)
                    .ok_or_else(|| Error::Input(format!("missing input `{}` required by the model", branch.name)))?;
                let b = x.dims().first().copied().unwrap_or(0);
                if *batch.get_or_insert(b) != b {
                    return Err(Error::Input("inputs disagree on batch size".into()));
                }
                let embedded = match &branch.embedding {
                    Embedding::Series(emb) => {
                        let expected = self.spec.input(&branch.name).map(|s| s.head.sample_dims()).unwrap_or_default();
                        if x.rank() != 3 || x.dims()[1..] != expected[..] {
                            return Err(Error::Input(format!(
                                "input `{}` expects (B, {}, {}), got {}",
                                branch.name,
                                expected[0],
                                expected[1],
                                x.shape()
                            )));
                        }
                        emb.forward(tape, &self.params, &tape.constant(x.clone()))?
                    }
                    Embedding::Image(emb) => emb.forward(tape, &self.params, x)?,
                };
                branch.encoder.forward(tape, &self.params, &embedded, ctx)
            })
            .collect()
    }

    /// One output per task head from a single shared pass through the pipelines.
    pub fn forward<'t>(&self, tape: &'t Tape<T>, inputs: &Inputs<T>, ctx: &mut ForwardCtx) -> Result<BTreeMap<String, Var<'t, T>>> {
        let pipelines = self.forward_pipelines(tape, inputs, ctx)?;
        let mut out = BTreeMap::new();
        for task in &self.tasks {
            let y = match &task.head {
                Head::Regression { head, source } => head.forward(tape, &self.params, &pipelines[*source], ctx)?,
                Head::Classification { head, source } => head.forward(tape, &self.params, &pipelines[*source], ctx)?,
                Head::FusionRegression(head) => head.forward(tape, &self.params, &pipelines, ctx)?,
                Head::FusionClassification(head) => head.forward(tape, &self.params, &pipelines, ctx)?,
            };
            out.insert(task.name.clone(), y);
        }
        Ok(out)
    }

    /// Evaluation-mode forward returning plain tensors.
    pub fn predict(&self, inputs: &Inputs<T>) -> Result<BTreeMap<String, Tensor<T>>> {
        let tape = Tape::new();
        let outputs = self.forward(&tape, inputs, &mut ForwardCtx::eval())?;
        Ok(outputs.into_iter().map(|(k, v)| (k, v.value())).collect())
    }

    pub fn count_parameters(&self) -> ParamCount {
        ParamCount {
            total: self.params.count(),
            per_component: self.params.count_by_component(),
        }
    }

    /// Copies every parameter value from `source` by name.
    pub fn load_params(&mut self, source: &ParamStore<T>) -> Result<()> {
        if source.len() != self.params.len() {
            return Err(Error::Config(format!(
                "parameter count mismatch: model has {} tensors, source has {}",
                self.params.len(),
                source.len()
            )));
        }
        for (_, p) in source.iter() {
            let id = self
                .params
                .id_of(p.name())
                .ok_or_else(|| Error::Config(format!("unknown parameter `{}`", p.name())))?;
            self.params.set_value(id, p.value().clone())?;
        }
        Ok(())
    }
}
