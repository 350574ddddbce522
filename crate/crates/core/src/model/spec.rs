//! Declarative model descriptions.
//!
//! A [`ModelSpec`] lists input heads (each paired with its own encoder
//! pipeline) and task heads. [`ModelTemplate`] produces specs for the five
//! architectures from one row of hyperparameters.

use serde::{Deserialize, Serialize};

use crate::embeddings::{mt2v_width, PatchConfig};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::heads::{default_hidden_dims, ClassificationHeadSpec, FusionRegressionHeadSpec, RegressionHeadSpec};

pub const SERIES_INPUT: &str = "series";
pub const IMAGE_INPUT: &str = "image";
pub const HORIZON_TARGET: &str = "horizon";
pub const LABEL_TARGET: &str = "label";
pub const REGRESSION_TASK: &str = "regression";
pub const CLASSIFICATION_TASK: &str = "classification";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    pub inputs: Vec<InputSpec>,
    pub tasks: Vec<TaskSpec>,
}

/// One input head and the encoder pipeline attached to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub name: String,
    pub head: InputHeadSpec,
    pub pipeline: PipelineSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputHeadSpec {
    /// `(S_in, F_in)` windows embedded with MT2V factor `k`.
    TimeSeries { window: usize, features: usize, k: usize },
    /// `(H, W, C)` images split into patches and projected to `d_e`.
    Image {
        height: usize,
        width: usize,
        channels: usize,
        patch: PatchConfig,
        d_e: usize,
    },
}

impl InputHeadSpec {
    /// `(S, D_e)` of the embedded sequence.
    pub fn sequence_shape(&self) -> Result<(usize, usize)> {
        match *self {
            InputHeadSpec::TimeSeries { window, features, k } => Ok((window, mt2v_width(features, k))),
            InputHeadSpec::Image {
                height,
                width,
                patch,
                d_e,
                ..
            } => {
                let (r, c) = patch.grid_for(height, width).map_err(|e| Error::Config(e.to_string()))?;
                Ok((r * c, d_e))
            }
        }
    }

    /// Per-sample input extents.
    pub fn sample_dims(&self) -> Vec<usize> {
        match *self {
            InputHeadSpec::TimeSeries { window, features, .. } => vec![window, features],
            InputHeadSpec::Image {
                height, width, channels, ..
            } => vec![height, width, channels],
        }
    }
}

/// Encoder settings for one pipeline; `D_e` comes from the input head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub heads: usize,
    pub d_ff: usize,
    pub p_drop: f64,
    pub layers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_dim: Option<usize>,
}

impl PipelineSpec {
    pub fn encoder_config(&self, d_e: usize) -> EncoderConfig {
        EncoderConfig {
            d_e,
            heads: self.heads,
            d_ff: self.d_ff,
            p_drop: self.p_drop,
            layers: self.layers,
            head_dim: self.head_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    /// Key of the target this head is trained against.
    pub target: String,
    pub head: TaskHeadSpec,
    /// Pipeline read by single-pipeline heads; defaults to the only one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskHeadSpec {
    Regression(RegressionHeadSpec),
    Classification(ClassificationHeadSpec),
    FusionRegression(FusionRegressionHeadSpec),
    FusionClassification(ClassificationHeadSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

impl TaskHeadSpec {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskHeadSpec::Regression(_) | TaskHeadSpec::FusionRegression(_) => TaskKind::Regression,
            TaskHeadSpec::Classification(_) | TaskHeadSpec::FusionClassification(_) => TaskKind::Classification,
        }
    }
}

impl ModelSpec {
    /// Structural checks that do not need parameters.
    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Config("model needs at least one input head".into()));
        }
        if self.tasks.is_empty() {
            return Err(Error::Config("model needs at least one task head (m ≥ 1)".into()));
        }
        for (i, a) in self.inputs.iter().enumerate() {
            if self.inputs[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Config(format!("duplicate input head `{}`", a.name)));
            }
            let (_, d_e) = a.head.sequence_shape()?;
            a.pipeline
                .encoder_config(d_e)
                .validate()
                .map_err(|e| Error::Config(format!("pipeline `{}`: {}", a.name, strip(e))))?;
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if self.tasks[..i].iter().any(|u| u.name == t.name) {
                return Err(Error::Config(format!("duplicate task head `{}`", t.name)));
            }
            if let Some(src) = &t.source {
                if !self.inputs.iter().any(|inp| &inp.name == src) {
                    return Err(Error::Config(format!("task `{}` reads unknown pipeline `{src}`", t.name)));
                }
            }
        }
        Ok(())
    }

    pub fn input(&self, name: &str) -> Option<&InputSpec> {
        self.inputs.iter().find(|i| i.name == name)
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(msg) => msg,
        other => other.to_string(),
    }
}

/// The model families built from one hyperparameter row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Time-series in, regression out.
    Fot,
    /// Images in, classification out.
    Vit,
    /// Images and time-series in, fusion regression out.
    FusionRegression,
    /// Images and time-series in, fusion classification out.
    FusionClassification,
    /// Images and time-series in, both fusion heads out.
    MultiTask,
}

impl Architecture {
    pub fn uses_series(self) -> bool {
        !matches!(self, Architecture::Vit)
    }

    pub fn uses_image(self) -> bool {
        !matches!(self, Architecture::Fot)
    }

    pub fn tasks(self) -> &'static [TaskKind] {
        match self {
            Architecture::Fot | Architecture::FusionRegression => &[TaskKind::Regression],
            Architecture::Vit | Architecture::FusionClassification => &[TaskKind::Classification],
            Architecture::MultiTask => &[TaskKind::Regression, TaskKind::Classification],
        }
    }
}

/// One row of the hyperparameter table. Unused entries are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub p_drop: f64,
    /// MT2V embedding factor.
    #[serde(default)]
    pub k: Option<usize>,
    /// Patch-embedding width of the image pipeline.
    #[serde(default)]
    pub d_e: Option<usize>,
    pub d_ff: usize,
    /// Encoder layers per pipeline (`E`).
    pub layers: usize,
    /// Attention heads (`h`).
    pub heads: usize,
    #[serde(default)]
    pub patch: Option<(usize, usize)>,
    #[serde(default)]
    pub d_fusion: Option<usize>,
    /// Explicit per-head width, for pipelines whose `D_e` is not divisible by `h`.
    #[serde(default)]
    pub head_dim: Option<usize>,
    /// Fully-connected sub-layer widths in every task head.
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
}

/// Data extents the template needs; defaults match the forecasting and
/// plant-classification experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataShapes {
    #[serde(default = "DataShapes::default_window")]
    pub window: usize,
    #[serde(default = "DataShapes::default_features")]
    pub features: usize,
    #[serde(default = "DataShapes::default_outputs")]
    pub outputs: usize,
    #[serde(default = "DataShapes::default_image")]
    pub image: (usize, usize, usize),
    #[serde(default = "DataShapes::default_classes")]
    pub classes: usize,
}

impl DataShapes {
    fn default_window() -> usize {
        24
    }
    fn default_features() -> usize {
        4
    }
    fn default_outputs() -> usize {
        2
    }
    fn default_image() -> (usize, usize, usize) {
        (72, 72, 3)
    }
    fn default_classes() -> usize {
        38
    }
}

impl Default for DataShapes {
    fn default() -> Self {
        DataShapes {
            window: Self::default_window(),
            features: Self::default_features(),
            outputs: Self::default_outputs(),
            image: Self::default_image(),
            classes: Self::default_classes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTemplate {
    pub id: String,
    pub architecture: Architecture,
    pub hyper: Hyperparameters,
    #[serde(default)]
    pub shapes: DataShapes,
}

fn require<V: Copy>(v: Option<V>, what: &str, arch: Architecture) -> Result<V> {
    v.ok_or_else(|| Error::Config(format!("{arch:?} requires hyperparameter `{what}`")))
}

impl ModelTemplate {
    pub fn spec(&self) -> Result<ModelSpec> {
        let arch = self.architecture;
        let hp = &self.hyper;
        let shapes = &self.shapes;
        let pipeline = PipelineSpec {
            heads: hp.heads,
            d_ff: hp.d_ff,
            p_drop: hp.p_drop,
            layers: hp.layers,
            head_dim: hp.head_dim,
        };
        let mut inputs = Vec::new();
        if arch.uses_image() {
            let (ph, pw) = require(hp.patch, "patch", arch)?;
            let (height, width, channels) = shapes.image;
            inputs.push(InputSpec {
                name: IMAGE_INPUT.into(),
                head: InputHeadSpec::Image {
                    height,
                    width,
                    channels,
                    patch: PatchConfig::new(ph, pw),
                    d_e: require(hp.d_e, "d_e", arch)?,
                },
                pipeline: pipeline.clone(),
            });
        }
        if arch.uses_series() {
            inputs.push(InputSpec {
                name: SERIES_INPUT.into(),
                head: InputHeadSpec::TimeSeries {
                    window: shapes.window,
                    features: shapes.features,
                    k: require(hp.k, "k", arch)?,
                },
                pipeline,
            });
        }
        let regression = || TaskSpec {
            name: REGRESSION_TASK.into(),
            target: HORIZON_TARGET.into(),
            head: TaskHeadSpec::Regression(RegressionHeadSpec {
                f_out: shapes.outputs,
                s_out: 1,
                hidden_dims: hp.hidden_dims.clone(),
                p_drop: hp.p_drop,
            }),
            source: None,
        };
        let classes = ClassificationHeadSpec {
            n_classes: shapes.classes,
            hidden_dims: hp.hidden_dims.clone(),
            p_drop: hp.p_drop,
        };
        let classification = |head| TaskSpec {
            name: CLASSIFICATION_TASK.into(),
            target: LABEL_TARGET.into(),
            head,
            source: None,
        };
        let fusion_regression = || -> Result<TaskSpec> {
            Ok(TaskSpec {
                name: REGRESSION_TASK.into(),
                target: HORIZON_TARGET.into(),
                head: TaskHeadSpec::FusionRegression(FusionRegressionHeadSpec {
                    d_fusion: require(hp.d_fusion, "d_fusion", arch)?,
                    f_out: shapes.outputs,
                    hidden_dims: hp.hidden_dims.clone(),
                    p_drop: hp.p_drop,
                }),
                source: None,
            })
        };
        let tasks = match arch {
            Architecture::Fot => vec![regression()],
            Architecture::Vit => vec![classification(TaskHeadSpec::Classification(classes))],
            Architecture::FusionRegression => vec![fusion_regression()?],
            Architecture::FusionClassification => vec![classification(TaskHeadSpec::FusionClassification(classes))],
            Architecture::MultiTask => vec![
                fusion_regression()?,
                classification(TaskHeadSpec::FusionClassification(classes)),
            ],
        };
        let spec = ModelSpec {
            id: self.id.clone(),
            inputs,
            tasks,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The same template with the architecture replaced.
    pub fn with_architecture(&self, architecture: Architecture, id: impl Into<String>) -> Self {
        ModelTemplate {
            id: id.into(),
            architecture,
            hyper: self.hyper.clone(),
            shapes: self.shapes.clone(),
        }
    }
}

/// Best-model rows of the published hyperparameter table.
pub mod presets {
    use super::*;

    fn template(id: &str, architecture: Architecture, hyper: Hyperparameters) -> ModelTemplate {
        ModelTemplate {
            id: id.into(),
            architecture,
            hyper,
            shapes: DataShapes::default(),
        }
    }

    pub fn fot9() -> ModelTemplate {
        template(
            "FoT 9",
            Architecture::Fot,
            Hyperparameters {
                p_drop: 0.1,
                k: Some(5),
                d_e: None,
                d_ff: 512,
                layers: 6,
                heads: 8,
                patch: None,
                d_fusion: None,
                head_dim: None,
                hidden_dims: default_hidden_dims(),
            },
        )
    }

    pub fn vit37() -> ModelTemplate {
        template(
            "ViT 37",
            Architecture::Vit,
            Hyperparameters {
                p_drop: 0.3,
                k: None,
                d_e: Some(32),
                d_ff: 256,
                layers: 6,
                heads: 8,
                patch: Some((6, 6)),
                d_fusion: None,
                head_dim: None,
                hidden_dims: default_hidden_dims(),
            },
        )
    }

    pub fn fut20() -> ModelTemplate {
        template(
            "Regression FuT 20",
            Architecture::FusionRegression,
            Hyperparameters {
                p_drop: 0.3,
                k: Some(5),
                d_e: Some(32),
                d_ff: 256,
                layers: 3,
                heads: 8,
                patch: Some((6, 6)),
                d_fusion: Some(8),
                head_dim: None,
                hidden_dims: default_hidden_dims(),
            },
        )
    }

    /// `k = 10` gives a 44-wide time-series pipeline, which 8 heads do not
    /// divide; the per-head width is pinned to that of the image pipeline
    /// (32 / 8 = 4).
    pub fn fut43() -> ModelTemplate {
        template(
            "Classifier FuT 43",
            Architecture::FusionClassification,
            Hyperparameters {
                p_drop: 0.3,
                k: Some(10),
                d_e: Some(32),
                d_ff: 256,
                layers: 6,
                heads: 8,
                patch: Some((6, 6)),
                d_fusion: None,
                head_dim: Some(4),
                hidden_dims: default_hidden_dims(),
            },
        )
    }

    pub fn fut42() -> ModelTemplate {
        template(
            "Multi-Task FuT 42",
            Architecture::MultiTask,
            Hyperparameters {
                p_drop: 0.3,
                k: Some(5),
                d_e: Some(32),
                d_ff: 256,
                layers: 6,
                heads: 8,
                patch: Some((6, 6)),
                d_fusion: Some(16),
                head_dim: None,
                hidden_dims: default_hidden_dims(),
            },
        )
    }

    pub fn all() -> Vec<ModelTemplate> {
        vec![fot9(), vit37(), fut20(), fut43(), fut42()]
    }

    /// Desk-scale variant of any architecture: windows `(6, 2)`, images
    /// `(8, 8, 3)` cut into four `(4, 4)` patches, 4 classes, widths ≤ 8,
    /// one encoder layer, no dropout.
    pub fn micro(architecture: Architecture) -> ModelTemplate {
        let id = match architecture {
            Architecture::Fot => "micro FoT",
            Architecture::Vit => "micro ViT",
            Architecture::FusionRegression => "micro regression FuT",
            Architecture::FusionClassification => "micro classifier FuT",
            Architecture::MultiTask => "micro multi-task FuT",
        };
        ModelTemplate {
            id: id.into(),
            architecture,
            hyper: Hyperparameters {
                p_drop: 0.0,
                k: Some(1),
                d_e: Some(8),
                d_ff: 16,
                layers: 1,
                heads: 2,
                patch: Some((4, 4)),
                d_fusion: Some(4),
                head_dim: None,
                hidden_dims: vec![16],
            },
            shapes: DataShapes {
                window: 6,
                features: 2,
                outputs: 2,
                image: (8, 8, 3),
                classes: 4,
            },
        }
    }
}
