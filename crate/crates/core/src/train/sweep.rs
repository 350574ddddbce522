//! Grid sweeps over hyperparameter rows, ranked by best validation loss.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::fit::{fit, FitConfig, TrainReport};
use crate::dataset::DataSource;
use crate::error::{Error, Result};
use crate::heads::default_hidden_dims;
use crate::model::{Architecture, DataShapes, Hyperparameters, Model, ModelTemplate};
use crate::scalar::Scalar;

/// Candidate values per hyperparameter. Axes left out are not used by the
/// architecture; an axis given as an empty list is an error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperGrid {
    /// Variant ids are `"{prefix} {n}"`, numbered from 1 in expansion order.
    pub prefix: String,
    pub architecture: Architecture,
    #[serde(default)]
    pub shapes: DataShapes,
    pub p_drop: Vec<f64>,
    #[serde(default)]
    pub k: Option<Vec<usize>>,
    #[serde(default)]
    pub d_e: Option<Vec<usize>>,
    pub d_ff: Vec<usize>,
    pub layers: Vec<usize>,
    pub heads: Vec<usize>,
    #[serde(default)]
    pub patch: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub d_fusion: Option<Vec<usize>>,
    #[serde(default)]
    pub head_dim: Option<usize>,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
}

fn axis<V: Clone>(name: &str, values: &[V]) -> Result<Vec<V>> {
    if values.is_empty() {
        return Err(Error::Config(format!("sweep axis `{name}` is empty")));
    }
    Ok(values.to_vec())
}

fn optional_axis<V: Clone>(name: &str, values: &Option<Vec<V>>) -> Result<Vec<Option<V>>> {
    match values {
        None => Ok(vec![None]),
        Some(v) => Ok(axis(name, v)?.into_iter().map(Some).collect()),
    }
}

impl HyperGrid {
    /// Cartesian product in field order, last axis varying fastest.
    pub fn expand(&self) -> Result<Vec<ModelTemplate>> {
        let p_drop = axis("p_drop", &self.p_drop)?;
        let k = optional_axis("k", &self.k)?;
        let d_e = optional_axis("d_e", &self.d_e)?;
        let d_ff = axis("d_ff", &self.d_ff)?;
        let layers = axis("layers", &self.layers)?;
        let heads = axis("heads", &self.heads)?;
        let patch = optional_axis("patch", &self.patch)?;
        let d_fusion = optional_axis("d_fusion", &self.d_fusion)?;

        let mut out = Vec::new();
        for &p in &p_drop {
            for &k in &k {
                for &d_e in &d_e {
                    for &d_ff in &d_ff {
                        for &layers in &layers {
                            for &heads in &heads {
                                for &patch in &patch {
                                    for &d_fusion in &d_fusion {
                                        out.push(ModelTemplate {
                                            id: format!("{} {}", self.prefix, out.len() + 1),
                                            architecture: self.architecture,
                                            hyper: Hyperparameters {
                                                p_drop: p,
                                                k,
                                                d_e,
                                                d_ff,
                                                layers,
                                                heads,
                                                patch,
                                                d_fusion,
                                                head_dim: self.head_dim,
                                                hidden_dims: self.hidden_dims.clone(),
                                            },
                                            shapes: self.shapes.clone(),
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub template: ModelTemplate,
    pub params: Option<usize>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub report: Option<TrainReport>,
}

impl VariantResult {
    fn failed(template: ModelTemplate, params: Option<usize>, err: Error) -> Self {
        VariantResult {
            template,
            params,
            best_epoch: None,
            best_val_loss: None,
            error: Some(err.to_string()),
            report: None,
        }
    }
}

/// Lower val loss first, then fewer parameters, then id; failures last.
pub fn rank_order(a: &VariantResult, b: &VariantResult) -> Ordering {
    let key = |v: &VariantResult| v.best_val_loss.filter(|l| l.is_finite());
    match (key(a), key(b)) {
        (Some(x), Some(y)) => x
            .total_cmp(&y)
            .then(a.params.cmp(&b.params))
            .then_with(|| a.template.id.cmp(&b.template.id)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.template.id.cmp(&b.template.id),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Ranked, best first.
    pub variants: Vec<VariantResult>,
}

fn opt<V: ToString>(v: Option<V>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepReport {
    const COLUMNS: [&'static str; 14] = [
        "rank",
        "model_id",
        "p_drop",
        "k",
        "d_e",
        "d_ff",
        "E",
        "h",
        "patch",
        "d_fusion",
        "best_val_loss",
        "best_epoch",
        "params",
        "status",
    ];

    fn rows(&self) -> Vec<[String; 14]> {
        self.variants
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let hp = &v.template.hyper;
                [
                    (i + 1).to_string(),
                    v.template.id.clone(),
                    hp.p_drop.to_string(),
                    opt(hp.k),
                    opt(hp.d_e),
                    hp.d_ff.to_string(),
                    hp.layers.to_string(),
                    hp.heads.to_string(),
                    opt(hp.patch.map(|(h, w)| format!("({h},{w})"))),
                    opt(hp.d_fusion),
                    opt(v.best_val_loss),
                    opt(v.best_epoch),
                    opt(v.params),
                    v.error.clone().map_or_else(|| "ok".into(), |e| format!("failed: {e}")),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let quote = |s: &str| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        let mut out = Self::COLUMNS.join(",");
        out.push('\n');
        for row in self.rows() {
            out.push_str(&row.iter().map(|c| quote(c)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("| {} |\n", Self::COLUMNS.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(Self::COLUMNS.len()));
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|c| c.replace('|', "\\|")).collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        out
    }
}

/// Trains every variant with the same data and fit settings. Per-variant
/// failures are recorded, never propagated.
pub fn run_sweep<T: Scalar>(
    variants: &[ModelTemplate],
    source: &dyn DataSource<T>,
    config: &FitConfig,
    mut on_variant: impl FnMut(&VariantResult),
) -> Result<SweepReport> {
    if variants.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut results = Vec::with_capacity(variants.len());
    for template in variants {
        let result = match template.spec().and_then(|s| Model::<T>::build(&s, config.seed)) {
            Err(e) => VariantResult::failed(template.clone(), None, e),
            Ok(mut model) => {
                let params = model.count_parameters().total;
                match fit(&mut model, source, config) {
                    Err(e) => VariantResult::failed(template.clone(), Some(params), e),
                    Ok(outcome) => VariantResult {
                        template: template.clone(),
                        params: Some(params),
                        best_epoch: Some(outcome.report.best_epoch),
                        best_val_loss: Some(outcome.report.best_val_loss),
                        error: None,
                        report: Some(outcome.report),
                    },
                }
            }
        };
        on_variant(&result);
        results.push(result);
    }
    results.sort_by(rank_order);
    Ok(SweepReport { variants: results })
}
