//! The training loop, split evaluation and the per-run report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::loss::{accuracy, mae_value, mse, mse_value, scce, scce_value};
use super::multitask::MultiTaskLoss;
use super::optim::{Adam, AdamConfig};
use crate::autograd::{Tape, Var};
use crate::dataset::{batch_ranges, collate, Batch, BatchTarget, DataSource, Example, Split};
use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec, TaskKind};
use crate::nn::ForwardCtx;
use crate::scalar::Scalar;

/// SplitMix64 finaliser over `base` and two stream indices.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SHUFFLE_STREAM: u64 = u64::MAX;

fn default_epochs() -> usize {
    30
}

fn default_batch_size() -> usize {
    256
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
    /// Per-head weights; every head weighted 1 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_weights: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub drop_last: bool,
    #[serde(default = "yes")]
    pub shuffle: bool,
    #[serde(default = "yes")]
    pub evaluate_test: bool,
}

impl FitConfig {
    pub fn new(epochs: usize, batch_size: usize, seed: u64, optimizer: AdamConfig) -> Self {
        FitConfig {
            epochs,
            batch_size,
            seed,
            optimizer,
            loss_weights: None,
            drop_last: false,
            shuffle: true,
            evaluate_test: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs ≥ 1 violated".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size ≥ 1 violated".into()));
        }
        self.optimizer.schedule.validate()
    }

    /// The weights this config implies for `spec`; keys must match its task heads.
    pub fn multitask_loss(&self, spec: &ModelSpec) -> Result<MultiTaskLoss> {
        let loss = match &self.loss_weights {
            None => MultiTaskLoss::uniform(spec.tasks.iter().map(|t| t.name.as_str())),
            Some(w) => MultiTaskLoss::new(w.clone())?,
        };
        for name in loss.weights.keys() {
            if !spec.tasks.iter().any(|t| &t.name == name) {
                return Err(Error::Config(format!("loss weight given for unknown head `{name}`")));
            }
        }
        if let Some(t) = spec.tasks.iter().find(|t| !loss.weights.contains_key(&t.name)) {
            return Err(Error::Config(format!("no loss weight for head `{}`", t.name)));
        }
        Ok(loss)
    }
}

/// SHA-256 (hex) of the spec and fit configuration.
pub fn config_hash(spec: &ModelSpec, config: &FitConfig) -> Result<String> {
    let text = serde_json::to_string(&(spec, config))?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Mae,
    Accuracy,
}

impl MetricKind {
    pub fn for_task(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Regression => MetricKind::Mae,
            TaskKind::Classification => MetricKind::Accuracy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadMetrics {
    /// MSE for regression heads, SCCE for classification heads.
    pub loss: f64,
    pub metric_kind: MetricKind,
    pub metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub split: Split,
    pub samples: usize,
    /// Weighted mean of the head losses.
    pub loss: f64,
    pub heads: BTreeMap<String, HeadMetrics>,
}

fn head_target<'b, T: Scalar>(batch: &'b Batch<T>, task: &str, target: &str, kind: TaskKind) -> Result<&'b BatchTarget<T>> {
    let y = batch
        .targets
        .get(target)
        .ok_or_else(|| Error::Input(format!("head `{task}` needs target `{target}`, which the data does not provide")))?;
    match (kind, y) {
        (TaskKind::Regression, BatchTarget::Values(_)) | (TaskKind::Classification, BatchTarget::Labels(_)) => Ok(y),
        _ => Err(Error::Input(format!(
            "head `{task}` is a {kind:?} head but target `{target}` has the wrong type"
        ))),
    }
}

/// Eval-mode metrics over a list of examples. Never touches model state.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    examples: &[Example<T>],
    split: Split,
    batch_size: usize,
    weights: &MultiTaskLoss,
) -> Result<SplitMetrics> {
    let mut sums: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let tasks: Vec<(String, String, TaskKind)> = model.tasks().map(|(n, t, k)| (n.into(), t.into(), k)).collect();
    for range in batch_ranges(examples.len(), batch_size, false)? {
        let batch = collate(&examples[range])?;
        let outputs = model.predict(&batch.inputs)?;
        let n = batch.len as f64;
        for (name, target, kind) in &tasks {
            let out = &outputs[name];
            let (loss, metric) = match head_target(&batch, name, target, *kind)? {
                BatchTarget::Values(y) => (mse_value(out, y)?, mae_value(out, y)?),
                BatchTarget::Labels(l) => (scce_value(out, l)?, accuracy(out, l)?),
            };
            let entry = sums.entry(name.clone()).or_insert((0.0, 0.0));
            entry.0 += loss * n;
            entry.1 += metric * n;
        }
    }
    let total = examples.len().max(1) as f64;
    let heads: BTreeMap<String, HeadMetrics> = tasks
        .iter()
        .map(|(name, _, kind)| {
            let (l, m) = sums.get(name).copied().unwrap_or((0.0, 0.0));
            (
                name.clone(),
                HeadMetrics {
                    loss: l / total,
                    metric_kind: MetricKind::for_task(*kind),
                    metric: m / total,
                },
            )
        })
        .collect();
    let losses = heads.iter().map(|(k, h)| (k.clone(), h.loss)).collect();
    Ok(SplitMetrics {
        split,
        samples: examples.len(),
        loss: weights.aggregate_values(&losses)?,
        heads,
    })
}

/// Evaluates one split as delivered for evaluation (no augmentation, fixed pairing).
pub fn evaluate_split<T: Scalar>(
    model: &Model<T>,
    source: &dyn DataSource<T>,
    split: Split,
    batch_size: usize,
    weights: &MultiTaskLoss,
) -> Result<SplitMetrics> {
    let examples = source.examples(split, 0, false)?;
    evaluate(model, &examples, split, batch_size, weights)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Learning rate of the last step in the epoch.
    pub lr: f64,
    /// Mean aggregate loss of the training batches, dropout active.
    pub train_batch_loss: f64,
    pub train: SplitMetrics,
    pub val: SplitMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model_id: String,
    pub seed: u64,
    pub config_hash: String,
    pub params: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub test: Option<SplitMetrics>,
    /// Seconds per epoch. Kept out of the serialized report so that it stays
    /// reproducible byte for byte.
    #[serde(skip)]
    pub wall_clock: Vec<f64>,
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

impl TrainReport {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    /// One `"record": "epoch"` line per epoch, then a `"record": "summary"` line.
    pub fn to_jsonl(&self) -> Result<String> {
        #[derive(Serialize)]
        struct EpochLine<'a> {
            record: &'static str,
            #[serde(flatten)]
            inner: &'a EpochRecord,
        }
        #[derive(Serialize)]
        struct Summary<'a> {
            record: &'static str,
            model_id: &'a str,
            seed: u64,
            config_hash: &'a str,
            params: usize,
            epochs: usize,
            best_epoch: usize,
            best_val_loss: f64,
            test: &'a Option<SplitMetrics>,
        }
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(&EpochLine { record: "epoch", inner: e })?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&Summary {
            record: "summary",
            model_id: &self.model_id,
            seed: self.seed,
            config_hash: &self.config_hash,
            params: self.params,
            epochs: self.epochs.len(),
            best_epoch: self.best_epoch,
            best_val_loss: self.best_val_loss,
            test: &self.test,
        })?);
        out.push('\n');
        Ok(out)
    }

    /// Long-format table `epoch,split,head,loss,metric`. The `aggregate` head
    /// carries the weighted loss and an empty metric; test rows use the best epoch.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("epoch,split,head,loss,metric\n");
        let mut rows = |epoch: usize, m: &SplitMetrics| {
            let _ = writeln!(out, "{epoch},{},aggregate,{},", m.split, fmt_num(m.loss));
            for (head, h) in &m.heads {
                let _ = writeln!(out, "{epoch},{},{head},{},{}", m.split, fmt_num(h.loss), fmt_num(h.metric));
            }
        };
        for e in &self.epochs {
            rows(e.epoch, &e.train);
            rows(e.epoch, &e.val);
        }
        if let Some(t) = &self.test {
            rows(self.best_epoch, t);
        }
        out
    }

    pub fn timing_json(&self) -> Result<String> {
        let total: f64 = self.wall_clock.iter().sum();
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "epoch_seconds": self.wall_clock,
            "total_seconds": total,
        }))?)
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome<T: Scalar> {
    pub report: TrainReport,
    /// Optimizer as it was at the end of the best epoch.
    pub optimizer: Adam<T>,
}

/// Trains with defaults for observation; see [`fit_with`].
pub fn fit<T: Scalar>(model: &mut Model<T>, source: &dyn DataSource<T>, config: &FitConfig) -> Result<FitOutcome<T>> {
    fit_with(model, source, config, |_| {})
}

fn task_loss<'t, T: Scalar>(tape: &'t Tape<T>, out: &Var<'t, T>, target: &BatchTarget<T>) -> Result<Var<'t, T>> {
    match target {
        BatchTarget::Values(y) => mse(out, &tape.constant(y.clone())),
        BatchTarget::Labels(l) => scce(out, l),
    }
}

/// Per-head training losses for one batch (MSE or SCCE), from a single
/// shared forward pass.
pub fn head_losses<'t, T: Scalar>(
    model: &Model<T>,
    tape: &'t Tape<T>,
    batch: &Batch<T>,
    ctx: &mut ForwardCtx,
) -> Result<BTreeMap<String, Var<'t, T>>> {
    let outputs = model.forward(tape, &batch.inputs, ctx)?;
    let mut losses = BTreeMap::new();
    for (name, target, kind) in model.tasks() {
        let y = head_target(batch, name, target, kind)?;
        losses.insert(name.to_string(), task_loss(tape, &outputs[name], y)?);
    }
    Ok(losses)
}

/// Runs `config.epochs` epochs of shuffled mini-batch Adam, evaluating train
/// and val after each. On return the model holds the parameters of the epoch
/// with the lowest val loss (earliest on ties), and the test split has been
/// scored with them.
pub fn fit_with<T: Scalar>(
    model: &mut Model<T>,
    source: &dyn DataSource<T>,
    config: &FitConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome<T>> {
    config.validate()?;
    let weights = config.multitask_loss(model.spec())?;
    let train_eval = source.examples(Split::Train, 0, false)?;
    let val = source.examples(Split::Val, 0, false)?;
    if val.is_empty() {
        return Err(Error::Data("validation split is empty; best-epoch selection needs it".into()));
    }

    let mut optimizer = Adam::new(config.optimizer.clone());
    let mut best: Option<(usize, f64, crate::params::ParamStore<T>, Adam<T>)> = None;
    let mut records = Vec::with_capacity(config.epochs);
    let mut wall_clock = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut examples = source.examples(Split::Train, epoch, true)?;
        if examples.is_empty() {
            return Err(Error::Data("training split is empty".into()));
        }
        if config.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64, SHUFFLE_STREAM));
            examples.shuffle(&mut rng);
        }
        let mut lr = 0.0;
        let mut loss_sum = 0.0;
        let ranges = batch_ranges(examples.len(), config.batch_size, config.drop_last)?;
        for (b, range) in ranges.iter().enumerate() {
            let batch = collate(&examples[range.clone()])?;
            let tape = Tape::new();
            let mut ctx = ForwardCtx::train(derive_seed(config.seed, epoch as u64, b as u64));
            let losses = head_losses(model, &tape, &batch, &mut ctx)?;
            for (name, l) in &losses {
                let v = l.value().item().map_or(f64::NAN, |x| x.to_f64_lossy());
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        epoch: epoch + 1,
                        batch: b,
                        head: name.clone(),
                        value: v,
                    });
                }
            }
            let total = weights.aggregate(&losses)?;
            loss_sum += total.value().item().map_or(f64::NAN, |x| x.to_f64_lossy()) * batch.len as f64;
            let grads = tape.backward(total)?;
            let store = model.params_mut();
            store.zero_grad();
            store.accumulate(&grads)?;
            lr = optimizer.step(store, epoch)?;
        }
        let seen: usize = ranges.iter().map(|r| r.len()).sum();

        let train = evaluate(model, &train_eval, Split::Train, config.batch_size, &weights)?;
        let val_metrics = evaluate(model, &val, Split::Val, config.batch_size, &weights)?;
        if !val_metrics.loss.is_finite() {
            return Err(Error::NonFinite {
                epoch: epoch + 1,
                batch: 0,
                head: "val".into(),
                value: val_metrics.loss,
            });
        }
        if best.as_ref().is_none_or(|(_, l, _, _)| val_metrics.loss < *l) {
            best = Some((epoch + 1, val_metrics.loss, model.params().clone(), optimizer.clone()));
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            lr,
            train_batch_loss: loss_sum / seen.max(1) as f64,
            train,
            val: val_metrics,
        };
        on_epoch(&record);
        records.push(record);
        wall_clock.push(started.elapsed().as_secs_f64());
    }

    let (best_epoch, best_val_loss, params, best_optimizer) = best.expect("at least one epoch");
    *model.params_mut() = params;
    let test = if config.evaluate_test {
        let examples = source.examples(Split::Test, 0, false)?;
        if examples.is_empty() {
            None
        } else {
            Some(evaluate(model, &examples, Split::Test, config.batch_size, &weights)?)
        }
    } else {
        None
    };
    Ok(FitOutcome {
        report: TrainReport {
            model_id: model.spec().id.clone(),
            seed: config.seed,
            config_hash: config_hash(model.spec(), config)?,
            params: model.count_parameters().total,
            epochs: records,
            best_epoch,
            best_val_loss,
            test,
            wall_clock,
        },
        optimizer: best_optimizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_per_stream() {
        let a = derive_seed(7, 0, 0);
        assert_ne!(a, derive_seed(7, 0, 1));
        assert_ne!(a, derive_seed(7, 1, 0));
        assert_ne!(a, derive_seed(8, 0, 0));
        assert_eq!(a, derive_seed(7, 0, 0));
    }
}
