//! The `train`, `eval`, `params` and `sweep` subcommands.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use fut_core::dataset::Split;
use fut_core::model::checkpoint::MAGIC;
use fut_core::model::{ModelSpec, ParamCount};
use fut_core::train::{evaluate_split, fit_with, run_sweep, EpochRecord, SplitMetrics, VariantResult};
use fut_core::{Checkpoint64, Error, Model64, Result};
use serde::Serialize;

use crate::config::{DataConfig, Overrides, RunConfig, SweepConfig};
use crate::data::{build_source, DataNotes};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const REPORT_FILE: &str = "report.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.json";
pub const RUN_FILE: &str = "run.json";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn json<V: Serialize>(value: &V) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Creates `dir`, refusing to reuse an existing one unless `force` is set.
fn prepare_output(dir: Option<&Path>, force: bool) -> Result<PathBuf> {
    let dir = dir.ok_or_else(|| Error::Config("no output directory: set `train.output_dir` or pass --out".into()))?;
    if dir.exists() && !force {
        return Err(Error::Config(format!(
            "output directory {} already exists; pass --force to overwrite",
            dir.display()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}

fn progress(record: &EpochRecord) {
    eprintln!(
        "epoch {:>3}  train {:.6}  val {:.6}  lr {:.3e}",
        record.epoch, record.train.loss, record.val.loss, record.lr
    );
}

#[derive(Serialize)]
struct RunRecord<'a> {
    spec: &'a ModelSpec,
    config: &'a RunConfig,
    data: &'a DataNotes,
    best_epoch: usize,
}

pub struct TrainOptions {
    pub overrides: Overrides,
    pub force: bool,
    /// Replace the data section with this many generated samples per modality.
    pub synthetic: Option<usize>,
    pub quiet: bool,
}

/// Trains one model and writes checkpoint, report, metrics and timing into
/// the output directory. Returns that directory.
pub fn train(config_path: &Path, options: &TrainOptions) -> Result<PathBuf> {
    let mut config = RunConfig::load(config_path)?;
    options.overrides.apply(&mut config.train, &mut config.optimizer);
    let (spec, fit_config) = config.validate()?;
    if let Some(samples) = options.synthetic {
        config.data = Some(DataConfig::synthetic(&spec, samples));
    }
    let data_config = config
        .data
        .clone()
        .ok_or_else(|| Error::Config(format!("{} has no [data] section", config_path.display())))?;
    let out = prepare_output(config.train.output_dir.as_deref(), options.force)?;
    let data = build_source(&data_config, &spec, config.train.seed)?;

    let mut model = Model64::build(&spec, config.train.seed)?;
    let quiet = options.quiet;
    let outcome = fit_with(&mut model, data.source.as_ref(), &fit_config, |r| {
        if !quiet {
            progress(r)
        }
    })?;
    let report = &outcome.report;

    Checkpoint64::from_model(&model, report.best_epoch, config.train.seed, Some(&outcome.optimizer))
        .save(out.join(CHECKPOINT_FILE))?;
    write(&out.join(REPORT_FILE), report.to_jsonl()?)?;
    write(&out.join(METRICS_FILE), report.metrics_csv())?;
    write(&out.join(TIMING_FILE), report.timing_json()?)?;
    let record = RunRecord {
        spec: &spec,
        config: &config,
        data: &data.notes,
        best_epoch: report.best_epoch,
    };
    write(&out.join(RUN_FILE), json(&record)?)?;
    if !quiet {
        println!(
            "{}: best epoch {} with val loss {:.6}, {} parameters; outputs in {}",
            spec.id,
            report.best_epoch,
            report.best_val_loss,
            report.params,
            out.display()
        );
    }
    Ok(out)
}

fn metrics_table(metrics: &SplitMetrics) -> String {
    let mut out = String::from("split,head,loss,metric_kind,metric\n");
    let _ = writeln!(out, "{},aggregate,{},,", metrics.split, metrics.loss);
    for (head, m) in &metrics.heads {
        let kind = serde_json::to_value(m.metric_kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let _ = writeln!(out, "{},{head},{},{kind},{}", metrics.split, m.loss, m.metric);
    }
    out
}

/// Scores a checkpoint on one split of the config's data; the parameters are
/// only read. Prints a small CSV and writes the metrics as JSON to `out`.
pub fn eval(
    checkpoint: &Path,
    config_path: &Path,
    split: Split,
    overrides: &Overrides,
    out: Option<&Path>,
) -> Result<SplitMetrics> {
    let ckpt = Checkpoint64::load(checkpoint)?;
    let model = ckpt.model()?;
    let mut config = RunConfig::load(config_path)?;
    options_apply(overrides, &mut config);
    let data_config = config
        .data
        .clone()
        .ok_or_else(|| Error::Config(format!("{} has no [data] section", config_path.display())))?;
    let data = build_source(&data_config, model.spec(), config.train.seed)?;
    let fit = config.train.fit_config(&config.optimizer)?;
    let weights = fit.multitask_loss(model.spec())?;
    let metrics = evaluate_split(&model, data.source.as_ref(), split, config.train.batch_size, &weights)?;
    print!("{}", metrics_table(&metrics));
    let default_out = checkpoint
        .parent()
        .unwrap_or(Path::new("."))
        .join(format!("eval-{split}.json"));
    write(out.unwrap_or(&default_out), json(&metrics)?)?;
    Ok(metrics)
}

fn options_apply(overrides: &Overrides, config: &mut RunConfig) {
    let mut o = overrides.clone();
    o.out = None;
    o.apply(&mut config.train, &mut config.optimizer);
}

fn is_checkpoint(path: &Path) -> Result<bool> {
    let mut head = [0u8; 8];
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(file.read_exact(&mut head).is_ok() && &head == MAGIC)
}

/// The spec stored in a checkpoint or described by a run config.
pub fn load_spec(path: &Path) -> Result<ModelSpec> {
    if is_checkpoint(path)? {
        Ok(Checkpoint64::load(path)?.spec)
    } else {
        RunConfig::load(path)?.model.spec()
    }
}

pub fn count(spec: &ModelSpec) -> Result<ParamCount> {
    Ok(Model64::build(spec, 0)?.count_parameters())
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub individual: usize,
    pub combined: usize,
    pub reduction: i64,
    pub reduction_percent: f64,
}

/// Single-task models are summed as "individual"; multi-task ones as
/// "combined".
pub fn compare(specs: &[ModelSpec]) -> Result<Comparison> {
    let mut individual = 0;
    let mut combined = 0;
    let (mut singles, mut multis) = (0, 0);
    for spec in specs {
        let total = count(spec)?.total;
        if spec.tasks.len() > 1 {
            combined += total;
            multis += 1;
        } else {
            individual += total;
            singles += 1;
        }
    }
    if singles == 0 || multis == 0 {
        return Err(Error::Config(
            "--compare needs at least one single-task and one multi-task model".into(),
        ));
    }
    let reduction = individual as i64 - combined as i64;
    Ok(Comparison {
        individual,
        combined,
        reduction,
        reduction_percent: 100.0 * reduction as f64 / individual as f64,
    })
}

pub fn params_report(paths: &[PathBuf], with_compare: bool) -> Result<String> {
    if paths.is_empty() {
        return Err(Error::Config("params needs at least one config or checkpoint".into()));
    }
    let specs: Vec<ModelSpec> = paths.iter().map(|p| load_spec(p)).collect::<Result<_>>()?;
    let mut out = String::new();
    for spec in &specs {
        let c = count(spec)?;
        let _ = writeln!(out, "{}: {} parameters", spec.id, c.total);
        for (component, n) in &c.per_component {
            let _ = writeln!(out, "  {component:<24} {n:>10}");
        }
    }
    if with_compare {
        let c = compare(&specs)?;
        let _ = writeln!(out, "individual (single-task sum): {}", c.individual);
        let _ = writeln!(out, "combined (multi-task):        {}", c.combined);
        let _ = writeln!(out, "reduction: {} ({:.1}%)", c.reduction, c.reduction_percent);
    }
    Ok(out)
}

fn slug(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_MD: &str = "summary.md";

/// Trains every grid variant on the same data and writes a ranked summary
/// plus each variant's report and metrics.
pub fn sweep(grid_path: &Path, overrides: &Overrides, force: bool, quiet: bool) -> Result<PathBuf> {
    let mut config = SweepConfig::load(grid_path)?;
    overrides.apply(&mut config.train, &mut config.optimizer);
    let fit = config.train.fit_config(&config.optimizer)?;
    let variants = config.grid.expand()?;
    let first = variants
        .iter()
        .find_map(|t| t.spec().ok())
        .ok_or_else(|| Error::Config("no grid variant forms a valid model".into()))?;
    let out = prepare_output(config.train.output_dir.as_deref(), force)?;
    let data = build_source(&config.data, &first, config.train.seed)?;
    let variant_dir = out.join("variants");
    fs::create_dir_all(&variant_dir).map_err(|e| Error::io(&variant_dir, e))?;

    let mut write_error = None;
    let report = run_sweep(&variants, data.source.as_ref(), &fit, |v: &VariantResult| {
        if !quiet {
            match &v.error {
                None => eprintln!("{}: val loss {:.6}", v.template.id, v.best_val_loss.unwrap_or(f64::NAN)),
                Some(e) => eprintln!("{}: failed: {e}", v.template.id),
            }
        }
        if let Some(r) = &v.report {
            let dir = variant_dir.join(slug(&v.template.id));
            let result = fs::create_dir_all(&dir)
                .map_err(|e| Error::io(&dir, e))
                .and_then(|_| r.to_jsonl())
                .and_then(|jsonl| write(&dir.join(REPORT_FILE), jsonl))
                .and_then(|_| write(&dir.join(METRICS_FILE), r.metrics_csv()));
            if let Err(e) = result {
                write_error.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    write(&out.join(SUMMARY_CSV), report.to_csv())?;
    let markdown = report.to_markdown();
    write(&out.join(SUMMARY_MD), &markdown)?;
    if !quiet {
        print!("{markdown}");
    }
    Ok(out)
}
