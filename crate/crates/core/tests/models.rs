mod common;

use std::collections::BTreeMap;

use common::{random, random_in, synthetic_batch};
use fut_core::model::{presets, Architecture, DataShapes, Hyperparameters, ModelTemplate};
use fut_core::nn::ForwardCtx;
use fut_core::train::{head_losses, Adam, AdamConfig, LrSchedule, MultiTaskLoss};
use fut_core::{Checkpoint, Error, Model, Tape, Tensor};

fn batch_inputs(b: usize) -> BTreeMap<String, Tensor<f64>> {
    [
        ("series".to_string(), random(&[b, 24, 4], 1)),
        ("image".to_string(), random_in(&[b, 72, 72, 3], 0.0, 1.0, 2)),
    ]
    .into()
}

#[test]
fn table_one_rows_build_and_produce_expected_shapes() {
    let inputs = batch_inputs(2);
    for template in presets::all() {
        let spec = template.spec().unwrap();
        let model = Model::<f64>::build(&spec, 0).unwrap();
        let out = model.predict(&inputs).unwrap();
        for (name, _, kind) in model.tasks() {
            let expected: &[usize] = match kind {
                fut_core::model::TaskKind::Regression => &[2, 2],
                fut_core::model::TaskKind::Classification => &[2, 38],
            };
            assert_eq!(out[name].dims(), expected, "{} / {name}", template.id);
        }
    }
}

#[test]
fn multitask_fut42_has_two_pipelines_and_two_heads() {
    let model = Model::<f64>::build(&presets::fut42().spec().unwrap(), 0).unwrap();
    assert_eq!(model.input_names().count(), 2);
    assert_eq!(model.tasks().count(), 2);
}

#[test]
fn missing_input_is_input_error() {
    let model = Model::<f64>::build(&presets::fut42().spec().unwrap(), 0).unwrap();
    let mut inputs = batch_inputs(1);
    inputs.remove("image");
    assert!(matches!(model.predict(&inputs), Err(Error::Input(_))));
}

#[test]
fn invalid_hyperparameters_name_the_constraint() {
    let mut t = presets::fot9();
    t.hyper.layers = 0;
    assert!(t.spec().unwrap_err().to_string().contains("E ≥ 1"));
    let mut t = presets::vit37();
    t.hyper.heads = 5;
    assert!(t.spec().unwrap_err().to_string().contains("divisible"));
    let mut t = presets::vit37();
    t.hyper.patch = Some((80, 80));
    assert!(matches!(t.spec(), Err(Error::Config(_))));
}

#[test]
fn degenerate_micro_count_matches_hand_count() {
    let template = ModelTemplate {
        id: "tiny".into(),
        architecture: Architecture::Fot,
        hyper: Hyperparameters {
            p_drop: 0.0,
            k: Some(1),
            d_e: None,
            d_ff: 2,
            layers: 1,
            heads: 1,
            patch: None,
            d_fusion: None,
            head_dim: None,
            hidden_dims: vec![],
        },
        shapes: DataShapes {
            window: 3,
            features: 1,
            outputs: 1,
            ..DataShapes::default()
        },
    };
    let model = Model::<f64>::build(&template.spec().unwrap(), 0).unwrap();
    let count = model.count_parameters();
    // mt2v: omega + phi, each (1, 1)
    let embedding = 2;
    // d_e = 2: four (2x2 + 2) projections, (2x2 + 2) up and down, two norms of 2 + 2
    let encoder = 4 * 6 + 6 + 6 + 2 * 4;
    // flatten 3 x 2 = 6 straight into one output
    let head = 6 + 1;
    assert_eq!(count.total, embedding + encoder + head);
    assert_eq!(count.per_component["input.series"], embedding);
    assert_eq!(count.per_component["pipeline.series"], encoder);
    assert_eq!(count.per_component["task.regression"], head);
}

#[test]
fn component_counts_sum_to_total_and_ignore_forward_passes() {
    let spec = presets::micro(Architecture::MultiTask).spec().unwrap();
    let model = Model::<f64>::build(&spec, 3).unwrap();
    let before = model.count_parameters();
    assert_eq!(before.per_component.values().sum::<usize>(), before.total);
    let _ = model.predict(&synthetic_batch(&spec, 2, 1).inputs).unwrap();
    assert_eq!(model.count_parameters(), before);
}

#[test]
fn multitask_is_cheaper_than_two_single_task_models() {
    for base in [presets::fut42(), presets::micro(Architecture::MultiTask)] {
        let count = |arch| {
            let spec = base.with_architecture(arch, "x").spec().unwrap();
            Model::<f64>::build(&spec, 0).unwrap().count_parameters().total
        };
        let multi = count(Architecture::MultiTask);
        let separate = count(Architecture::FusionRegression) + count(Architecture::FusionClassification);
        assert!(multi < separate, "{multi} vs {separate}");
    }
}

#[test]
fn build_is_deterministic_in_seed() {
    let spec = presets::micro(Architecture::MultiTask).spec().unwrap();
    let a = Model::<f64>::build(&spec, 5).unwrap();
    let b = Model::<f64>::build(&spec, 5).unwrap();
    let c = Model::<f64>::build(&spec, 6).unwrap();
    assert_eq!(a.params().fingerprint(), b.params().fingerprint());
    assert_ne!(a.params().fingerprint(), c.params().fingerprint());
}

fn zero_component(model: &mut Model<f64>, prefix: &str) {
    let ids: Vec<_> = model
        .params()
        .iter()
        .filter(|(_, p)| p.name().starts_with(prefix))
        .map(|(id, p)| (id, p.value().dims().to_vec()))
        .collect();
    assert!(!ids.is_empty());
    for (id, dims) in ids {
        model.params_mut().set_value(id, Tensor::zeros(dims)).unwrap();
    }
}

#[test]
fn zeroing_one_head_leaves_the_other_unchanged() {
    let spec = presets::micro(Architecture::MultiTask).spec().unwrap();
    let mut model = Model::<f64>::build(&spec, 2).unwrap();
    let batch = synthetic_batch(&spec, 3, 4);
    let before = model.predict(&batch.inputs).unwrap();
    zero_component(&mut model, "task.classification.");
    let after = model.predict(&batch.inputs).unwrap();
    assert_eq!(before["regression"], after["regression"]);
    assert_ne!(before["classification"], after["classification"]);
}

#[test]
fn zeroed_image_projection_isolates_series_pipeline() {
    let mut t = presets::micro(Architecture::FusionRegression);
    t.id = "iso".into();
    let spec = t.spec().unwrap();
    let mut model = Model::<f64>::build(&spec, 2).unwrap();
    zero_component(&mut model, "task.regression.projection0.");
    let mut batch = synthetic_batch(&spec, 2, 4);
    let a = model.predict(&batch.inputs).unwrap();
    batch.inputs.insert("image".into(), random_in(&[2, 8, 8, 3], 0.0, 1.0, 77));
    let b = model.predict(&batch.inputs).unwrap();
    assert_eq!(a["regression"], b["regression"]);
}

fn pipeline_grads(model: &Model<f64>, batch: &fut_core::Batch<f64>, weights: &[(&str, f64)]) -> BTreeMap<String, Tensor<f64>> {
    let tape = Tape::new();
    let losses = head_losses(model, &tape, batch, &mut ForwardCtx::eval()).unwrap();
    let agg = MultiTaskLoss::new(weights.iter().map(|(h, w)| (h.to_string(), *w)))
        .unwrap()
        .aggregate(&losses)
        .unwrap();
    let grads = tape.backward(agg).unwrap();
    model
        .params()
        .iter()
        .map(|(id, p)| {
            let g = grads.param(id).cloned().unwrap_or_else(|| Tensor::zeros(p.value().shape().clone()));
            (p.name().to_string(), g)
        })
        .collect()
}

#[test]
fn shared_gradients_are_additive_across_heads() {
    let spec = presets::micro(Architecture::MultiTask).spec().unwrap();
    let model = Model::<f64>::build(&spec, 7).unwrap();
    let batch = synthetic_batch(&spec, 3, 8);
    // weights {1, 1} average the heads, so the joint gradient is half the sum
    let joint = pipeline_grads(&model, &batch, &[("regression", 1.0), ("classification", 1.0)]);
    let reg = pipeline_grads(&model, &batch, &[("regression", 1.0), ("classification", 0.0)]);
    let cls = pipeline_grads(&model, &batch, &[("regression", 0.0), ("classification", 1.0)]);
    let mut checked = 0;
    for (name, g) in &joint {
        if !(name.starts_with("pipeline.") || name.starts_with("input.")) {
            continue;
        }
        for ((j, r), c) in g.data().iter().zip(reg[name].data()).zip(cls[name].data()) {
            assert!((2.0 * j - (r + c)).abs() < 1e-10, "{name}");
        }
        checked += 1;
    }
    assert!(checked > 0);
    for (name, g) in &reg {
        if name.starts_with("task.classification.") {
            assert!(g.data().iter().all(|&v| v == 0.0), "{name}");
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let spec = presets::micro(Architecture::MultiTask).spec().unwrap();
    let model = Model::<f64>::build(&spec, 9).unwrap();
    let batch = synthetic_batch(&spec, 2, 3);
    let mut opt = Adam::new(AdamConfig::new(LrSchedule::Constant { lr: 1e-3 }));
    let mut store = model.params().clone();
    let tape = Tape::new();
    let losses = head_losses(&model, &tape, &batch, &mut ForwardCtx::eval()).unwrap();
    let agg = MultiTaskLoss::uniform(["regression", "classification"]).aggregate(&losses).unwrap();
    store.accumulate(&tape.backward(agg).unwrap()).unwrap();
    opt.step(&mut store, 0).unwrap();

    let path = dir.path().join("model.ckpt");
    Checkpoint::from_model(&model, 4, 9, Some(&opt)).save(&path).unwrap();
    let loaded = Checkpoint::<f64>::load(&path).unwrap();
    assert_eq!(loaded.epoch, 4);
    assert_eq!(loaded.seed, 9);
    assert_eq!(loaded.spec, spec);
    let restored = loaded.optimizer.as_ref().unwrap();
    assert_eq!(restored.state, opt.state);
    assert_eq!(restored.config, opt.config);

    let rebuilt = loaded.model().unwrap();
    assert_eq!(rebuilt.count_parameters(), model.count_parameters());
    assert_eq!(rebuilt.params().fingerprint(), model.params().fingerprint());
    assert_eq!(rebuilt.predict(&batch.inputs).unwrap(), model.predict(&batch.inputs).unwrap());
}

#[test]
fn fot9_checkpoint_keeps_parameter_count() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::<f64>::build(&presets::fot9().spec().unwrap(), 1).unwrap();
    let path = dir.path().join("fot9.ckpt");
    model.save(&path).unwrap();
    assert_eq!(Model::<f64>::load(&path).unwrap().count_parameters(), model.count_parameters());
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::<f64>::build(&presets::micro(Architecture::Fot).spec().unwrap(), 1).unwrap();
    let path = dir.path().join("m.ckpt");
    model.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(Checkpoint::<f64>::load(&path), Err(Error::Corrupt { .. })));

    let mut flipped = bytes.clone();
    flipped[bytes.len() / 2] ^= 1;
    std::fs::write(&path, &flipped).unwrap();
    assert!(matches!(Checkpoint::<f64>::load(&path), Err(Error::Corrupt { .. })));

    let mut versioned = bytes.clone();
    versioned[8] = 99;
    std::fs::write(&path, &versioned).unwrap();
    assert!(matches!(Checkpoint::<f64>::load(&path), Err(Error::Version { found: 99, .. })));

    assert!(matches!(Checkpoint::<f64>::load(dir.path().join("missing.ckpt")), Err(Error::Io { .. })));

    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(Checkpoint::<f32>::load(&path), Err(Error::Config(_))));
}

#[test]
fn single_precision_models_run() {
    let spec = presets::micro(Architecture::MultiTask).spec().unwrap();
    let model = Model::<f32>::build(&spec, 1).unwrap();
    let inputs = synthetic_batch(&spec, 2, 1).inputs.into_iter().map(|(k, v)| (k, v.cast::<f32>())).collect();
    let out = model.predict(&inputs).unwrap();
    assert_eq!(out["classification"].dims(), &[2, 4]);
    assert!(out.values().all(|t| t.all_finite()));
}
