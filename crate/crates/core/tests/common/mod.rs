#![allow(dead_code)]

use std::collections::BTreeMap;

use fut_core::autograd::check::{max_relative_error, numeric_gradients};
use fut_core::dataset::{Batch, BatchTarget};
use fut_core::model::{InputHeadSpec, ModelSpec, TaskHeadSpec};
use fut_core::nn::ForwardCtx;
use fut_core::train::{head_losses, MultiTaskLoss};
use fut_core::{Model, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(dims: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    Tensor::new(dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap()
}

pub fn random_in(dims: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    Tensor::new(dims, (0..n).map(|_| rng.gen_range(lo..hi)).collect::<Vec<_>>()).unwrap()
}

/// Random inputs and targets matching every head of `spec`.
pub fn synthetic_batch(spec: &ModelSpec, b: usize, seed: u64) -> Batch<f64> {
    let mut inputs = BTreeMap::new();
    for (i, input) in spec.inputs.iter().enumerate() {
        let mut dims = vec![b];
        dims.extend(input.head.sample_dims());
        let x = match input.head {
            InputHeadSpec::Image { .. } => random_in(&dims, 0.0, 1.0, seed + i as u64),
            InputHeadSpec::TimeSeries { .. } => random(&dims, seed + i as u64),
        };
        inputs.insert(input.name.clone(), x);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let mut targets = BTreeMap::new();
    for task in &spec.tasks {
        let y = match &task.head {
            TaskHeadSpec::Regression(h) => BatchTarget::Values(random(&[b, h.f_out], seed + 200)),
            TaskHeadSpec::FusionRegression(h) => BatchTarget::Values(random(&[b, h.f_out], seed + 200)),
            TaskHeadSpec::Classification(h) | TaskHeadSpec::FusionClassification(h) => {
                BatchTarget::Labels((0..b).map(|_| rng.gen_range(0..h.n_classes)).collect())
            }
        };
        targets.insert(task.target.clone(), y);
    }
    Batch { inputs, targets, len: b }
}

/// Uniform-weight aggregate loss of `model` on `batch`, in eval mode.
pub fn aggregate_loss<'t>(model: &Model<f64>, tape: &'t Tape<f64>, batch: &Batch<f64>) -> Var<'t, f64> {
    let losses = head_losses(model, tape, batch, &mut ForwardCtx::eval()).unwrap();
    let weights = MultiTaskLoss::uniform(losses.keys().map(String::as_str));
    weights.aggregate(&losses).unwrap()
}

/// Worst relative error between tape and finite-difference gradients over
/// every parameter of `model`.
pub fn model_gradcheck(model: &Model<f64>, batch: &Batch<f64>) -> f64 {
    let tape = Tape::new();
    let loss = aggregate_loss(model, &tape, batch);
    let grads = tape.backward(loss).unwrap();
    let ids: Vec<_> = model.params().iter().map(|(id, _)| id).collect();
    let values: Vec<Tensor<f64>> = model.params().iter().map(|(_, p)| p.value().clone()).collect();
    let analytic: Vec<Tensor<f64>> = ids
        .iter()
        .zip(&values)
        .map(|(id, v)| grads.param(*id).cloned().unwrap_or_else(|| Tensor::zeros(v.shape().clone())))
        .collect();
    let mut probe = model.clone();
    let numeric = numeric_gradients(&values, 1e-5, |vals| {
        for (id, v) in ids.iter().zip(vals) {
            probe.params_mut().set_value(*id, v.clone()).unwrap();
        }
        let tape = Tape::new();
        aggregate_loss(&probe, &tape, batch).value().item().unwrap()
    });
    max_relative_error(&analytic, &numeric, 1e-6)
}
