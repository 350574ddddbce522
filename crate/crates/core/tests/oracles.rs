//! Layer outputs against independent plain-loop recomputations.

mod common;

use common::random;
use fut_core::encoder::{EncoderConfig, EncoderLayer, EncoderStack};
use fut_core::heads::{
    ClassificationHead, ClassificationHeadSpec, FusionClassificationHead, FusionRegressionHead, FusionRegressionHeadSpec, RegressionHead,
    RegressionHeadSpec,
};
use fut_core::nn::{ForwardCtx, Linear};
use fut_core::{ParamStore, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Overwrites every parameter (biases and norm gains included) with random values.
fn randomize(store: &mut ParamStore<f64>, seed: u64) {
    let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.value().dims().to_vec())).collect();
    for (i, (id, dims)) in ids.into_iter().enumerate() {
        store.set_value(id, random(&dims, seed + i as u64)).unwrap();
    }
}

/// `rows × in` times the layer's `in × out` weight, plus bias.
fn dense(x: &[f64], rows: usize, layer: &Linear, store: &ParamStore<f64>) -> Vec<f64> {
    let w = store.value(layer.weight).data();
    let b = store.value(layer.bias).data();
    let (n_in, n_out) = (layer.fan_in, layer.fan_out);
    let mut y = vec![0.0; rows * n_out];
    for r in 0..rows {
        for o in 0..n_out {
            let mut acc = b[o];
            for i in 0..n_in {
                acc += x[r * n_in + i] * w[i * n_out + o];
            }
            y[r * n_out + o] = acc;
        }
    }
    y
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn softmax(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn layer_cfg(d_e: usize, heads: usize, d_ff: usize, layers: usize) -> EncoderConfig {
    EncoderConfig {
        d_e,
        heads,
        d_ff,
        p_drop: 0.0,
        layers,
        head_dim: None,
    }
}

/// Step-by-step multi-head attention for one sequence `(s, d)`.
fn attention_oracle(x: &[f64], s: usize, layer: &EncoderLayer, store: &ParamStore<f64>) -> (Vec<f64>, Vec<f64>) {
    let q = dense(x, s, &layer.query, store);
    let k = dense(x, s, &layer.key, store);
    let v = dense(x, s, &layer.value, store);
    let (h, dh) = (layer.heads, layer.head_dim);
    let inner = h * dh;
    let mut context = vec![0.0; s * inner];
    let mut weights = vec![0.0; h * s * s];
    for head in 0..h {
        for i in 0..s {
            let mut row = vec![0.0; s];
            for (j, r) in row.iter_mut().enumerate() {
                let mut dot = 0.0;
                for c in 0..dh {
                    dot += q[i * inner + head * dh + c] * k[j * inner + head * dh + c];
                }
                *r = dot / (dh as f64).sqrt();
            }
            softmax(&mut row);
            for j in 0..s {
                weights[(head * s + i) * s + j] = row[j];
                for c in 0..dh {
                    context[i * inner + head * dh + c] += row[j] * v[j * inner + head * dh + c];
                }
            }
        }
    }
    (dense(&context, s, &layer.output, store), weights)
}

#[test]
fn attention_matches_step_by_step_recomputation() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layer = EncoderLayer::new(&mut store, "enc", &layer_cfg(4, 2, 8, 1), &mut rng).unwrap();
    randomize(&mut store, 10);
    let x = random(&[1, 3, 4], 2);
    let tape = Tape::new();
    let (out, weights) = layer.self_attention(&tape, &store, &tape.constant(x.clone())).unwrap();
    let (expected, expected_w) = attention_oracle(x.data(), 3, &layer, &store);
    assert!(max_diff(out.value().data(), &expected) < 1e-12);
    assert!(max_diff(weights.value().data(), &expected_w) < 1e-12);
    for row in weights.value().data().chunks(3) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&w| w >= 0.0));
    }
}

#[test]
fn zero_value_projection_gives_zero_attention_output() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layer = EncoderLayer::new(&mut store, "enc", &layer_cfg(4, 2, 8, 1), &mut rng).unwrap();
    store.set_value(layer.value.weight, Tensor::zeros([4, 4])).unwrap();
    let tape = Tape::new();
    let (out, _) = layer.self_attention(&tape, &store, &tape.constant(random(&[2, 5, 4], 3))).unwrap();
    assert!(out.value().data().iter().all(|&v| v == 0.0));
}

#[test]
fn feed_forward_matches_two_matmuls_and_is_position_wise() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let layer = EncoderLayer::new(&mut store, "enc", &layer_cfg(4, 2, 6, 1), &mut rng).unwrap();
    randomize(&mut store, 20);
    let x = random(&[1, 5, 4], 5);
    let tape = Tape::new();
    let out = layer.feed_forward(&tape, &store, &tape.constant(x.clone())).unwrap().value();
    let hidden: Vec<f64> = dense(x.data(), 5, &layer.ff_up, &store).into_iter().map(|v| v.max(0.0)).collect();
    let expected = dense(&hidden, 5, &layer.ff_down, &store);
    assert!(max_diff(out.data(), &expected) < 1e-12);

    // reversing positions reverses outputs
    let rev: Vec<f64> = x.data().chunks(4).rev().flatten().copied().collect();
    let out_rev = layer
        .feed_forward(&tape, &store, &tape.constant(Tensor::new([1, 5, 4], rev).unwrap()))
        .unwrap()
        .value();
    let expected_rev: Vec<f64> = out.data().chunks(4).rev().flatten().copied().collect();
    assert_eq!(out_rev.data(), &expected_rev[..]);
}

#[test]
fn feed_forward_with_zero_weights_is_zero() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let layer = EncoderLayer::new(&mut store, "enc", &layer_cfg(4, 2, 6, 1), &mut rng).unwrap();
    store.set_value(layer.ff_up.weight, Tensor::zeros([4, 6])).unwrap();
    store.set_value(layer.ff_down.weight, Tensor::zeros([6, 4])).unwrap();
    let tape = Tape::new();
    let out = layer.feed_forward(&tape, &store, &tape.constant(random(&[2, 3, 4], 1))).unwrap();
    assert!(out.value().data().iter().all(|&v| v == 0.0));
}

fn layer_norm_rows(x: &[f64], d: usize) -> Vec<f64> {
    x.chunks(d)
        .flat_map(|row| {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            row.iter().map(move |v| (v - mean) / (var + 1e-6).sqrt()).collect::<Vec<_>>()
        })
        .collect()
}

#[test]
fn degenerate_layer_is_double_layer_norm() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let layer = EncoderLayer::new(&mut store, "enc", &layer_cfg(4, 2, 6, 1), &mut rng).unwrap();
    for l in [&layer.query, &layer.key, &layer.value, &layer.output, &layer.ff_up, &layer.ff_down] {
        let dims = store.value(l.weight).dims().to_vec();
        store.set_value(l.weight, Tensor::zeros(dims)).unwrap();
    }
    let x = random(&[2, 3, 4], 6);
    let tape = Tape::new();
    let y = layer
        .forward(&tape, &store, &tape.constant(x.clone()), &mut ForwardCtx::eval())
        .unwrap()
        .value();
    let expected = layer_norm_rows(&layer_norm_rows(x.data(), 4), 4);
    assert!(max_diff(y.data(), &expected) < 1e-12);
}

#[test]
fn two_layer_stack_is_composition_of_layers() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let stack = EncoderStack::new(&mut store, "enc", &layer_cfg(4, 2, 6, 2), &mut rng).unwrap();
    randomize(&mut store, 30);
    let x = random(&[2, 3, 4], 7);
    let tape = Tape::new();
    let xv = tape.constant(x);
    let mut ctx = ForwardCtx::eval();
    let whole = stack.forward(&tape, &store, &xv, &mut ctx).unwrap().value();
    let first = stack.layers[0].forward(&tape, &store, &xv, &mut ctx).unwrap();
    let manual = stack.layers[1].forward(&tape, &store, &first, &mut ctx).unwrap().value();
    assert_eq!(whole, manual);

    let mut one = ParamStore::new();
    let single = EncoderStack::new(&mut one, "enc", &layer_cfg(4, 2, 6, 1), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let tape = Tape::new();
    let xv = tape.constant(random(&[2, 3, 4], 7));
    let a = single.forward(&tape, &one, &xv, &mut ctx).unwrap().value();
    let b = single.layers[0].forward(&tape, &one, &xv, &mut ctx).unwrap().value();
    assert_eq!(a, b);
}

#[test]
fn fot9_encoder_preserves_shape() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let stack = EncoderStack::new(&mut store, "enc", &layer_cfg(24, 8, 512, 6), &mut rng).unwrap();
    let tape = Tape::new();
    let y = stack
        .forward(&tape, &store, &tape.constant(random(&[2, 24, 24], 1)), &mut ForwardCtx::eval())
        .unwrap();
    assert_eq!(y.shape().dims(), &[2, 24, 24]);
}

fn mlp_gelu(x: &[f64], rows: usize, layers: &[Linear], store: &ParamStore<f64>) -> Vec<f64> {
    layers
        .iter()
        .fold(x.to_vec(), |h, l| dense(&h, rows, l, store).into_iter().map(gelu).collect())
}

#[test]
fn regression_head_matches_recomputation() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = RegressionHeadSpec {
        f_out: 2,
        s_out: 1,
        hidden_dims: vec![5, 3],
        p_drop: 0.0,
    };
    let head = RegressionHead::new(&mut store, "task.r", (3, 4), &spec, &mut rng).unwrap();
    randomize(&mut store, 40);
    let x = random(&[2, 3, 4], 1);
    let tape = Tape::new();
    let y = head
        .forward(&tape, &store, &tape.constant(x.clone()), &mut ForwardCtx::eval())
        .unwrap()
        .value();
    let h = mlp_gelu(x.data(), 2, &head.hidden.layers, &store);
    let expected = dense(&h, 2, &head.out, &store);
    assert_eq!(y.dims(), &[2, 2]);
    assert!(max_diff(y.data(), &expected) < 1e-12);
}

#[test]
fn regression_head_with_zero_output_weights_emits_bias() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = RegressionHeadSpec {
        f_out: 2,
        s_out: 1,
        hidden_dims: vec![8],
        p_drop: 0.0,
    };
    let head = RegressionHead::new(&mut store, "task.r", (24, 24), &spec, &mut rng).unwrap();
    store.set_value(head.out.weight, Tensor::zeros([8, 2])).unwrap();
    store.set_value(head.out.bias, Tensor::vector(vec![0.5, -0.5])).unwrap();
    let tape = Tape::new();
    let y = head
        .forward(&tape, &store, &tape.constant(random(&[3, 24, 24], 1)), &mut ForwardCtx::eval())
        .unwrap()
        .value();
    assert_eq!(y.dims(), &[3, 2]);
    for row in y.data().chunks(2) {
        assert_eq!(row, [0.5, -0.5]);
    }
}

#[test]
fn classification_head_zero_weights_is_uniform_and_argmax_follows_logits() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = ClassificationHeadSpec {
        n_classes: 38,
        hidden_dims: vec![8],
        p_drop: 0.0,
    };
    let head = ClassificationHead::new(&mut store, "task.c", (4, 6), &spec, &mut rng).unwrap();
    let tape = Tape::new();
    let x = tape.constant(random(&[5, 4, 6], 1));
    let mut ctx = ForwardCtx::eval();
    let probs = head.forward(&tape, &store, &x, &mut ctx).unwrap().value();
    let logits = head.logits(&tape, &store, &x, &mut ctx).unwrap().value();
    assert_eq!(probs.dims(), &[5, 38]);
    for (p, l) in probs.data().chunks(38).zip(logits.data().chunks(38)) {
        assert_eq!(fut_core::train::loss::argmax(p), fut_core::train::loss::argmax(l));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    store.set_value(head.out.weight, Tensor::zeros([8, 38])).unwrap();
    let tape = Tape::new();
    let x = tape.constant(random(&[5, 4, 6], 1));
    let probs = head.forward(&tape, &store, &x, &mut ctx).unwrap().value();
    assert!(probs.data().iter().all(|&p| (p - 1.0 / 38.0).abs() < 1e-15));
}

#[test]
fn fusion_classification_single_pipeline_equals_classification_head() {
    let spec = ClassificationHeadSpec {
        n_classes: 3,
        hidden_dims: vec![],
        p_drop: 0.0,
    };
    let mut a = ParamStore::new();
    let plain = ClassificationHead::new(&mut a, "task.c", (3, 4), &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let mut b = ParamStore::new();
    let fused = FusionClassificationHead::new(&mut b, "task.c", &[(3, 4)], &spec, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
    b.set_value(fused.out.weight, a.value(plain.out.weight).clone()).unwrap();
    b.set_value(fused.out.bias, Tensor::vector(vec![0.1, 0.0, -0.1])).unwrap();
    a.set_value(plain.out.bias, Tensor::vector(vec![0.1, 0.0, -0.1])).unwrap();
    let tape = Tape::new();
    let x = tape.constant(random(&[2, 3, 4], 4));
    let mut ctx = ForwardCtx::eval();
    let pa = plain.forward(&tape, &a, &x, &mut ctx).unwrap().value();
    let pb = fused.forward(&tape, &b, &[x], &mut ctx).unwrap().value();
    assert_eq!(pa, pb);
}

#[test]
fn fusion_classification_width_and_uniform_output() {
    assert_eq!(FusionClassificationHead::fused_width(&[(144, 32), (24, 24)]), 5184);
    let spec = ClassificationHeadSpec {
        n_classes: 38,
        hidden_dims: vec![4],
        p_drop: 0.0,
    };
    let mut store = ParamStore::new();
    let head = FusionClassificationHead::new(&mut store, "task.c", &[(144, 32), (24, 24)], &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(head.hidden.layers[0].fan_in, 5184);
    store.set_value(head.out.weight, Tensor::zeros([4, 38])).unwrap();
    let tape = Tape::new();
    let encs = [tape.constant(random(&[2, 144, 32], 1)), tape.constant(random(&[2, 24, 24], 2))];
    let p = head.forward(&tape, &store, &encs, &mut ForwardCtx::eval()).unwrap().value();
    assert!(p.data().iter().all(|&v| (v - 1.0 / 38.0).abs() < 1e-15));
}

#[test]
fn fusion_regression_unifies_along_sequence_axis() {
    let spec = FusionRegressionHeadSpec {
        d_fusion: 8,
        f_out: 2,
        hidden_dims: vec![],
        p_drop: 0.0,
    };
    let mut store = ParamStore::new();
    let head = FusionRegressionHead::new(&mut store, "task.r", &[(144, 32), (24, 24)], &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let tape = Tape::new();
    let encs = [tape.constant(random(&[3, 144, 32], 1)), tape.constant(random(&[3, 24, 24], 2))];
    let unified = head.unify(&tape, &store, &encs).unwrap();
    assert_eq!(unified.shape().dims(), &[3, 168, 8]);
    let y = head.forward(&tape, &store, &encs, &mut ForwardCtx::eval()).unwrap();
    assert_eq!(y.shape().dims(), &[3, 2]);
}

#[test]
fn fusion_regression_identity_projection_reduces_to_flatten_dense() {
    let spec = FusionRegressionHeadSpec {
        d_fusion: 4,
        f_out: 2,
        hidden_dims: vec![],
        p_drop: 0.0,
    };
    let mut store = ParamStore::new();
    let head = FusionRegressionHead::new(&mut store, "task.r", &[(3, 4)], &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let mut eye = vec![0.0; 16];
    for i in 0..4 {
        eye[i * 5] = 1.0;
    }
    store.set_value(head.projections[0].weight, Tensor::new([4, 4], eye).unwrap()).unwrap();
    randomize_one(&mut store, head.out.bias, 5);
    let x = random(&[2, 3, 4], 3);
    let tape = Tape::new();
    let y = head
        .forward(&tape, &store, &[tape.constant(x.clone())], &mut ForwardCtx::eval())
        .unwrap()
        .value();
    let expected = dense(x.data(), 2, &head.out, &store);
    assert!(max_diff(y.data(), &expected) < 1e-12);
}

fn randomize_one(store: &mut ParamStore<f64>, id: fut_core::ParamId, seed: u64) {
    let dims = store.value(id).dims().to_vec();
    store.set_value(id, random(&dims, seed)).unwrap();
}

#[test]
fn fusion_regression_matches_recomputation() {
    let spec = FusionRegressionHeadSpec {
        d_fusion: 3,
        f_out: 2,
        hidden_dims: vec![5],
        p_drop: 0.0,
    };
    let mut store = ParamStore::new();
    let head = FusionRegressionHead::new(&mut store, "task.r", &[(4, 5), (2, 3)], &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    randomize(&mut store, 50);
    let (a, b) = (random(&[2, 4, 5], 1), random(&[2, 2, 3], 2));
    let tape = Tape::new();
    let y = head
        .forward(&tape, &store, &[tape.constant(a.clone()), tape.constant(b.clone())], &mut ForwardCtx::eval())
        .unwrap()
        .value();

    let pa = dense(a.data(), 8, &head.projections[0], &store);
    let pb = dense(b.data(), 4, &head.projections[1], &store);
    let mut flat = Vec::new();
    for n in 0..2 {
        flat.extend_from_slice(&pa[n * 12..(n + 1) * 12]);
        flat.extend_from_slice(&pb[n * 6..(n + 1) * 6]);
    }
    let h: Vec<f64> = dense(&flat, 2, &head.hidden.layers[0], &store).into_iter().map(|v| v.max(0.0)).collect();
    let expected = dense(&h, 2, &head.out, &store);
    assert!(max_diff(y.data(), &expected) < 1e-12);
}
