//! Losses (differentiable, on the tape) and evaluation metrics (plain values).

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Lower clamp applied before taking the log of a probability.
pub const LOG_FLOOR: f64 = 1e-12;

/// Mean squared error over every element.
pub fn mse<'t, T: Scalar>(pred: &Var<'t, T>, target: &Var<'t, T>) -> Result<Var<'t, T>> {
    let (p, t) = (pred.shape(), target.shape());
    if p != t {
        return Err(Error::shape("mse", &p, &t));
    }
    Ok(pred.sub(target)?.square().mean())
}

/// Sparse categorical cross-entropy on probabilities.
pub fn scce<'t, T: Scalar>(probs: &Var<'t, T>, labels: &[usize]) -> Result<Var<'t, T>> {
    let picked = probs.log_clamped(T::of(LOG_FLOOR)).pick(labels)?;
    Ok(picked.mean().scale(-T::one()))
}

fn check_same<T: Scalar>(op: &'static str, pred: &Tensor<T>, target: &Tensor<T>) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(op, pred.shape(), target.shape()));
    }
    Ok(())
}

pub fn mse_value<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    check_same("mse", pred, target)?;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t).to_f64_lossy().powi(2))
        .sum();
    Ok(total / pred.numel().max(1) as f64)
}

pub fn mae_value<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    check_same("mae", pred, target)?;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t).to_f64_lossy().abs())
        .sum();
    Ok(total / pred.numel().max(1) as f64)
}

fn rows<'a, T: Scalar>(probs: &'a Tensor<T>, labels: &[usize]) -> Result<std::slice::Chunks<'a, T>> {
    let &[b, c] = probs.dims() else {
        return Err(Error::Dimension(format!("expected (B, classes) probabilities, got {}", probs.shape())));
    };
    if b != labels.len() {
        return Err(Error::Dimension(format!("{b} rows but {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Data(format!("label {bad} out of range for {c} classes")));
    }
    Ok(probs.data().chunks(c.max(1)))
}

pub fn scce_value<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let total: f64 = rows(probs, labels)?
        .zip(labels)
        .map(|(row, &l)| -row[l].to_f64_lossy().max(LOG_FLOOR).ln())
        .sum();
    Ok(total / labels.len().max(1) as f64)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let hits = rows(probs, labels)?.zip(labels).filter(|(row, &l)| argmax(row) == l).count();
    Ok(hits as f64 / labels.len().max(1) as f64)
}
