//! Central finite differences, used to validate backward rules.
//!
//! These helpers evaluate only forward values, so they stay independent of
//! the tape's backward pass they are checking.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Numeric gradient of `f` with respect to every element of every input,
/// by central differences with step `eps`.
pub fn numeric_gradients<T: Scalar>(
    inputs: &[Tensor<T>],
    eps: T,
    mut f: impl FnMut(&[Tensor<T>]) -> T,
) -> Vec<Tensor<T>> {
    let mut work: Vec<Tensor<T>> = inputs.to_vec();
    let two = T::of(2.0);
    inputs
        .iter()
        .enumerate()
        .map(|(slot, original)| {
            let mut grad = Vec::with_capacity(original.numel());
            for i in 0..original.numel() {
                let mut plus = original.to_vec();
                plus[i] += eps;
                work[slot] = Tensor::new(original.shape().clone(), plus).expect("same shape");
                let up = f(&work);
                let mut minus = original.to_vec();
                minus[i] -= eps;
                work[slot] = Tensor::new(original.shape().clone(), minus).expect("same shape");
                let down = f(&work);
                grad.push((up - down) / (two * eps));
            }
            work[slot] = original.clone();
            Tensor::new(original.shape().clone(), grad).expect("same shape")
        })
        .collect()
}

/// Relative error `|a - n| / max(|a|, |n|)`.
///
/// Pairs where both magnitudes fall below `floor` are compared absolutely
/// instead, since their ratio is dominated by rounding noise.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < floor {
        diff / floor
    } else {
        diff / scale
    }
}

/// Worst relative error across matching tensors.
pub fn max_relative_error<T: Scalar>(analytic: &[Tensor<T>], numeric: &[Tensor<T>], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(a, n)| relative_error(a.to_f64_lossy(), n.to_f64_lossy(), floor))
        .fold(0.0, f64::max)
}
