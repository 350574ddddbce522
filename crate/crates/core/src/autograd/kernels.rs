//! Slice-level numeric kernels shared by forward evaluation and backward rules.

use crate::scalar::Scalar;

/// Batch layout of a matmul operand: either one matrix reused for every
/// batch entry, or one matrix per entry.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Operand {
    Shared,
    Batched,
}

impl Operand {
    #[inline]
    fn offset(self, batch: usize, size: usize) -> usize {
        match self {
            Operand::Shared => 0,
            Operand::Batched => batch * size,
        }
    }
}

/// `out[b] = a[b] · w[b]` with `a: (m, k)`, `w: (k, n)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul<T: Scalar>(
    a: &[T],
    a_kind: Operand,
    w: &[T],
    w_kind: Operand,
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); batch * m * n];
    for b in 0..batch {
        let a_off = a_kind.offset(b, m * k);
        let w_off = w_kind.offset(b, k * n);
        let o_off = b * m * n;
        for i in 0..m {
            let row = &mut out[o_off + i * n..o_off + (i + 1) * n];
            for p in 0..k {
                let av = a[a_off + i * k + p];
                if av == T::zero() {
                    continue;
                }
                let w_row = &w[w_off + p * n..w_off + (p + 1) * n];
                for (o, &wv) in row.iter_mut().zip(w_row) {
                    *o += av * wv;
                }
            }
        }
    }
    out
}

/// Accumulates `g[b] · w[b]ᵀ` into `grad_a`, where `g: (m, n)` and `w: (k, n)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul_grad_lhs<T: Scalar>(
    g: &[T],
    w: &[T],
    w_kind: Operand,
    grad_a: &mut [T],
    a_kind: Operand,
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
) {
    for b in 0..batch {
        let w_off = w_kind.offset(b, k * n);
        let a_off = a_kind.offset(b, m * k);
        let g_off = b * m * n;
        for i in 0..m {
            let g_row = &g[g_off + i * n..g_off + (i + 1) * n];
            for p in 0..k {
                let w_row = &w[w_off + p * n..w_off + (p + 1) * n];
                let mut acc = T::zero();
                for (&gv, &wv) in g_row.iter().zip(w_row) {
                    acc += gv * wv;
                }
                grad_a[a_off + i * k + p] += acc;
            }
        }
    }
}

/// Accumulates `a[b]ᵀ · g[b]` into `grad_w`, where `a: (m, k)` and `g: (m, n)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul_grad_rhs<T: Scalar>(
    a: &[T],
    a_kind: Operand,
    g: &[T],
    grad_w: &mut [T],
    w_kind: Operand,
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
) {
    for b in 0..batch {
        let a_off = a_kind.offset(b, m * k);
        let w_off = w_kind.offset(b, k * n);
        let g_off = b * m * n;
        for i in 0..m {
            let g_row = &g[g_off + i * n..g_off + (i + 1) * n];
            for p in 0..k {
                let av = a[a_off + i * k + p];
                if av == T::zero() {
                    continue;
                }
                let gw = &mut grad_w[w_off + p * n..w_off + (p + 1) * n];
                for (o, &gv) in gw.iter_mut().zip(g_row) {
                    *o += av * gv;
                }
            }
        }
    }
}

/// Splits a shape around `axis` into (outer, axis extent, inner) block sizes.
pub(crate) fn axis_blocks(dims: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = dims[..axis].iter().product();
    let inner = dims[axis + 1..].iter().product();
    (outer, dims[axis], inner)
}

/// Numerically stable softmax along the middle extent of an (outer, n, inner) layout.
pub(crate) fn softmax<T: Scalar>(x: &[T], outer: usize, n: usize, inner: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            let mut max = T::neg_infinity();
            for j in 0..n {
                max = max.max(x[base + j * inner]);
            }
            let mut total = T::zero();
            for j in 0..n {
                let e = (x[base + j * inner] - max).exp();
                out[base + j * inner] = e;
                total += e;
            }
            for j in 0..n {
                out[base + j * inner] /= total;
            }
        }
    }
    out
}

pub(crate) const GELU_COEFF: f64 = 0.044_715;

/// Tanh approximation of GeLU.
#[inline]
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + T::of(GELU_COEFF) * x * x * x)).tanh())
}

#[inline]
pub(crate) fn gelu_derivative<T: Scalar>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    let a = T::of(GELU_COEFF);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_rhs_matmul() {
        // two batch entries of (1x2) times a shared (2x2)
        let a = [1.0, 2.0, 3.0, 4.0];
        let w = [1.0, 0.0, 0.0, 1.0];
        let out = matmul(&a, Operand::Batched, &w, Operand::Shared, 2, 1, 2, 2);
        assert_eq!(out, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn softmax_over_inner_stride() {
        // layout (1, 2, 2): softmax over the middle axis pairs (0,2) and (1,3)
        let x = [0.0, 1.0, 0.0, 1.0];
        let y = softmax(&x, 1, 2, 2);
        for v in y {
            assert!((v - 0.5f64).abs() < 1e-15);
        }
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0f64), 0.0);
        // large inputs saturate to identity / zero
        assert!((gelu(10.0f64) - 10.0).abs() < 1e-12);
        assert!(gelu(-10.0f64).abs() < 1e-12);
    }
}
