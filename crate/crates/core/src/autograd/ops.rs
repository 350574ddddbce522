//! Differentiable operations on [`Var`].
//!
//! Broadcasting is limited to repeating the right-hand operand over leading
//! axes: in `a.add(&b)`, `b`'s shape must equal the trailing dimensions of
//! `a`'s shape (e.g. a bias `(D,)` against activations `(B, S, D)`).

use rand::Rng;

use crate::autograd::kernels::{self, Operand};
use crate::autograd::tape::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

fn check_suffix(op: &'static str, lhs: &Shape, rhs: &Shape) -> Result<()> {
    if rhs.numel() == 0 || !lhs.ends_with(rhs) {
        return Err(Error::shape(op, lhs, rhs));
    }
    Ok(())
}

/// Flat source index for every output position of an axis permutation.
fn permutation_sources(dims: &[usize], axes: &[usize]) -> Vec<usize> {
    let in_strides = Shape::new(dims).strides();
    let out_dims: Vec<usize> = axes.iter().map(|&a| dims[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let total: usize = out_dims.iter().product();
    let mut sources = Vec::with_capacity(total);
    let mut index = vec![0usize; out_dims.len()];
    for _ in 0..total {
        sources.push(index.iter().zip(&src_strides).map(|(i, s)| i * s).sum());
        for axis in (0..out_dims.len()).rev() {
            index[axis] += 1;
            if index[axis] < out_dims[axis] {
                break;
            }
            index[axis] = 0;
        }
    }
    sources
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn value(&self) -> Tensor<T> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Shape {
        self.value().shape().clone()
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    fn unary(&self, value: Tensor<T>, op: Op<T>) -> Var<'t, T> {
        self.tape.push(value, op, &[self.id])
    }

    fn zip_suffix(&self, rhs: &Var<'t, T>, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let a = self.value();
        let b = rhs.value();
        check_suffix(op, a.shape(), b.shape())?;
        let bd = b.data();
        let data: Vec<T> = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bd[i % bd.len()]))
            .collect();
        Tensor::new(a.shape().clone(), data)
    }

    pub fn add(&self, rhs: &Var<'t, T>) -> Result<Var<'t, T>> {
        let value = self.zip_suffix(rhs, "add", |a, b| a + b)?;
        Ok(self.tape.push(
            value,
            Op::Add {
                lhs: self.id,
                rhs: rhs.id,
            },
            &[self.id, rhs.id],
        ))
    }

    pub fn sub(&self, rhs: &Var<'t, T>) -> Result<Var<'t, T>> {
        let value = self.zip_suffix(rhs, "sub", |a, b| a - b)?;
        Ok(self.tape.push(
            value,
            Op::Sub {
                lhs: self.id,
                rhs: rhs.id,
            },
            &[self.id, rhs.id],
        ))
    }

    pub fn mul(&self, rhs: &Var<'t, T>) -> Result<Var<'t, T>> {
        let value = self.zip_suffix(rhs, "mul", |a, b| a * b)?;
        Ok(self.tape.push(
            value,
            Op::Mul {
                lhs: self.id,
                rhs: rhs.id,
            },
            &[self.id, rhs.id],
        ))
    }

    pub fn square(&self) -> Var<'t, T> {
        self.mul(self).expect("operand matches itself")
    }

    /// Multiplies by a constant tensor broadcast over leading axes.
    pub fn mul_const(&self, factor: &Tensor<T>) -> Result<Var<'t, T>> {
        let a = self.value();
        check_suffix("mul_const", a.shape(), factor.shape())?;
        let f = factor.data();
        let data: Vec<T> = a.data().iter().enumerate().map(|(i, &x)| x * f[i % f.len()]).collect();
        Ok(self.unary(
            Tensor::new(a.shape().clone(), data)?,
            Op::MulConst {
                input: self.id,
                factor: factor.clone(),
            },
        ))
    }

    pub fn scale(&self, factor: T) -> Var<'t, T> {
        let value = self.value().map(|x| x * factor);
        self.unary(value, Op::Scale { input: self.id, factor })
    }

    pub fn add_scalar(&self, c: T) -> Var<'t, T> {
        let value = self.value().map(|x| x + c);
        self.unary(value, Op::AddScalar { input: self.id })
    }

    /// Batched matrix product over the last two axes.
    ///
    /// Leading (batch) axes must be equal, or one operand must be a plain
    /// matrix that is reused for every batch entry.
    pub fn matmul(&self, rhs: &Var<'t, T>) -> Result<Var<'t, T>> {
        let a = self.value();
        let b = rhs.value();
        let (ad, bd) = (a.dims(), b.dims());
        if ad.len() < 2 || bd.len() < 2 || ad[ad.len() - 1] != bd[bd.len() - 2] {
            return Err(Error::shape("matmul", a.shape(), b.shape()));
        }
        let (a_batch, b_batch) = (&ad[..ad.len() - 2], &bd[..bd.len() - 2]);
        let (lhs_kind, rhs_kind, batch_dims) = if a_batch == b_batch {
            (Operand::Batched, Operand::Batched, a_batch)
        } else if b_batch.is_empty() {
            (Operand::Batched, Operand::Shared, a_batch)
        } else if a_batch.is_empty() {
            (Operand::Shared, Operand::Batched, b_batch)
        } else {
            return Err(Error::shape("matmul", a.shape(), b.shape()));
        };
        let batch: usize = batch_dims.iter().product();
        let (m, k, n) = (ad[ad.len() - 2], ad[ad.len() - 1], bd[bd.len() - 1]);
        let data = kernels::matmul(a.data(), lhs_kind, b.data(), rhs_kind, batch, m, k, n);
        let mut dims = batch_dims.to_vec();
        dims.extend([m, n]);
        Ok(self.tape.push(
            Tensor::new(dims, data)?,
            Op::MatMul {
                lhs: self.id,
                rhs: rhs.id,
                lhs_kind,
                rhs_kind,
                batch,
                m,
                k,
                n,
            },
            &[self.id, rhs.id],
        ))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Var<'t, T>> {
        let a = self.value();
        let rank = a.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&x| x >= rank || std::mem::replace(&mut seen[x], true)) {
            return Err(Error::Dimension(format!(
                "permute: {axes:?} is not a permutation of the axes of {}",
                a.shape()
            )));
        }
        let source = permutation_sources(a.dims(), axes);
        let data: Vec<T> = source.iter().map(|&s| a.data()[s]).collect();
        let dims: Vec<usize> = axes.iter().map(|&x| a.dims()[x]).collect();
        Ok(self.unary(Tensor::new(dims, data)?, Op::Gather { input: self.id, source }))
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Var<'t, T>> {
        let rank = self.value().rank();
        if rank < 2 {
            return Err(Error::Dimension("transpose needs rank >= 2".into()));
        }
        let mut axes: Vec<usize> = (0..rank).collect();
        axes.swap(rank - 2, rank - 1);
        self.permute(&axes)
    }

    pub fn reshape(&self, shape: impl Into<Shape>) -> Result<Var<'t, T>> {
        let value = self.value().reshape(shape)?;
        Ok(self.unary(value, Op::Reshape { input: self.id }))
    }

    /// Collapses every axis from `start` onward into one.
    pub fn flatten_from(&self, start: usize) -> Result<Var<'t, T>> {
        let v = self.value();
        if start >= v.rank() {
            return Err(Error::Dimension(format!("flatten_from({start}) on shape {}", v.shape())));
        }
        let mut dims = v.dims()[..start].to_vec();
        dims.push(v.dims()[start..].iter().product());
        self.reshape(dims)
    }

    pub fn sum(&self) -> Var<'t, T> {
        let v = self.value();
        let total: T = v.data().iter().copied().sum();
        self.unary(Tensor::scalar(total), Op::Sum { input: self.id })
    }

    pub fn mean(&self) -> Var<'t, T> {
        let v = self.value();
        let total: T = v.data().iter().copied().sum();
        let mean = total / T::of(v.numel().max(1) as f64);
        self.unary(Tensor::scalar(mean), Op::Mean { input: self.id })
    }

    /// Softmax along `axis`, stabilised by subtracting the running maximum.
    pub fn softmax(&self, axis: usize) -> Result<Var<'t, T>> {
        let v = self.value();
        if axis >= v.rank() {
            return Err(Error::Dimension(format!("softmax axis {axis} out of range for {}", v.shape())));
        }
        let (outer, n, inner) = kernels::axis_blocks(v.dims(), axis);
        let data = kernels::softmax(v.data(), outer, n, inner);
        Ok(self.unary(Tensor::new(v.shape().clone(), data)?, Op::Softmax { input: self.id, axis }))
    }

    /// Normalises over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(&self, gain: &Var<'t, T>, bias: &Var<'t, T>, epsilon: T) -> Result<Var<'t, T>> {
        let x = self.value();
        let (gv, bv) = (gain.value(), bias.value());
        let d = x.shape().last().unwrap_or(0);
        if gv.dims() != [d] || bv.dims() != [d] || d == 0 {
            return Err(Error::shape("layer_norm", x.shape(), gv.shape()));
        }
        let rows = x.numel() / d;
        let dn = T::of(d as f64);
        let mut normalized = Vec::with_capacity(x.numel());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(x.numel());
        for row in x.data().chunks(d) {
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let inv = T::one() / (var + epsilon).sqrt();
            inv_std.push(inv);
            for (j, &v) in row.iter().enumerate() {
                let xhat = (v - mean) * inv;
                normalized.push(xhat);
                out.push(xhat * gv.data()[j] + bv.data()[j]);
            }
        }
        Ok(self.tape.push(
            Tensor::new(x.shape().clone(), out)?,
            Op::LayerNorm {
                input: self.id,
                gain: gain.id,
                bias: bias.id,
                normalized,
                inv_std,
            },
            &[self.id, gain.id, bias.id],
        ))
    }

    pub fn relu(&self) -> Var<'t, T> {
        let value = self.value().map(|x| x.max(T::zero()));
        self.unary(value, Op::Relu { input: self.id })
    }

    /// GeLU, tanh approximation.
    pub fn gelu(&self) -> Var<'t, T> {
        let value = self.value().map(kernels::gelu);
        self.unary(value, Op::Gelu { input: self.id })
    }

    pub fn sin(&self) -> Var<'t, T> {
        let value = self.value().map(T::sin);
        self.unary(value, Op::Sin { input: self.id })
    }

    /// `ln(max(x, floor))`; no gradient flows through clamped entries.
    pub fn log_clamped(&self, floor: T) -> Var<'t, T> {
        let value = self.value().map(|x| x.max(floor).ln());
        self.unary(value, Op::LogClamped { input: self.id, floor })
    }

    /// Selects `indices[r]` from row `r` of the last axis; output drops that axis.
    pub fn pick(&self, indices: &[usize]) -> Result<Var<'t, T>> {
        let v = self.value();
        let c = v.shape().last().unwrap_or(0);
        let rows = v.numel().checked_div(c).unwrap_or(0);
        if rows != indices.len() {
            return Err(Error::Dimension(format!(
                "pick: {} indices for {rows} rows of {}",
                indices.len(),
                v.shape()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= c) {
            return Err(Error::Data(format!("index {bad} out of range for {c} classes")));
        }
        let data: Vec<T> = indices.iter().enumerate().map(|(r, &i)| v.data()[r * c + i]).collect();
        let dims = v.dims()[..v.rank() - 1].to_vec();
        Ok(self.unary(
            Tensor::new(dims, data)?,
            Op::Pick {
                input: self.id,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `p_drop` and survivors are scaled by `1 / (1 - p_drop)`.
    /// Evaluation mode is the identity.
    pub fn dropout(&self, p_drop: f64, training: bool, rng: &mut impl Rng) -> Result<Var<'t, T>> {
        if !(0.0..1.0).contains(&p_drop) {
            return Err(Error::Config(format!("dropout probability {p_drop} outside [0, 1)")));
        }
        if !training || p_drop == 0.0 {
            return Ok(*self);
        }
        let keep = T::of(1.0 / (1.0 - p_drop));
        let v = self.value();
        let mask: Vec<T> = (0..v.numel())
            .map(|_| if rng.gen::<f64>() < p_drop { T::zero() } else { keep })
            .collect();
        self.mul_const(&Tensor::new(v.shape().clone(), mask)?)
    }
}

/// Concatenates along `axis`; all other extents must agree.
pub fn concat<'t, T: Scalar>(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
    let Some(first) = parts.first() else {
        return Err(Error::Dimension("concat of zero tensors".into()));
    };
    let values: Vec<Tensor<T>> = parts.iter().map(Var::value).collect();
    let base = values[0].shape().clone();
    if axis >= base.rank() {
        return Err(Error::Dimension(format!("concat axis {axis} out of range for {base}")));
    }
    for v in &values[1..] {
        let compatible = v.rank() == base.rank()
            && v.dims().iter().zip(base.dims()).enumerate().all(|(i, (a, b))| i == axis || a == b);
        if !compatible {
            return Err(Error::shape("concat", &base, v.shape()));
        }
    }
    let total: usize = values.iter().map(|v| v.dims()[axis]).sum();
    let (outer, _, inner) = kernels::axis_blocks(base.dims(), axis);
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for v in &values {
            let n = v.dims()[axis];
            data.extend_from_slice(&v.data()[o * n * inner..(o + 1) * n * inner]);
        }
    }
    let mut dims = base.dims().to_vec();
    dims[axis] = total;
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    Ok(first.tape.push(
        Tensor::new(dims, data)?,
        Op::Concat {
            inputs: ids.clone(),
            axis,
        },
        &ids,
    ))
}
