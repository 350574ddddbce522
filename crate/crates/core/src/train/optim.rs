//! Adam with bias correction, driven by a learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant { lr: f64 },
    /// `lr * gamma^floor(epoch / every)`.
    StepDecay { lr: f64, gamma: f64, every: usize },
    /// `scale * min(step^-1/2, step * warmup^-3/2)`, peaking at `step == warmup`.
    WarmupInverseSqrt { scale: f64, warmup: usize },
}

impl LrSchedule {
    /// Builds a schedule from its textual kind and the parameters it uses.
    pub fn from_kind(kind: &str, lr: f64, gamma: Option<f64>, every: Option<usize>, warmup: Option<usize>) -> Result<Self> {
        let schedule = match kind {
            "constant" => LrSchedule::Constant { lr },
            "step_decay" => LrSchedule::StepDecay {
                lr,
                gamma: gamma.ok_or_else(|| Error::Config("step_decay needs `gamma`".into()))?,
                every: every.ok_or_else(|| Error::Config("step_decay needs `every`".into()))?,
            },
            "warmup_inverse_sqrt" => LrSchedule::WarmupInverseSqrt {
                scale: lr,
                warmup: warmup.ok_or_else(|| Error::Config("warmup_inverse_sqrt needs `warmup`".into()))?,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown learning-rate schedule `{other}` (expected constant, step_decay or warmup_inverse_sqrt)"
                )))
            }
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LrSchedule::Constant { lr } => lr >= 0.0 && lr.is_finite(),
            LrSchedule::StepDecay { lr, gamma, every } => lr >= 0.0 && gamma > 0.0 && every > 0 && lr.is_finite(),
            LrSchedule::WarmupInverseSqrt { scale, warmup } => scale >= 0.0 && warmup > 0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid learning-rate schedule {self:?}")))
        }
    }

    /// Learning rate for optimizer `step` (1-based) during `epoch` (0-based).
    pub fn rate(&self, step: u64, epoch: usize) -> Result<f64> {
        if step == 0 {
            return Err(Error::Contract("learning-rate schedules are defined for step ≥ 1".into()));
        }
        Ok(match *self {
            LrSchedule::Constant { lr } => lr,
            LrSchedule::StepDecay { lr, gamma, every } => lr * gamma.powi((epoch / every) as i32),
            LrSchedule::WarmupInverseSqrt { scale, warmup } => {
                let s = step as f64;
                scale * s.powf(-0.5).min(s * (warmup as f64).powf(-1.5))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub schedule: LrSchedule,
    #[serde(default = "AdamConfig::default_beta1")]
    pub beta1: f64,
    #[serde(default = "AdamConfig::default_beta2")]
    pub beta2: f64,
    #[serde(default = "AdamConfig::default_epsilon")]
    pub epsilon: f64,
}

impl AdamConfig {
    fn default_beta1() -> f64 {
        0.9
    }
    fn default_beta2() -> f64 {
        0.999
    }
    fn default_epsilon() -> f64 {
        1e-8
    }

    pub fn new(schedule: LrSchedule) -> Self {
        AdamConfig {
            schedule,
            beta1: Self::default_beta1(),
            beta2: Self::default_beta2(),
            epsilon: Self::default_epsilon(),
        }
    }
}

/// Moment accumulators, aligned with parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub step: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Scalar> Default for AdamState<T> {
    fn default() -> Self {
        AdamState {
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T: Scalar> {
    pub config: AdamConfig,
    pub state: AdamState<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            state: AdamState::default(),
        }
    }

    pub fn with_state(config: AdamConfig, state: AdamState<T>) -> Self {
        Adam { config, state }
    }

    /// Learning rate the next step will use.
    pub fn next_rate(&self, epoch: usize) -> Result<f64> {
        self.config.schedule.rate(self.state.step + 1, epoch)
    }

    /// One update over raw tensors. Entries whose gradient is `None` are
    /// skipped entirely (their moments are not decayed).
    pub fn step_tensors(&mut self, params: &mut [Tensor<T>], grads: &[Option<Tensor<T>>], epoch: usize) -> Result<f64> {
        if params.len() != grads.len() {
            return Err(Error::Dimension(format!("{} parameters but {} gradients", params.len(), grads.len())));
        }
        if self.state.first.is_empty() {
            self.state.first = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
            self.state.second = self.state.first.clone();
        }
        if self.state.first.len() != params.len() {
            return Err(Error::Dimension(format!(
                "optimizer state tracks {} tensors, got {}",
                self.state.first.len(),
                params.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.state.first) {
            if p.numel() != m.len() {
                return Err(Error::Dimension(format!("moment length {} for parameter of shape {}", m.len(), p.shape())));
            }
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(Error::shape("adam_step", p.shape(), g.shape()));
                }
            }
        }

        self.state.step += 1;
        let lr = self.config.schedule.rate(self.state.step, epoch)?;
        let t = self.state.step as i32;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let correction1 = T::of(1.0 - b1.powi(t));
        let correction2 = T::of(1.0 - b2.powi(t));
        let (b1, b2, eps, lr_t) = (T::of(b1), T::of(b2), T::of(self.config.epsilon), T::of(lr));
        for (i, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            let Some(grad) = grad else { continue };
            let m = &mut self.state.first[i];
            let v = &mut self.state.second[i];
            let mut values = param.to_vec();
            for (j, (&g, x)) in grad.data().iter().zip(values.iter_mut()).enumerate() {
                m[j] = b1 * m[j] + (T::one() - b1) * g;
                v[j] = b2 * v[j] + (T::one() - b2) * g * g;
                let m_hat = m[j] / correction1;
                let v_hat = v[j] / correction2;
                *x -= lr_t * m_hat / (v_hat.sqrt() + eps);
            }
            *param = Tensor::new(param.shape().clone(), values)?;
        }
        Ok(lr)
    }

    /// Applies the gradients currently held by `store`. Returns the rate used.
    pub fn step(&mut self, store: &mut ParamStore<T>, epoch: usize) -> Result<f64> {
        let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
        let mut values: Vec<Tensor<T>> = store.iter().map(|(_, p)| p.value().clone()).collect();
        let grads: Vec<Option<Tensor<T>>> = store
            .iter()
            .map(|(_, p)| p.grad().filter(|_| p.requires_grad()).cloned())
            .collect();
        let lr = self.step_tensors(&mut values, &grads, epoch)?;
        for (id, v) in ids.into_iter().zip(values) {
            store.set_value(id, v)?;
        }
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(lr: f64) -> Adam<f64> {
        Adam::new(AdamConfig::new(LrSchedule::Constant { lr }))
    }

    #[test]
    fn zero_gradient_leaves_everything_at_rest() {
        let mut opt = constant(0.01);
        let mut params = vec![Tensor::vector(vec![1.5, -2.0])];
        opt.step_tensors(&mut params, &[Some(Tensor::zeros([2]))], 0).unwrap();
        assert_eq!(params[0].data(), &[1.5, -2.0]);
        assert!(opt.state.first[0].iter().chain(&opt.state.second[0]).all(|&x| x == 0.0));
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut opt = constant(0.01);
        let mut params = vec![Tensor::vector(vec![0.0, 0.0])];
        opt.step_tensors(&mut params, &[Some(Tensor::vector(vec![3.0, -0.2]))], 0).unwrap();
        // m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps)
        let expected = [-0.01 * 3.0 / (3.0 + 1e-8), 0.01 * 0.2 / (0.2 + 1e-8)];
        for (a, e) in params[0].data().iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn two_steps_match_hand_trace() {
        let (lr, b1, b2, eps) = (0.05, 0.9f64, 0.999f64, 1e-8);
        let grads = [0.7, -1.3];
        let mut x = 2.0f64;
        let (mut m, mut v) = (0.0, 0.0);
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            x -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        let mut opt = constant(lr);
        let mut params = vec![Tensor::vector(vec![2.0])];
        for g in grads {
            opt.step_tensors(&mut params, &[Some(Tensor::vector(vec![g]))], 0).unwrap();
        }
        assert!((params[0].data()[0] - x).abs() < 1e-12);
        assert_eq!(opt.state.step, 2);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let mut opt = constant(0.1);
        let mut params = vec![Tensor::vector(vec![0.0, 0.0])];
        let err = opt.step_tensors(&mut params, &[Some(Tensor::zeros([3]))], 0).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
        assert!(opt.step_tensors(&mut params, &[], 0).is_err());
    }

    #[test]
    fn schedules() {
        let c = LrSchedule::from_kind("constant", 1e-4, None, None, None).unwrap();
        assert_eq!(c.rate(1, 0).unwrap(), 1e-4);
        assert_eq!(c.rate(12345, 29).unwrap(), 1e-4);

        let d = LrSchedule::from_kind("step_decay", 1e-3, Some(0.5), Some(10), None).unwrap();
        assert!((d.rate(1, 25).unwrap() - 2.5e-4).abs() < 1e-18);
        assert_eq!(d.rate(1, 9).unwrap(), 1e-3);

        let w = LrSchedule::from_kind("warmup_inverse_sqrt", 1.0, None, None, Some(100)).unwrap();
        let peak = w.rate(100, 0).unwrap();
        assert!(w.rate(99, 0).unwrap() < peak);
        assert!(w.rate(101, 0).unwrap() < peak);
        assert!((peak - 0.1).abs() < 1e-15);
        assert!(w.rate(0, 0).is_err());

        assert!(matches!(
            LrSchedule::from_kind("cosine", 1.0, None, None, None),
            Err(Error::Config(_))
        ));
    }
}
