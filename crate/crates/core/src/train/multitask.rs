//! Weighted mean of per-head losses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-head weights `w_t ≥ 0` with `Σ w_t > 0`; the aggregate is `Σ w_t L_t / Σ w_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiTaskLoss {
    pub weights: BTreeMap<String, f64>,
}

impl MultiTaskLoss {
    /// Weight 1 for every named head.
    pub fn uniform<'a>(heads: impl IntoIterator<Item = &'a str>) -> Self {
        MultiTaskLoss {
            weights: heads.into_iter().map(|h| (h.to_string(), 1.0)).collect(),
        }
    }

    pub fn new(weights: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let loss = MultiTaskLoss {
            weights: weights.into_iter().collect(),
        };
        loss.validate()?;
        Ok(loss)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::Config("multi-task loss needs at least one head".into()));
        }
        if let Some((name, w)) = self.weights.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Config(format!("weight for head `{name}` must be finite and ≥ 0, got {w}")));
        }
        if self.total() <= 0.0 {
            return Err(Error::Config("Σ w_t > 0 violated: every head weight is zero".into()));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn weight(&self, head: &str) -> Option<f64> {
        self.weights.get(head).copied()
    }

    fn missing<V>(&self, losses: &BTreeMap<String, V>) -> Result<()> {
        match self.weights.keys().find(|h| !losses.contains_key(*h)) {
            Some(h) => Err(Error::Contract(format!("no loss supplied for head `{h}`"))),
            None => Ok(()),
        }
    }

    /// Differentiable aggregate. Zero-weighted heads are left off the graph,
    /// so parameters only they use receive no gradient.
    pub fn aggregate<'t, T: Scalar>(&self, losses: &BTreeMap<String, Var<'t, T>>) -> Result<Var<'t, T>> {
        self.missing(losses)?;
        let total = self.total();
        let mut acc: Option<Var<'t, T>> = None;
        for (head, &w) in &self.weights {
            if w == 0.0 {
                continue;
            }
            let term = losses[head].scale(T::of(w / total));
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term)?,
            });
        }
        acc.ok_or_else(|| Error::Config("every head weight is zero".into()))
    }

    pub fn aggregate_values(&self, losses: &BTreeMap<String, f64>) -> Result<f64> {
        self.missing(losses)?;
        let weighted: f64 = self.weights.iter().map(|(h, w)| w * losses[h]).sum();
        Ok(weighted / self.total())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;
    use crate::tensor::Tensor;

    fn weights(pairs: &[(&str, f64)]) -> MultiTaskLoss {
        MultiTaskLoss::new(pairs.iter().map(|(h, w)| (h.to_string(), *w))).unwrap()
    }

    fn values(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(h, v)| (h.to_string(), *v)).collect()
    }

    #[test]
    fn weighted_means() {
        let l = values(&[("a", 0.4), ("b", 0.6)]);
        assert!((weights(&[("a", 1.0), ("b", 1.0)]).aggregate_values(&l).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(weights(&[("a", 1.0), ("b", 0.0)]).aggregate_values(&l).unwrap(), 0.4);
        let l = values(&[("a", 0.3), ("b", 0.9)]);
        assert!((weights(&[("a", 2.0), ("b", 1.0)]).aggregate_values(&l).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn missing_head_is_contract_error() {
        let err = weights(&[("a", 1.0), ("b", 1.0)]).aggregate_values(&values(&[("a", 0.1)]));
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn invalid_weights() {
        assert!(MultiTaskLoss::new([("a".to_string(), 0.0)]).is_err());
        assert!(MultiTaskLoss::new([("a".to_string(), -1.0)]).is_err());
        assert!(MultiTaskLoss::new(Vec::new()).is_err());
    }

    #[test]
    fn zero_weight_head_gets_no_gradient() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(0.4));
        let b = tape.leaf(Tensor::scalar(0.6));
        let losses: BTreeMap<_, _> = [("a".to_string(), a), ("b".to_string(), b)].into();
        let agg = weights(&[("a", 1.0), ("b", 0.0)]).aggregate(&losses).unwrap();
        assert_eq!(agg.value().item().unwrap(), 0.4);
        let grads = tape.backward(agg).unwrap();
        assert_eq!(grads.wrt(&a).unwrap().item().unwrap(), 1.0);
        assert!(grads.wrt(&b).is_none_or(|g| g.item().unwrap() == 0.0));
    }
}
