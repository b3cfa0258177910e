//! Adam with per-parameter step counts.

use std::collections::BTreeMap;

use pdanet_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::params::{Grads, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(NnError::Config(format!("train.lr must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(NnError::Config(format!("train.beta1 must lie in [0, 1), got {}", self.beta1)));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(NnError::Config(format!("train.beta2 must lie in [0, 1), got {}", self.beta2)));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(NnError::Config(format!("train.eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// First and second moment estimates of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub state: BTreeMap<ParamId, Moments<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, state: BTreeMap::new() }
    }

    /// Updates every id in `ids` that received a gradient; returns how many tensors moved.
    /// Moments of all other parameters are left untouched.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Grads<T>, ids: &[ParamId]) -> usize {
        let mut ids = ids.to_vec();
        ids.sort();
        ids.dedup();
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let mut updated = 0;
        for id in ids {
            let Some(g) = grads.get(id) else { continue };
            let value = store.value_mut(id);
            let st = self
                .state
                .entry(id)
                .or_insert_with(|| Moments { step: 0, m: vec![T::zero(); g.len()], v: vec![T::zero(); g.len()] });
            st.step += 1;
            let t = st.step as i32;
            let lr_t = T::lit(c.lr * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t)));
            let eps_t = T::lit(c.eps * (1.0 - c.beta2.powi(t)).sqrt());
            for (((p, &gi), m), v) in value.iter_mut().zip(g).zip(st.m.iter_mut()).zip(st.v.iter_mut()) {
                *m = b1 * *m + one_b1 * gi;
                *v = b2 * *v + one_b2 * gi * gi;
                *p -= lr_t * *m / (v.sqrt() + eps_t);
            }
            updated += 1;
        }
        updated
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::<f64>::new(0);
        let a = store.add("a", &[2], Init::Zeros).unwrap();
        let b = store.add("b", &[1], Init::Zeros).unwrap();
        let mut grads = Grads::new(&store);
        grads.slot(a, 2).copy_from_slice(&[3.0, -0.5]);
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..AdamConfig::default() });
        assert_eq!(opt.step(&mut store, &grads, &[a, b]), 1);
        assert!((store.value(a)[0] + 0.1).abs() < 1e-6);
        assert!((store.value(a)[1] - 0.1).abs() < 1e-6);
        assert_eq!(store.value(b), &[0.0]);
        assert!(!opt.state.contains_key(&b));
    }

    #[test]
    fn matches_textbook_recurrence() {
        let mut store = ParamStore::<f64>::new(0);
        let a = store.add("a", &[1], Init::Zeros).unwrap();
        let cfg = AdamConfig::default();
        let mut opt = Adam::new(cfg);
        let (mut p, mut m, mut v) = (0.0f64, 0.0, 0.0);
        for t in 1..=5 {
            let g = (t as f64).sin() + p;
            let mut grads = Grads::new(&store);
            grads.slot(a, 1)[0] = g;
            opt.step(&mut store, &grads, &[a]);
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let mh = m / (1.0 - cfg.beta1.powi(t));
            let vh = v / (1.0 - cfg.beta2.powi(t));
            p -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            assert!((store.value(a)[0] - p).abs() < 1e-12);
        }
    }
}
