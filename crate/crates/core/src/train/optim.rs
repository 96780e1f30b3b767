use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamGroup, ParamStore};
use crate::error::{Error, Result};

/// Adam with decoupled weight decay on the `Weights` group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// Learning rate per parameter group; `None` freezes the group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupLr {
    pub weights: Option<f64>,
    pub tau: Option<f64>,
}

impl GroupLr {
    fn get(&self, g: ParamGroup) -> Option<f64> {
        match g {
            ParamGroup::Weights => self.weights,
            ParamGroup::Tau => self.tau,
        }
    }
}

impl AdamW {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.value.data().len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// One update from the gradients currently held in `store`.
    pub fn step(&mut self, store: &mut ParamStore, lr: GroupLr, weight_decay: f64) -> Result<()> {
        if store.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                msg: format!("{} parameters, optimizer state for {}", store.len(), self.m.len()),
            });
        }
        for (k, p) in store.iter().enumerate() {
            if p.value.data().len() != self.m[k].len() || p.grad.shape() != p.value.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    msg: format!("state/gradient shape differs for {}", p.name),
                });
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (k, p) in store.iter_mut().enumerate() {
            let Some(rate) = lr.get(p.group) else { continue };
            let decay = if p.group == ParamGroup::Weights { weight_decay } else { 0.0 };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let grad = p.grad.data().to_vec();
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *w -= rate * decay * *w;
                *w -= rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

fn d_patience() -> usize {
    5
}
fn d_threshold() -> f64 {
    1.0
}
fn d_factor() -> f64 {
    0.5
}
fn d_min_lr() -> f64 {
    1e-6
}

/// Reduce-on-plateau settings; `threshold` is an absolute improvement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    #[serde(default = "d_patience")]
    pub patience: usize,
    #[serde(default = "d_threshold")]
    pub threshold: f64,
    #[serde(default = "d_factor")]
    pub factor: f64,
    #[serde(default = "d_min_lr")]
    pub min_lr: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            patience: d_patience(),
            threshold: d_threshold(),
            factor: d_factor(),
            min_lr: d_min_lr(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub config: SchedulerConfig,
    pub lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(config: SchedulerConfig, lr: f64) -> Self {
        Self {
            config,
            lr,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Feeds one epoch's monitored loss; returns true when the rate was cut.
    pub fn step(&mut self, loss: f64) -> bool {
        if loss < self.best - self.config.threshold {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs > self.config.patience {
            self.lr = (self.lr * self.config.factor).max(self.config.min_lr);
            self.bad_epochs = 0;
            return true;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn one(w: f64, group: ParamGroup) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(w), group);
        s
    }

    fn set_grad(s: &mut ParamStore, g: f64) {
        s.iter_mut().next().unwrap().grad = Tensor::scalar(g);
    }

    fn value(s: &ParamStore) -> f64 {
        s.iter().next().unwrap().value.item()
    }

    const ALL: GroupLr = GroupLr {
        weights: Some(0.1),
        tau: Some(0.1),
    };

    #[test]
    fn first_step_on_square() {
        // f = w^2, grad 2 at w = 1; m_hat / sqrt(v_hat) = 1
        let mut s = one(1.0, ParamGroup::Weights);
        let mut opt = AdamW::new(&s);
        set_grad(&mut s, 2.0);
        opt.step(&mut s, ALL, 0.0).unwrap();
        let expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((value(&s) - expected).abs() < 1e-15);
        assert!((value(&s) - 0.9).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = one(0.7, ParamGroup::Weights);
        let mut opt = AdamW::new(&s);
        for _ in 0..3 {
            opt.step(&mut s, ALL, 0.0).unwrap();
        }
        assert_eq!(value(&s), 0.7);
    }

    #[test]
    fn decoupled_decay_only() {
        let mut s = one(2.0, ParamGroup::Weights);
        let mut opt = AdamW::new(&s);
        opt.step(&mut s, ALL, 5e-4).unwrap();
        assert_eq!(value(&s), 2.0 - 0.1 * 5e-4 * 2.0);
        // never on tau
        let mut t = one(2.0, ParamGroup::Tau);
        let mut opt = AdamW::new(&t);
        opt.step(&mut t, ALL, 5e-4).unwrap();
        assert_eq!(value(&t), 2.0);
    }

    #[test]
    fn frozen_group_is_untouched() {
        let mut t = one(3.0, ParamGroup::Tau);
        let mut opt = AdamW::new(&t);
        set_grad(&mut t, 1.0);
        let lr = GroupLr {
            weights: Some(0.1),
            tau: None,
        };
        opt.step(&mut t, lr, 0.0).unwrap();
        assert_eq!(value(&t), 3.0);
    }

    #[test]
    fn shape_mismatch() {
        let s = one(1.0, ParamGroup::Weights);
        let mut opt = AdamW::new(&s);
        let mut bigger = s.clone();
        bigger.add("b", Tensor::zeros(1, 2), ParamGroup::Weights);
        assert!(matches!(opt.step(&mut bigger, ALL, 0.0), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn scheduler_never_cuts_on_large_improvements() {
        let mut sch = PlateauScheduler::new(SchedulerConfig::default(), 0.1);
        for k in 0..30 {
            assert!(!sch.step(100.0 - 1.5 * k as f64));
        }
        assert_eq!(sch.lr, 0.1);
    }

    #[test]
    fn scheduler_traces() {
        // epoch 1 sets best; epochs 2..7 are six non-improving epochs
        let mut sch = PlateauScheduler::new(SchedulerConfig::default(), 0.1);
        let cuts: Vec<bool> = (0..7).map(|_| sch.step(1.0)).collect();
        assert_eq!(cuts, [false, false, false, false, false, false, true]);
        assert_eq!(sch.lr, 0.05);
        // counter was reset: six more flat epochs give the second cut
        let cuts: Vec<bool> = (0..6).map(|_| sch.step(0.9)).collect();
        assert_eq!(cuts, [false, false, false, false, false, true]);
        assert_eq!(sch.lr, 0.025);
    }

    #[test]
    fn scheduler_respects_min_lr() {
        let cfg = SchedulerConfig {
            min_lr: 0.04,
            ..SchedulerConfig::default()
        };
        let mut sch = PlateauScheduler::new(cfg, 0.1);
        for _ in 0..40 {
            sch.step(1.0);
        }
        assert_eq!(sch.lr, 0.04);
    }
}
