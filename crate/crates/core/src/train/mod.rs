//! Optimization loop, evaluation and threshold sweeps.

mod eval;
mod metrics;
mod optim;

pub use eval::{evaluate, evaluate_with, sweep_to_csv, tau_sweep, EvalMode, EvalReport, SweepRow};
pub use metrics::{compute_metrics, Metrics};
pub use optim::{AdamW, GroupLr, PlateauScheduler, SchedulerConfig};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamStore};
use crate::error::{Error, Result};
use crate::features::{Dataset, GraphSample, SampleOptions, Split};
use crate::model::{Model, ModelConfig, Normalizer};

fn d_epochs() -> usize {
    200
}
fn d_lr() -> f64 {
    1e-3
}
fn d_wd() -> f64 {
    5e-4
}
fn d_tau_lr() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    /// Learning rate of the weight group.
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_wd")]
    pub weight_decay: f64,
    /// Initial learning rate of the threshold; the scheduler lowers it.
    #[serde(default = "d_tau_lr")]
    pub tau_lr: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tau_scheduler: SchedulerConfig,
    /// Holds the threshold at this value instead of learning it.
    #[serde(default)]
    pub fixed_tau: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: d_epochs(),
            lr: d_lr(),
            weight_decay: d_wd(),
            tau_lr: d_tau_lr(),
            seed: 0,
            tau_scheduler: SchedulerConfig::default(),
            fixed_tau: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.tau_scheduler;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0) || !(self.tau_lr >= 0.0) {
            return bad(format!("learning rates must be positive (lr={}, tau_lr={})", self.lr, self.tau_lr));
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative".into());
        }
        if !(s.factor > 0.0 && s.factor < 1.0) {
            return bad(format!("scheduler factor must lie in (0, 1), got {}", s.factor));
        }
        if s.patience < 1 {
            return bad("scheduler patience must be at least 1".into());
        }
        if let Some(t) = self.fixed_tau {
            if !t.is_finite() {
                return bad("fixed_tau must be finite".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub tau: Option<f64>,
    pub tau_lr: f64,
}

pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,tau,tau_lr\n");
    for e in log {
        let tau = e.tau.map(|t| format!("{t:?}")).unwrap_or_default();
        let _ = writeln!(s, "{},{:?},{:?},{},{:?}", e.epoch, e.train_loss, e.val_loss, tau, e.tau_lr);
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Epoch in which a non-finite loss stopped training.
    pub nan_abort: Option<usize>,
}

/// Assembles every sample of `split` with the model's feature options.
pub fn prepare(ds: &Dataset, split: Split, options: &SampleOptions) -> Result<Vec<GraphSample>> {
    ds.indices(split).into_iter().map(|i| ds.bundles[i].to_sample(options)).collect()
}

/// Fills in the dataset's condition width, or rejects a conflicting one.
pub fn resolve_model_config(config: &ModelConfig, ds: &Dataset) -> Result<ModelConfig> {
    let mut c = config.clone();
    if c.cond_dim == 0 {
        c.cond_dim = ds.manifest.cond_dim;
    } else if c.cond_dim != ds.manifest.cond_dim {
        return Err(Error::Mismatch(format!(
            "model expects {} condition values, dataset has {}",
            c.cond_dim, ds.manifest.cond_dim
        )));
    }
    Ok(c)
}

/// Trains on the dataset's train split, selecting on its val split.
pub fn train(ds: &Dataset, config: &ModelConfig, tc: &TrainConfig) -> Result<TrainOutcome> {
    let config = resolve_model_config(config, ds)?;
    let options = config.sample_options();
    let train_set = prepare(ds, Split::Train, &options)?;
    let val_set = prepare(ds, Split::Val, &options)?;
    train_samples(&train_set, &val_set, &config, tc)
}

fn mean_loss(model: &Model, params: &ParamStore, samples: &[GraphSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let mut g = Graph::new();
        let l = model.loss_with(&mut g, params, s)?;
        total += g.value(l).item();
    }
    Ok(total / samples.len() as f64)
}

/// One optimizer step per training mesh, in an epoch order shuffled from
/// the seed. With an empty `val` set, selection uses the training loss.
pub fn train_samples(train: &[GraphSample], val: &[GraphSample], config: &ModelConfig, tc: &TrainConfig) -> Result<TrainOutcome> {
    tc.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let norm = Normalizer::fit(config, train);
    let tau0 = tc.fixed_tau.unwrap_or_else(|| config.tau_init.resolve(train));
    let mut model = Model::new(config.clone(), norm, tc.seed, tau0)?;
    for s in train.iter().chain(val) {
        model.check_sample(s)?;
    }
    let mut opt = AdamW::new(&model.params);
    let mut sched = PlateauScheduler::new(tc.tau_scheduler, tc.tau_lr);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut best = model.params.clone();
    let (mut best_epoch, mut best_val) = (0, f64::INFINITY);
    let mut log = Vec::with_capacity(tc.epochs);
    let mut nan_abort = None;
    'epochs: for epoch in 1..=tc.epochs {
        order.shuffle(&mut rng);
        let lr = GroupLr {
            weights: Some(tc.lr),
            tau: tc.fixed_tau.is_none().then_some(sched.lr),
        };
        let mut train_loss = 0.0;
        for &i in &order {
            let mut g = Graph::new();
            let loss = model.loss_with(&mut g, &model.params, &train[i])?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                nan_abort = Some(epoch);
                break 'epochs;
            }
            train_loss += value;
            model.params.zero_grad();
            g.backward(loss, &mut model.params)?;
            opt.step(&mut model.params, lr, tc.weight_decay)?;
        }
        train_loss /= train.len() as f64;
        let val_loss = if val.is_empty() {
            mean_loss(&model, &model.params, train)?
        } else {
            mean_loss(&model, &model.params, val)?
        };
        if !val_loss.is_finite() {
            nan_abort = Some(epoch);
            break;
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            tau: model.tau(),
            tau_lr: if tc.fixed_tau.is_some() { 0.0 } else { sched.lr },
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = model.params.clone();
        }
        sched.step(val_loss);
    }
    model.params = best;
    model.params.zero_grad();
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_val_loss: best_val,
        nan_abort,
    })
}
