use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{compute_metrics, train, Metrics, TrainConfig};
use crate::error::Result;
use crate::features::{assemble_sample, Dataset, GraphSample, Geometry, Split};
use crate::mesh::Point3;
use crate::model::{Model, ModelConfig};
use crate::transform::{random_rigid, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    InDist,
    OodRotated,
}

impl EvalMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "in_dist" => Some(Self::InDist),
            "ood_rotated" => Some(Self::OodRotated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub names: Vec<String>,
    pub per_sample: Vec<Metrics>,
    /// Pooled over every node of every sample.
    pub aggregate: Metrics,
}

fn fmt_metrics(m: &Metrics) -> String {
    let r2 = m.r2.map(|r| format!("{r:?}")).unwrap_or_default();
    format!("{:?},{:?},{}", m.rmse, m.mae, r2)
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample_id,rmse,mae,r2\n");
        for (n, m) in self.names.iter().zip(&self.per_sample) {
            let _ = writeln!(s, "{n},{}", fmt_metrics(m));
        }
        let _ = writeln!(s, "aggregate,{}", fmt_metrics(&self.aggregate));
        s
    }
}

/// Random rotation plus translation for the `k`-th evaluated sample.
pub fn ood_transform(seed: u64, k: usize) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    random_rigid(&mut rng, false, 10.0)
}

pub fn evaluate(model: &Model, ds: &Dataset, split: Split, mode: EvalMode, seed: u64) -> Result<EvalReport> {
    match mode {
        EvalMode::InDist => evaluate_with(model, ds, split, |_| None),
        EvalMode::OodRotated => evaluate_with(model, ds, split, |k| Some(ood_transform(seed, k))),
    }
}

/// Evaluates the samples of `split` in index order. When `transform`
/// returns a motion for the `k`-th sample, the mesh is moved, all geometry
/// is recomputed and targets are rotated before prediction; metrics are then
/// taken in the moved frame.
pub fn evaluate_with<F>(model: &Model, ds: &Dataset, split: Split, transform: F) -> Result<EvalReport>
where
    F: Fn(usize) -> Option<RigidTransform>,
{
    let options = model.config.sample_options();
    let mut names = Vec::new();
    let mut per_sample = Vec::new();
    let (mut all_p, mut all_t) = (Vec::new(), Vec::new());
    for (k, i) in ds.indices(split).into_iter().enumerate() {
        let b = &ds.bundles[i];
        let sample: GraphSample = match transform(k) {
            None => b.to_sample(&options)?,
            Some(t) => {
                let geo = Geometry::compute(b.mesh.transformed(&t.q, &t.g))?;
                let targets: Vec<Point3> = b.targets.iter().map(|d| t.apply_vector(d)).collect();
                assemble_sample(&geo.mesh, &geo.normals, &geo.frame, &geo.pairing, b.gate, &b.condition, &targets, &options)?
            }
        };
        model.check_sample(&sample)?;
        let pred = model.predict(&sample)?.p_orig;
        let target: Vec<Point3> = sample.targets.iter().map(|t| Point3::from(*t)).collect();
        per_sample.push(compute_metrics(&pred, &target)?);
        names.push(ds.name(i).to_string());
        all_p.extend(pred);
        all_t.extend(target);
    }
    Ok(EvalReport {
        names,
        per_sample,
        aggregate: compute_metrics(&all_p, &all_t)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    pub metrics: Metrics,
}

/// Trains one model per fixed threshold and evaluates it on `split`.
pub fn tau_sweep(ds: &Dataset, config: &ModelConfig, tc: &TrainConfig, grid: &[f64], split: Split) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(crate::error::Error::Config("tau grid is empty".into()));
    }
    grid.iter()
        .map(|&tau| {
            let cfg = TrainConfig {
                fixed_tau: Some(tau),
                ..tc.clone()
            };
            let out = train(ds, config, &cfg)?;
            let report = evaluate(&out.model, ds, split, EvalMode::InDist, 0)?;
            Ok(SweepRow {
                tau,
                metrics: report.aggregate,
            })
        })
        .collect()
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("tau,rmse,mae,r2\n");
    for r in rows {
        let _ = writeln!(s, "{:?},{}", r.tau, fmt_metrics(&r.metrics));
    }
    s
}
