use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Point3;

/// Error statistics over flattened vector components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// Missing when the targets have zero variance.
    pub r2: Option<f64>,
}

/// RMSE, MAE and R^2 over the flattened `N x 3` residuals, with the mean
/// taken over all `3N` target components.
pub fn compute_metrics(pred: &[Point3], target: &[Point3]) -> Result<Metrics> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            what: "predictions",
            expected: target.len(),
            got: pred.len(),
        });
    }
    let n = 3 * target.len();
    if n == 0 {
        return Ok(Metrics {
            rmse: 0.0,
            mae: 0.0,
            r2: None,
        });
    }
    let (mut sq, mut abs) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(target) {
        for k in 0..3 {
            let e = p[k] - t[k];
            sq += e * e;
            abs += e.abs();
        }
    }
    let mean = target.iter().map(|t| t.x + t.y + t.z).sum::<f64>() / n as f64;
    let ss_tot: f64 = target.iter().flat_map(|t| [t.x, t.y, t.z]).map(|y| (y - mean).powi(2)).sum();
    Ok(Metrics {
        rmse: (sq / n as f64).sqrt(),
        mae: abs / n as f64,
        r2: (ss_tot > 0.0).then(|| 1.0 - sq / ss_tot),
    })
}
