use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamStore, Var};
use crate::error::Result;

/// Absolute floor in the relative-error denominator, so entries whose true
/// gradient is ~0 are judged by absolute error instead.
pub const GRAD_CHECK_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }

    /// Largest error among entries of the named parameter.
    pub fn max_for(&self, param: &str) -> Option<f64> {
        self.entries
            .iter()
            .filter(|e| e.param == param)
            .map(|e| e.rel_err)
            .reduce(f64::max)
    }
}

fn eval<F>(store: &ParamStore, f: &mut F) -> Result<f64>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let l = f(&mut g, store)?;
    Ok(g.value(l).item())
}

/// Central-difference check of reverse-mode gradients.
///
/// `f` builds the scalar loss on a fresh graph from the current parameter
/// values. Parameters with more than `max_per_param` entries are checked on
/// a seeded random subsample of that size. Gradients in `store` are
/// overwritten with the analytic values.
pub fn grad_check<F>(store: &mut ParamStore, mut f: F, eps: f64, max_per_param: usize, seed: u64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    g.backward(loss, store)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = (0..store.len()).map(super::ParamId).collect();
    let mut entries = Vec::new();
    for id in ids {
        let n = store.get(id).value.data().len();
        let mut picks: Vec<usize> = if n <= max_per_param {
            (0..n).collect()
        } else {
            sample(&mut rng, n, max_per_param).into_vec()
        };
        picks.sort_unstable();
        for k in picks {
            let orig = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + eps;
            let lp = eval(store, &mut f)?;
            store.get_mut(id).value.data_mut()[k] = orig - eps;
            let lm = eval(store, &mut f)?;
            store.get_mut(id).value.data_mut()[k] = orig;
            let numeric = (lp - lm) / (2.0 * eps);
            let analytic = store.get(id).grad.data()[k];
            let denom = analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            entries.push(GradCheckEntry {
                param: store.get(id).name.clone(),
                index: k,
                analytic,
                numeric,
                rel_err: (analytic - numeric).abs() / denom,
            });
        }
    }
    Ok(GradCheckReport { entries })
}

#[cfg(test)]
mod tests {
    use super::super::{ParamGroup, Tensor};
    use super::*;
    use rand::Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 5, 4);
        let target = random(&mut rng, 5, 3);
        let mut store = ParamStore::new();
        let w = store.add("w", random(&mut rng, 4, 3), ParamGroup::Weights);
        let b = store.add("b", random(&mut rng, 1, 3), ParamGroup::Weights);
        let report = grad_check(
            &mut store,
            |g, s| {
                let xv = g.constant(x.clone());
                let (wv, bv) = (g.param(s, w), g.param(s, b));
                let y = g.linear(xv, wv, bv)?;
                g.mse(y, &target)
            },
            1e-6,
            1000,
            0,
        )
        .unwrap();
        assert_eq!(report.entries.len(), 15);
        assert!(report.max_rel_err() < 1e-8, "{:?}", report.worst());
    }

    #[test]
    fn two_layer_mlp_with_every_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, 6, 3);
        let target = random(&mut rng, 4, 2);
        let mut store = ParamStore::new();
        let w1 = store.add("w1", random(&mut rng, 3, 8), ParamGroup::Weights);
        let b1 = store.add("b1", random(&mut rng, 1, 8), ParamGroup::Weights);
        let w2 = store.add("w2", random(&mut rng, 11, 2), ParamGroup::Weights);
        let b2 = store.add("b2", random(&mut rng, 1, 2), ParamGroup::Weights);
        let tau = store.add("tau", Tensor::scalar(0.3), ParamGroup::Tau);
        let offsets = [0.1, 0.9, -0.4, 0.25, 0.6, 1.3];
        let report = grad_check(
            &mut store,
            |g, s| {
                let xv = g.constant(x.clone());
                let (a, b) = (g.param(s, w1), g.param(s, b1));
                let h = g.linear(xv, a, b)?;
                let h = g.relu(h);
                let gathered = g.gather_rows(xv, &[2, 0, 1, 5, 4, 3])?;
                let cat = g.concat_cols(&[h, gathered])?;
                let t = g.param(s, tau);
                let logits = g.scalar_affine(t, &offsets, 3.0)?;
                let gate = g.sigmoid(logits);
                let cat = g.row_scale(cat, gate)?;
                let (c, d) = (g.param(s, w2), g.param(s, b2));
                let y = g.linear(cat, c, d)?;
                let y2 = g.scale(y, 0.7);
                let y = g.add(y, y2)?;
                let y = g.scatter_add_rows(y, &[0, 1, 1, 2, 3, 3], 4)?;
                g.mse(y, &target)
            },
            1e-6,
            1000,
            0,
        )
        .unwrap();
        assert!(report.max_rel_err() < 1e-6, "{:?}", report.worst());
    }

    #[test]
    fn tau_gradient_matches_closed_form() {
        // L = sum_i c_i I_i with I_i = sigmoid(alpha (tau - t_i)); dL/dtau = sum c_i alpha I (1 - I)
        let ts = [1.0, 2.5, 4.0];
        let cs = [1.0, -2.0, 0.5];
        let alpha = 3.0;
        let mut store = ParamStore::new();
        let tau = store.add("tau", Tensor::scalar(2.0), ParamGroup::Tau);
        let build = |g: &mut Graph, s: &ParamStore| -> Result<Var> {
            let t = g.param(s, tau);
            let l = g.scalar_affine(t, &ts, alpha)?;
            let i = g.sigmoid(l);
            let c = g.constant(Tensor::from_vec(3, 1, cs.to_vec()).unwrap());
            let weighted = g.row_scale(c, i)?;
            let total = g.scatter_add_rows(weighted, &[0, 0, 0], 1)?;
            Ok(total)
        };
        let report = grad_check(&mut store, build, 1e-6, 10, 0).unwrap();
        let gate = crate::thickness::ThicknessGate { tau: 2.0, alpha };
        let closed: f64 = ts
            .iter()
            .zip(cs)
            .map(|(&t, c)| c * crate::thickness::thickness_activation_dtau(t, &gate))
            .sum();
        let analytic = store.get(tau).grad.item();
        assert!((analytic - closed).abs() / closed.abs() < 1e-12);
        assert!(report.max_rel_err() < 1e-8);
    }
}
