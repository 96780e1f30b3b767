//! The thickness-gated equivariant mesh network.
//!
//! Every block is a two-layer MLP `Linear(in, d) -> ReLU -> Linear(d, out)`.
//! Per layer `l`, with directed edges `j -> i` aggregated at `i`:
//!
//! ```text
//! e_ij  <- e_ij + f_M([e_ij, z_i, z_j])
//! zs_i  <- z_i + f_V([z_i, sum_j e_ij])
//! et_i  <- I_i * g_M([et_i, zs_i, zs_T(i)])        (valid nodes only)
//! z_i   <- zs_i + g_V([zs_i, et_i or 0])
//! ```
//!
//! with `I_i = sigmoid(alpha (tau - t_i))`. The decoder maps
//! `[combine([z, z_coord]), h_c]` to a displacement in the canonical frame,
//! which is rotated back with the sample's frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamGroup, ParamId, ParamStore, StoredParams, Tensor, Var};
use crate::error::{Error, Result};
use crate::features::{CoordMode, GraphSample, SampleOptions};
use crate::frame::{CanonicalFrame, InverseMode};
use crate::mesh::Point3;
use crate::thickness::ThickFeatureFlags;

/// Initial value of the learnable threshold.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauInit {
    /// Median valid thickness over the training split.
    #[default]
    Median,
    Constant(f64),
}

fn d_layers() -> usize {
    3
}
fn d_hidden() -> usize {
    32
}
fn d_alpha() -> f64 {
    3.0
}
fn d_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "d_layers")]
    pub layers: usize,
    #[serde(default = "d_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub tau_init: TauInit,
    #[serde(default = "d_true")]
    pub use_thickness: bool,
    #[serde(default)]
    pub coord_mode: CoordMode,
    #[serde(default)]
    pub inverse_mode: InverseMode,
    #[serde(default)]
    pub thick_flags: ThickFeatureFlags,
    /// Length of the condition vector; taken from the dataset when 0.
    #[serde(default)]
    pub cond_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: d_layers(),
            hidden_dim: d_hidden(),
            alpha: d_alpha(),
            tau_init: TauInit::Median,
            use_thickness: true,
            coord_mode: CoordMode::Invariant,
            inverse_mode: InverseMode::Vector,
            thick_flags: ThickFeatureFlags::default(),
            cond_dim: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 || self.hidden_dim < 1 {
            return Err(Error::Config("layers and hidden_dim must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.use_thickness && self.thick_flags.dim() == 0 {
            return Err(Error::Config("use_thickness needs at least one thickness feature".into()));
        }
        if let TauInit::Constant(t) = self.tau_init {
            if !t.is_finite() {
                return Err(Error::Config("tau_init must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn sample_options(&self) -> SampleOptions {
        SampleOptions {
            coord_mode: self.coord_mode,
            thick_flags: self.thick_flags,
        }
    }
}

/// Per-column standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardize {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardize {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    fn fit<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]> + Clone) -> Self {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        for r in rows.clone() {
            n += 1;
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        if n == 0 {
            return Self::identity(dim);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    fn apply(&self, rows: usize, data: impl Iterator<Item = f64>) -> Tensor {
        let dim = self.mean.len();
        let v: Vec<f64> = data
            .enumerate()
            .map(|(k, x)| (x - self.mean[k % dim]) / self.std[k % dim])
            .collect();
        Tensor::from_vec(rows, dim, v).expect("standardized shape")
    }
}

/// Input standardization and output scale, fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub node: Standardize,
    pub edge: Standardize,
    pub coord: Standardize,
    pub cond: Standardize,
    pub thick: Standardize,
    /// RMS of the canonical-frame target components.
    pub target_scale: f64,
}

impl Normalizer {
    pub fn identity(config: &ModelConfig) -> Self {
        Self {
            node: Standardize::identity(2),
            edge: Standardize::identity(1),
            coord: Standardize::identity(3),
            cond: Standardize::identity(config.cond_dim),
            thick: Standardize::identity(config.thick_flags.dim()),
            target_scale: 1.0,
        }
    }

    pub fn fit(config: &ModelConfig, samples: &[GraphSample]) -> Self {
        let node = Standardize::fit(2, samples.iter().flat_map(|s| s.node_features.iter().map(|r| &r[..])));
        let edge = Standardize::fit(1, samples.iter().flat_map(|s| s.edge_features.chunks(1)));
        let coord = Standardize::fit(
            3,
            samples
                .iter()
                .flat_map(|s| s.coords.iter().flat_map(|c| c.iter().map(|r| &r[..]))),
        );
        let cond = Standardize::fit(config.cond_dim, samples.iter().map(|s| &s.condition[..]));
        let thick = Standardize::fit(
            config.thick_flags.dim(),
            samples
                .iter()
                .flat_map(|s| s.thickness_edges.iter().map(|e| &e.features[..])),
        );
        let mut sq = 0.0;
        let mut count = 0usize;
        for s in samples {
            for t in canonical_targets(s, config) {
                sq += t.norm_squared();
                count += 3;
            }
        }
        let rms = if count > 0 { (sq / count as f64).sqrt() } else { 0.0 };
        Self {
            node,
            edge,
            coord,
            cond,
            thick,
            target_scale: if rms > 1e-12 { rms } else { 1.0 },
        }
    }
}

/// Frame used to map canonical-frame outputs back: identity when the model
/// consumes raw coordinates.
pub fn output_frame(sample: &GraphSample, config: &ModelConfig) -> CanonicalFrame {
    match config.coord_mode {
        CoordMode::Original => CanonicalFrame::identity(),
        _ => sample.frame,
    }
}

/// Targets mapped into the output frame with the forward law matching the
/// configured inverse mode.
pub fn canonical_targets(sample: &GraphSample, config: &ModelConfig) -> Vec<Point3> {
    let pts: Vec<Point3> = sample.targets.iter().map(|t| Point3::from(*t)).collect();
    output_frame(sample, config).to_invariant_mode(&pts, config.inverse_mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Mlp {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LayerIds {
    edge: Mlp,
    node: Mlp,
    thick: Option<(Mlp, Mlp)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Ids {
    node_enc: Mlp,
    edge_enc: Mlp,
    coord_enc: Option<Mlp>,
    cond_enc: Mlp,
    thick_enc: Option<Mlp>,
    layers: Vec<LayerIds>,
    combine: Mlp,
    decode: Mlp,
    tau: Option<ParamId>,
}

struct Init<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
    d: usize,
}

impl Init<'_> {
    fn tensor(&mut self, rows: usize, cols: usize) -> Tensor {
        let bound = 1.0 / (rows as f64).sqrt();
        let v = (0..rows * cols).map(|_| self.rng.random_range(-bound..bound)).collect();
        Tensor::from_vec(rows, cols, v).expect("init shape")
    }

    fn mlp(&mut self, name: &str, input: usize, output: usize) -> Mlp {
        let d = self.d;
        let w1 = self.tensor(input, d);
        let w2 = self.tensor(d, output);
        Mlp {
            w1: self.store.add(&format!("{name}.w1"), w1, ParamGroup::Weights),
            b1: self.store.add(&format!("{name}.b1"), Tensor::zeros(1, d), ParamGroup::Weights),
            w2: self.store.add(&format!("{name}.w2"), w2, ParamGroup::Weights),
            b2: self.store.add(&format!("{name}.b2"), Tensor::zeros(1, output), ParamGroup::Weights),
        }
    }
}

fn mlp(g: &mut Graph, p: &ParamStore, m: &Mlp, x: Var) -> Result<Var> {
    let (w1, b1, w2, b2) = (g.param(p, m.w1), g.param(p, m.b1), g.param(p, m.w2), g.param(p, m.b2));
    let h = g.linear(x, w1, b1)?;
    let h = g.relu(h);
    g.linear(h, w2, b2)
}

/// Network output for one sample, both frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub p_inv: Vec<Point3>,
    pub p_orig: Vec<Point3>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub norm: Normalizer,
    pub params: ParamStore,
    ids: Ids,
}

pub const MODEL_CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointJson {
    format: String,
    version: u32,
    config: ModelConfig,
    normalizer: Normalizer,
    tau: Option<f64>,
    params: StoredParams,
}

impl Model {
    /// Builds a model with freshly initialized weights. `tau0` is the
    /// resolved initial threshold (ignored without thickness edges).
    pub fn new(config: ModelConfig, norm: Normalizer, seed: u64, tau0: f64) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let cf = config.cond_dim;
        let tf = config.thick_flags.dim();
        let mut store = ParamStore::new();
        let mut init = Init {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
            d,
        };
        let node_enc = init.mlp("enc.node", 2, d);
        let edge_enc = init.mlp("enc.edge", 1, d);
        let coord_enc = (config.coord_mode != CoordMode::None).then(|| init.mlp("enc.coord", 3, d));
        let cond_enc = init.mlp("enc.cond", cf, d);
        let thick_enc = config.use_thickness.then(|| init.mlp("enc.thick", tf, d));
        let layers = (0..config.layers)
            .map(|l| LayerIds {
                edge: init.mlp(&format!("layer{l}.surf_edge"), 3 * d, d),
                node: init.mlp(&format!("layer{l}.surf_node"), 2 * d, d),
                thick: config.use_thickness.then(|| {
                    (
                        init.mlp(&format!("layer{l}.thick_edge"), 3 * d, d),
                        init.mlp(&format!("layer{l}.thick_node"), 2 * d, d),
                    )
                }),
            })
            .collect();
        let combine = init.mlp("combine", 2 * d, d);
        let decode = init.mlp("decode", 2 * d, 3);
        let tau = config
            .use_thickness
            .then(|| store.add("tau", Tensor::scalar(tau0), ParamGroup::Tau));
        Ok(Self {
            config,
            norm,
            params: store,
            ids: Ids {
                node_enc,
                edge_enc,
                coord_enc,
                cond_enc,
                thick_enc,
                layers,
                combine,
                decode,
                tau,
            },
        })
    }

    pub fn tau(&self) -> Option<f64> {
        self.ids.tau.map(|id| self.params.get(id).value.item())
    }

    pub fn tau_id(&self) -> Option<ParamId> {
        self.ids.tau
    }

    pub fn set_tau(&mut self, tau: f64) {
        if let Some(id) = self.ids.tau {
            self.params.get_mut(id).value = Tensor::scalar(tau);
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn check_sample(&self, s: &GraphSample) -> Result<()> {
        let c = &self.config;
        if s.coord_mode != c.coord_mode {
            return Err(Error::Mismatch(format!(
                "sample coord_mode {:?}, model expects {:?}",
                s.coord_mode, c.coord_mode
            )));
        }
        if s.condition.len() != c.cond_dim {
            return Err(Error::Mismatch(format!(
                "condition has {} values, model expects {}",
                s.condition.len(),
                c.cond_dim
            )));
        }
        if c.use_thickness {
            if let Some(e) = s.thickness_edges.iter().find(|e| e.features.len() != c.thick_flags.dim()) {
                return Err(Error::Mismatch(format!(
                    "thickness edge of node {} has {} features, model expects {}",
                    e.node,
                    e.features.len(),
                    c.thick_flags.dim()
                )));
            }
        }
        Ok(())
    }

    /// Normalized canonical-frame prediction (`N x 3`) using `params`.
    pub fn forward_with(&self, g: &mut Graph, params: &ParamStore, s: &GraphSample) -> Result<Var> {
        self.check_sample(s)?;
        let n = s.num_nodes;
        let d = self.config.hidden_dim;
        let ids = &self.ids;
        let norm = &self.norm;

        let x_node = g.constant(norm.node.apply(n, s.node_features.iter().flatten().copied()));
        let x_edge = g.constant(norm.edge.apply(s.directed_edges.len(), s.edge_features.iter().copied()));
        let x_cond = g.constant(norm.cond.apply(1, s.condition.iter().copied()));
        let src: Vec<usize> = s.directed_edges.iter().map(|e| e[0]).collect();
        let dst: Vec<usize> = s.directed_edges.iter().map(|e| e[1]).collect();

        let mut z = mlp(g, params, &ids.node_enc, x_node)?;
        let mut e = mlp(g, params, &ids.edge_enc, x_edge)?;
        let hc = mlp(g, params, &ids.cond_enc, x_cond)?;
        let z_coord = match (&ids.coord_enc, &s.coords) {
            (Some(enc), Some(c)) => {
                let x = g.constant(norm.coord.apply(n, c.iter().flatten().copied()));
                mlp(g, params, enc, x)?
            }
            (None, _) => g.constant(Tensor::zeros(n, d)),
            (Some(_), None) => return Err(Error::Mismatch("sample has no coordinates".into())),
        };

        let thick = match (&ids.thick_enc, ids.tau) {
            (Some(enc), Some(tau_id)) => {
                let m = s.thickness_edges.len();
                let x = g.constant(norm.thick.apply(m, s.thickness_edges.iter().flat_map(|e| e.features.iter().copied())));
                let et = mlp(g, params, enc, x)?;
                let t: Vec<f64> = s.thickness_edges.iter().map(|e| e.thickness).collect();
                let tau = g.param(params, tau_id);
                let logits = g.scalar_affine(tau, &t, self.config.alpha)?;
                let gate = g.sigmoid(logits);
                let nodes: Vec<usize> = s.thickness_edges.iter().map(|e| e.node).collect();
                let partners: Vec<usize> = s.thickness_edges.iter().map(|e| e.partner).collect();
                Some((et, gate, nodes, partners))
            }
            _ => None,
        };
        let (mut et, gate, nodes, partners) = match thick {
            Some((et, gate, nodes, partners)) => (Some(et), Some(gate), nodes, partners),
            None => (None, None, Vec::new(), Vec::new()),
        };

        for layer in &ids.layers {
            let zi = g.gather_rows(z, &dst)?;
            let zj = g.gather_rows(z, &src)?;
            let cat = g.concat_cols(&[e, zi, zj])?;
            let upd = mlp(g, params, &layer.edge, cat)?;
            e = g.add(e, upd)?;
            let agg = g.scatter_add_rows(e, &dst, n)?;
            let cat = g.concat_cols(&[z, agg])?;
            let upd = mlp(g, params, &layer.node, cat)?;
            let zs = g.add(z, upd)?;

            z = match (&layer.thick, et, gate) {
                (Some((edge_mlp, node_mlp)), Some(et_prev), Some(gate)) => {
                    let a = g.gather_rows(zs, &nodes)?;
                    let b = g.gather_rows(zs, &partners)?;
                    let cat = g.concat_cols(&[et_prev, a, b])?;
                    let msg = mlp(g, params, edge_mlp, cat)?;
                    let et_new = g.row_scale(msg, gate)?;
                    et = Some(et_new);
                    let full = g.scatter_add_rows(et_new, &nodes, n)?;
                    let cat = g.concat_cols(&[zs, full])?;
                    let upd = mlp(g, params, node_mlp, cat)?;
                    g.add(zs, upd)?
                }
                _ => zs,
            };
        }

        let cat = g.concat_cols(&[z, z_coord])?;
        let zf = mlp(g, params, &ids.combine, cat)?;
        let hcb = g.gather_rows(hc, &vec![0; n])?;
        let cat = g.concat_cols(&[zf, hcb])?;
        mlp(g, params, &ids.decode, cat)
    }

    pub fn forward(&self, g: &mut Graph, s: &GraphSample) -> Result<Var> {
        self.forward_with(g, &self.params, s)
    }

    /// Canonical-frame targets divided by the target scale.
    pub fn normalized_targets(&self, s: &GraphSample) -> Tensor {
        let scale = self.norm.target_scale;
        let rows: Vec<[f64; 3]> = canonical_targets(s, &self.config)
            .iter()
            .map(|t| [t.x / scale, t.y / scale, t.z / scale])
            .collect();
        Tensor::from_rows(&rows)
    }

    /// MSE in normalized canonical-frame units.
    pub fn loss_with(&self, g: &mut Graph, params: &ParamStore, s: &GraphSample) -> Result<Var> {
        let p = self.forward_with(g, params, s)?;
        g.mse(p, &self.normalized_targets(s))
    }

    pub fn predict(&self, s: &GraphSample) -> Result<Prediction> {
        let mut g = Graph::new();
        let p = self.forward(&mut g, s)?;
        let scale = self.norm.target_scale;
        let out = g.value(p);
        let p_inv: Vec<Point3> = (0..out.rows())
            .map(|r| Point3::new(out.get(r, 0), out.get(r, 1), out.get(r, 2)) * scale)
            .collect();
        let p_orig = output_frame(s, &self.config).from_invariant(&p_inv, self.config.inverse_mode);
        Ok(Prediction { p_inv, p_orig })
    }

    pub fn to_checkpoint_json(&self) -> String {
        let ck = CheckpointJson {
            format: "temnn-checkpoint".into(),
            version: MODEL_CHECKPOINT_VERSION,
            config: self.config.clone(),
            normalizer: self.norm.clone(),
            tau: self.tau(),
            params: self.params.to_stored(),
        };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    pub fn from_checkpoint_json(s: &str) -> Result<Self> {
        let ck: CheckpointJson = serde_json::from_str(s)?;
        if ck.format != "temnn-checkpoint" || ck.version != MODEL_CHECKPOINT_VERSION {
            return Err(Error::Mismatch(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let mut m = Model::new(ck.config, ck.normalizer, 0, ck.tau.unwrap_or(0.0))?;
        m.params.load_stored(&ck.params)?;
        if m.tau() != ck.tau {
            return Err(Error::Mismatch("checkpoint tau disagrees with its parameter map".into()));
        }
        Ok(m)
    }
}

/// Median of valid thicknesses (lower middle element for even counts).
pub fn median_thickness(samples: &[GraphSample]) -> Option<f64> {
    let mut t: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.thickness_edges.iter().map(|e| e.thickness))
        .collect();
    if t.is_empty() {
        return None;
    }
    t.sort_by(f64::total_cmp);
    Some(t[(t.len() - 1) / 2])
}

impl TauInit {
    pub fn resolve(&self, train: &[GraphSample]) -> f64 {
        match *self {
            TauInit::Constant(t) => t,
            TauInit::Median => median_thickness(train).unwrap_or(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::features::{assemble_sample, Geometry};
    use crate::mesh::Mesh;
    use crate::thickness::tests_support::two_layer_plate;

    fn plate_sample(config: &ModelConfig) -> GraphSample {
        let (mesh, _) = two_layer_plate(4, 0.6);
        // skew the plate so the frame is not degenerate
        let v: Vec<Point3> = mesh
            .vertices()
            .iter()
            .map(|p| Point3::new(p.x * 1.3 + 0.2 * p.y * p.y, p.y * 0.8 + 0.05 * p.x * p.x, p.z + 0.1 * p.x))
            .collect();
        let mesh = Mesh::new(v, mesh.faces().to_vec()).unwrap();
        let geo = Geometry::compute(mesh).unwrap();
        let targets: Vec<Point3> = (0..geo.mesh.num_vertices())
            .map(|i| Point3::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), 0.1 * i as f64))
            .collect();
        assemble_sample(
            &geo.mesh,
            &geo.normals,
            &geo.frame,
            &geo.pairing,
            0,
            &(0..config.cond_dim).map(|k| 0.3 - 0.7 * k as f64).collect::<Vec<_>>(),
            &targets,
            &config.sample_options(),
        )
        .unwrap()
    }

    #[test]
    fn parameter_count_matches_hand_enumeration() {
        let config = ModelConfig {
            cond_dim: 4,
            ..Default::default()
        };
        let m = Model::new(config, Normalizer::identity(&ModelConfig { cond_dim: 4, ..Default::default() }), 0, 1.0).unwrap();
        // 2-layer MLP in -> 32 -> out has 32 in + 32 + 32 out + out scalars
        let mlp = |i: usize, o: usize| 32 * i + 32 + 32 * o + o;
        let encoders = mlp(2, 32) + mlp(1, 32) + mlp(3, 32) + mlp(4, 32) + mlp(2, 32);
        let per_layer = mlp(96, 32) + mlp(64, 32) + mlp(96, 32) + mlp(64, 32);
        let expected = encoders + 3 * per_layer + mlp(64, 32) + mlp(64, 3) + 1;
        assert_eq!(expected, 54916);
        assert_eq!(m.num_params(), expected);
    }

    #[test]
    fn init_is_deterministic_and_tau_constant() {
        let config = ModelConfig {
            cond_dim: 2,
            tau_init: TauInit::Constant(2.0),
            ..Default::default()
        };
        let n = Normalizer::identity(&config);
        let tau0 = config.tau_init.resolve(&[]);
        let a = Model::new(config.clone(), n.clone(), 7, tau0).unwrap();
        let b = Model::new(config, n, 7, tau0).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.tau(), Some(2.0));
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let config = ModelConfig {
            cond_dim: 2,
            hidden_dim: 8,
            ..Default::default()
        };
        let s = plate_sample(&config);
        let m = Model::new(config.clone(), Normalizer::fit(&config, std::slice::from_ref(&s)), 1, 0.6).unwrap();
        let p1 = m.predict(&s).unwrap();
        let p2 = m.predict(&s).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1.p_inv.len(), s.num_nodes);
    }

    #[test]
    fn zero_weights_give_zero_embeddings_and_point_mode_center() {
        let config = ModelConfig {
            cond_dim: 1,
            hidden_dim: 4,
            inverse_mode: InverseMode::Point,
            ..Default::default()
        };
        let s = plate_sample(&config);
        let mut m = Model::new(config.clone(), Normalizer::identity(&config), 3, 1.0).unwrap();
        m.params.iter_mut().for_each(|p| p.value.fill(0.0));
        let p = m.predict(&s).unwrap();
        for (pi, po) in p.p_inv.iter().zip(&p.p_orig) {
            assert_eq!(*pi, Point3::zeros());
            assert_eq!(*po, s.frame.center);
        }
    }

    #[test]
    fn without_thickness_has_no_tau() {
        let config = ModelConfig {
            cond_dim: 1,
            use_thickness: false,
            ..Default::default()
        };
        let m = Model::new(config, Normalizer::identity(&ModelConfig::default()), 0, 1.0).unwrap();
        assert_eq!(m.tau(), None);
        assert!(m.params.iter().all(|p| !p.name.contains("thick")));
    }

    #[test]
    fn sample_mismatch_is_reported() {
        let config = ModelConfig {
            cond_dim: 2,
            ..Default::default()
        };
        let s = plate_sample(&config);
        let other = ModelConfig {
            cond_dim: 3,
            ..Default::default()
        };
        let m = Model::new(other.clone(), Normalizer::identity(&other), 0, 1.0).unwrap();
        assert!(matches!(m.predict(&s), Err(Error::Mismatch(_))));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let config = ModelConfig {
            cond_dim: 2,
            hidden_dim: 6,
            ..Default::default()
        };
        let s = plate_sample(&config);
        let m = Model::new(config.clone(), Normalizer::fit(&config, std::slice::from_ref(&s)), 5, 0.4).unwrap();
        let js = m.to_checkpoint_json();
        let back = Model::from_checkpoint_json(&js).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.predict(&s).unwrap(), m.predict(&s).unwrap());
        assert_eq!(back.to_checkpoint_json(), js);
    }

    #[test]
    fn small_model_gradients() {
        let config = ModelConfig {
            cond_dim: 2,
            hidden_dim: 5,
            layers: 2,
            ..Default::default()
        };
        let s = plate_sample(&config);
        // identity normalizer keeps every ReLU input generic (away from 0)
        let m = Model::new(config.clone(), Normalizer::identity(&config), 11, 0.55).unwrap();
        let mut store = m.params.clone();
        let report = grad_check(&mut store, |g, p| m.loss_with(g, p, &s), 1e-6, 12, 0).unwrap();
        assert!(report.max_rel_err() < 1e-4, "{:?}", report.worst());
        assert!(report.max_for("tau").is_some());
    }
}
