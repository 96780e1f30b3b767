//! Synthetic benchmark: watertight box-built shapes with known wall
//! thickness and an analytic, equivariant deformation field.

mod field;
mod grid;
mod shapes;

pub use field::{synth_field, FieldSpec};
pub use grid::{breakpoints, mesh_box_solid, refine, Aabb, BoxSolid, GridMesh, GridOracle, NodeClass};
pub use shapes::{gen_shape, Family, GeneratedShape, Post, Rib, ShapeKind, ShapeSpec};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::bundle::{create_dir, Bundle, Manifest, ManifestEntry, Split, MANIFEST_VERSION};
use crate::features::{geodesic_from_gate, Geometry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    /// Shapes are drawn cycling through `families`.
    pub n_shapes: usize,
    pub families: Vec<Family>,
    pub n_conditions: usize,
    /// The last `held_out_shapes` shapes form the unseen-shape test split.
    pub held_out_shapes: usize,
    pub val_fraction: f64,
    pub resolution: usize,
    pub field: FieldSpec,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_shapes: 9,
            families: Family::ALL.to_vec(),
            n_conditions: 3,
            held_out_shapes: 3,
            val_fraction: 0.2,
            resolution: 6,
            field: FieldSpec::default(),
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InfeasibleSpec(m.into()));
        if self.n_shapes == 0 || self.n_conditions == 0 {
            return bad("n_shapes and n_conditions must be at least 1");
        }
        if self.families.is_empty() {
            return bad("families must not be empty");
        }
        if self.held_out_shapes >= self.n_shapes {
            return bad("held_out_shapes must leave at least one seen shape");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        self.field.validate()
    }
}

/// Per-shape node counts: `wall` counts flat-face nodes with a grid-line
/// partner within `t*`, `wide` counts validly paired nodes whose exact
/// inward depth exceeds `t*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeStats {
    pub nodes: usize,
    /// Nodes with a valid computed pairing.
    pub valid: usize,
    pub wall: usize,
    pub wide: usize,
}

/// What the generator records in `manifest.generator`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorInfo {
    pub spec: DatasetSpec,
    pub shapes: Vec<ShapeSpec>,
    pub stats: Vec<ShapeStats>,
}

impl GeneratorInfo {
    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        Ok(serde_json::from_value(m.generator.clone())?)
    }

    /// Oracle wide-node count over valid-pairing nodes, summed over the
    /// samples of `split`.
    pub fn wide_fraction(&self, m: &Manifest, split: Split) -> f64 {
        let (mut wide, mut valid) = (0, 0);
        for e in m.samples.iter().filter(|e| e.split == split) {
            wide += self.stats[e.shape].wide;
            valid += self.stats[e.shape].valid;
        }
        if valid == 0 {
            0.0
        } else {
            wide as f64 / valid as f64
        }
    }
}

fn shape_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Writes `n_shapes x n_conditions` bundles plus `manifest.json` into `out`.
pub fn gen_dataset(spec: &DatasetSpec, out: &Path, seed: u64) -> Result<Manifest> {
    spec.validate()?;
    create_dir(out)?;
    let cond_dim = spec.field.a_weights.len();
    let mut shapes = Vec::with_capacity(spec.n_shapes);
    let mut stats = Vec::with_capacity(spec.n_shapes);
    let mut samples = Vec::new();
    for s in 0..spec.n_shapes {
        let mut rng = shape_rng(seed, s as u64);
        let family = spec.families[s % spec.families.len()];
        let shape_seed: u64 = rng.random();
        let shape_spec = ShapeSpec::sample(family, &mut rng, spec.resolution, shape_seed);
        let shape = gen_shape(&shape_spec)?;
        let geo = Geometry::compute(shape.mesh.clone())?;
        let g = geodesic_from_gate(&geo.mesh, shape.gate)?;
        let classes = shape.oracle.classify(spec.field.t_star);
        stats.push(ShapeStats {
            nodes: geo.mesh.num_vertices(),
            valid: geo.pairing.nodes.iter().filter(|p| p.valid()).count(),
            wall: shape.oracle.interior_walls(spec.field.t_star).len(),
            wide: classes
                .iter()
                .zip(&geo.pairing.nodes)
                .filter(|(c, p)| **c == NodeClass::Wide && p.valid())
                .count(),
        });
        let held_out = s >= spec.n_shapes - spec.held_out_shapes;
        for c in 0..spec.n_conditions {
            let condition: Vec<f64> = (0..cond_dim).map(|_| rng.random::<f64>()).collect();
            let targets = synth_field(&geo.mesh, &geo.normals, &geo.pairing, &g, &condition, &spec.field)?;
            let name = format!("s{s:03}_c{c:02}");
            Bundle {
                mesh: geo.mesh.clone(),
                frame: geo.frame,
                pairing: geo.pairing.clone(),
                gate: shape.gate,
                condition,
                targets,
            }
            .write(&out.join(&name))?;
            samples.push(ManifestEntry {
                name,
                split: if held_out { Split::Test } else { Split::Train },
                shape: s,
                condition: c,
            });
        }
        shapes.push(shape_spec);
    }

    let mut seen: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].split == Split::Train).collect();
    seen.shuffle(&mut shape_rng(seed, u64::MAX));
    let n_val = (spec.val_fraction * seen.len() as f64).round() as usize;
    for &i in &seen[..n_val.min(seen.len().saturating_sub(1))] {
        samples[i].split = Split::Val;
    }

    let info = GeneratorInfo {
        spec: spec.clone(),
        shapes,
        stats,
    };
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed,
        cond_dim,
        samples,
        generator: serde_json::to_value(&info)?,
    };
    manifest.write(out)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Dataset;

    fn small() -> DatasetSpec {
        DatasetSpec {
            n_shapes: 6,
            n_conditions: 4,
            held_out_shapes: 3,
            resolution: 4,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn counts_and_splits() {
        let dir = tempfile::tempdir().unwrap();
        let m = gen_dataset(&small(), dir.path(), 11).unwrap();
        assert_eq!(m.samples.len(), 24);
        let bundles = std::fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
        assert_eq!(bundles, 24);
        let count = |s: Split| m.samples.iter().filter(|e| e.split == s).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (10, 2, 12));
        // a held-out shape never appears in train or val
        assert!(m.samples.iter().all(|e| (e.shape >= 3) == (e.split == Split::Test)));
        let ds = Dataset::load(dir.path()).unwrap();
        assert_eq!(ds.bundles.len(), 24);
        let info = GeneratorInfo::from_manifest(&ds.manifest).unwrap();
        assert_eq!(info.shapes.len(), 6);
        assert!(info.wide_fraction(&m, Split::Train) > 0.0);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let spec = DatasetSpec {
            n_shapes: 3,
            n_conditions: 2,
            held_out_shapes: 1,
            ..small()
        };
        gen_dataset(&spec, a.path(), 4).unwrap();
        gen_dataset(&spec, b.path(), 4).unwrap();
        let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for n in names {
            let (pa, pb) = (a.path().join(&n), b.path().join(&n));
            if pa.is_dir() {
                for f in ["mesh.off", "frame.json", "pairing.csv", "features.json", "targets.csv"] {
                    assert_eq!(std::fs::read(pa.join(f)).unwrap(), std::fs::read(pb.join(f)).unwrap());
                }
            } else {
                assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
            }
        }
    }

    #[test]
    fn bad_spec_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            held_out_shapes: 9,
            ..DatasetSpec::default()
        };
        assert!(matches!(gen_dataset(&spec, dir.path(), 0), Err(Error::InfeasibleSpec(_))));
    }
}
