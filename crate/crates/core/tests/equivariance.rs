use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use temnn::features::{assemble_sample, Geometry, GraphSample};
use temnn::frame::InverseMode;
use temnn::mesh::{Mesh, Point3};
use temnn::model::{Model, ModelConfig, Normalizer};
use temnn::synth::{gen_shape, Family, ShapeSpec};
use temnn::transform::random_rigid;

fn shape(family: Family, seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_shape(&ShapeSpec::sample(family, &mut rng, 4, seed)).unwrap().mesh
}

fn sample(mesh: &Mesh, gate: usize, config: &ModelConfig) -> GraphSample {
    let geo = Geometry::compute(mesh.clone()).unwrap();
    let zeros = vec![Point3::zeros(); mesh.num_vertices()];
    assemble_sample(&geo.mesh, &geo.normals, &geo.frame, &geo.pairing, gate, &[0.1, 0.9], &zeros, &config.sample_options()).unwrap()
}

fn model(inverse_mode: InverseMode) -> Model {
    let config = ModelConfig {
        layers: 2,
        hidden_dim: 16,
        cond_dim: 2,
        inverse_mode,
        ..ModelConfig::default()
    };
    Model::new(config.clone(), Normalizer::identity(&config), 9, 2.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pairing_is_invariant_under_rigid_motion(seed in 0u64..1000, fam in 0usize..3) {
        let mesh = shape(Family::ALL[fam], seed % 7);
        let base = Geometry::compute(mesh.clone()).unwrap().pairing;
        let t = random_rigid(&mut ChaCha8Rng::seed_from_u64(seed), true, 25.0);
        let moved = Geometry::compute(mesh.transformed(&t.q, &t.g)).unwrap().pairing;
        let tol = 1e-9 * mesh.bbox_diagonal();
        for (a, b) in base.nodes.iter().zip(&moved.nodes) {
            prop_assert_eq!(a.valid(), b.valid());
            if a.partner != b.partner {
                // only an exact tie may flip under round-off
                prop_assert!(a.near_tie || b.near_tie);
            }
            prop_assert!((a.thickness - b.thickness).abs() <= tol || a.near_tie);
        }
    }

    #[test]
    fn prediction_is_equivariant(seed in 0u64..1000, fam in 0usize..3, reflect in any::<bool>()) {
        let mesh = shape(Family::ALL[fam], 3);
        let t = random_rigid(&mut ChaCha8Rng::seed_from_u64(seed), reflect, 50.0);
        let moved = mesh.transformed(&t.q, &t.g);
        for mode in [InverseMode::Point, InverseMode::Vector] {
            let m = model(mode);
            let p = m.predict(&sample(&mesh, 2, &m.config)).unwrap().p_orig;
            let q = m.predict(&sample(&moved, 2, &m.config)).unwrap().p_orig;
            for (a, b) in q.iter().zip(&p) {
                let expected = match mode {
                    InverseMode::Point => t.q * b + t.g,
                    InverseMode::Vector => t.q * b,
                };
                prop_assert!((a - expected).amax() < 1e-6);
            }
        }
    }
}

#[test]
fn prediction_commutes_with_relabelling() {
    for family in Family::ALL {
        let mesh = shape(family, 5);
        let n = mesh.num_vertices();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        let relabelled = mesh.permuted(&perm).unwrap();
        let m = model(InverseMode::Vector);
        let gate = 4;
        let p = m.predict(&sample(&mesh, gate, &m.config)).unwrap().p_orig;
        let q = m.predict(&sample(&relabelled, perm[gate], &m.config)).unwrap().p_orig;
        for (old, &new) in perm.iter().enumerate() {
            assert!((q[new] - p[old]).amax() < 1e-9, "{family:?} node {old}");
        }
    }
}

#[test]
fn invariant_inputs_do_not_change_under_motion() {
    let mesh = shape(Family::RibbedPlate, 2);
    let config = ModelConfig {
        cond_dim: 2,
        ..ModelConfig::default()
    };
    let a = sample(&mesh, 0, &config);
    let t = random_rigid(&mut ChaCha8Rng::seed_from_u64(8), true, 30.0);
    let b = sample(&mesh.transformed(&t.q, &t.g), 0, &config);
    assert_eq!(a.directed_edges, b.directed_edges);
    for (x, y) in a.edge_features.iter().zip(&b.edge_features) {
        assert!((x - y).abs() < 1e-9);
    }
    for (x, y) in a.node_features.iter().zip(&b.node_features) {
        assert!((x[0] - y[0]).abs() < 1e-9 && (x[1] - y[1]).abs() < 1e-9);
    }
    for (x, y) in a.coords.unwrap().iter().zip(&b.coords.unwrap()) {
        for k in 0..3 {
            assert!((x[k] - y[k]).abs() < 1e-7);
        }
    }
}
