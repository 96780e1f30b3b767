use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, NormalField, Point3};
use crate::thickness::ThicknessPairing;

/// Coefficients of the analytic deformation field
/// `c1 a(c) exp(-t/s) [t <= t*] n + c2 (g / max g) u`, with
/// `a(c) = a_bias + a_weights . c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub c1: f64,
    pub c2: f64,
    pub s: f64,
    pub t_star: f64,
    pub a_bias: f64,
    pub a_weights: Vec<f64>,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self {
            c1: 3.0,
            c2: 0.5,
            s: 2.0,
            t_star: 4.0,
            a_bias: 0.5,
            a_weights: vec![1.0, 0.5],
        }
    }
}

impl FieldSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0) || !(self.t_star > 0.0) {
            return Err(Error::InfeasibleSpec(format!(
                "field needs s > 0 and t* > 0, got s={} t*={}",
                self.s, self.t_star
            )));
        }
        let all = [self.c1, self.c2, self.a_bias].into_iter().chain(self.a_weights.iter().copied());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InfeasibleSpec("field coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn amplitude(&self, condition: &[f64]) -> Result<f64> {
        if condition.len() != self.a_weights.len() {
            return Err(Error::LengthMismatch {
                what: "condition",
                expected: self.a_weights.len(),
                got: condition.len(),
            });
        }
        Ok(self.a_bias + self.a_weights.iter().zip(condition).map(|(w, c)| w * c).sum::<f64>())
    }
}

/// Per-node displacement targets. Nodes without a valid pairing get only the
/// radial term; `x_cm` is the vertex mean.
pub fn synth_field(
    mesh: &Mesh,
    normals: &NormalField,
    pairing: &ThicknessPairing,
    geodesic: &[f64],
    condition: &[f64],
    spec: &FieldSpec,
) -> Result<Vec<Point3>> {
    spec.validate()?;
    let n = mesh.num_vertices();
    for (what, got) in [("pairing", pairing.len()), ("geodesic", geodesic.len()), ("node normals", normals.node.len())] {
        if got != n {
            return Err(Error::LengthMismatch { what, expected: n, got });
        }
    }
    let a = spec.amplitude(condition)?;
    let x_cm = crate::frame::center_of_mass(mesh.vertices())?;
    let g_max = geodesic.iter().copied().fold(0.0, f64::max);
    Ok((0..n)
        .map(|i| {
            let mut d = Point3::zeros();
            let p = &pairing.nodes[i];
            if p.valid() && p.thickness <= spec.t_star {
                d += spec.c1 * a * (-p.thickness / spec.s).exp() * normals.node[i];
            }
            let r = mesh.vertices()[i] - x_cm;
            let rn = r.norm();
            if g_max > 0.0 && rn > 0.0 {
                d += spec.c2 * (geodesic[i] / g_max) * (r / rn);
            }
            d
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{geodesic_from_gate, Geometry};
    use crate::synth::shapes::{gen_shape, ShapeKind, ShapeSpec};
    use crate::thickness::find_thickness_pairs;
    use crate::transform::random_rigid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_plate() -> (Mesh, usize) {
        let spec = ShapeSpec {
            shape: ShapeKind::Plate {
                length: 10.0,
                width: 10.0,
                thickness: 1.5,
                post: None,
            },
            resolution: 6,
            gate_anchor: [0.0, 0.0, 0.0],
            seed: 0,
        };
        let g = gen_shape(&spec).unwrap();
        (g.mesh, g.gate)
    }

    #[test]
    fn c2_zero_plate_is_uniform_closed_form() {
        let (mesh, gate) = flat_plate();
        let normals = NormalField::compute(&mesh).unwrap();
        let pairing = find_thickness_pairs(&mesh, &normals);
        let g = geodesic_from_gate(&mesh, gate).unwrap();
        let spec = FieldSpec {
            c2: 0.0,
            ..FieldSpec::default()
        };
        let c = [0.2, 0.6];
        let d = synth_field(&mesh, &normals, &pairing, &g, &c, &spec).unwrap();
        let expected = 3.0 * (0.5 + 0.2 + 0.3) * (-1.5f64 / 2.0).exp();
        let mut interior = 0;
        for (i, p) in mesh.vertices().iter().enumerate() {
            if p.x > 0.0 && p.x < 10.0 && p.y > 0.0 && p.y < 10.0 && (p.z == 0.0 || p.z == 1.5) {
                interior += 1;
                assert!((d[i].norm() - expected).abs() < 1e-12);
            }
        }
        assert_eq!(interior, 2 * 16);
    }

    #[test]
    fn wide_nodes_are_purely_radial() {
        let (mesh, gate) = flat_plate();
        let normals = NormalField::compute(&mesh).unwrap();
        let pairing = find_thickness_pairs(&mesh, &normals);
        let g = geodesic_from_gate(&mesh, gate).unwrap();
        let d = synth_field(&mesh, &normals, &pairing, &g, &[0.0, 0.0], &FieldSpec::default()).unwrap();
        let cm = crate::frame::center_of_mass(mesh.vertices()).unwrap();
        for (i, p) in pairing.nodes.iter().enumerate() {
            if p.valid() && p.thickness > 4.0 {
                let r = (mesh.vertices()[i] - cm).normalize();
                assert!((d[i] - d[i].norm() * r).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn field_commutes_with_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = ShapeSpec::sample(crate::synth::Family::HollowBox, &mut rng, 5, 0);
        let shape = gen_shape(&spec).unwrap();
        let field = FieldSpec::default();
        let c = [0.4, 0.9];
        let base = Geometry::compute(shape.mesh.clone()).unwrap();
        let g0 = geodesic_from_gate(&base.mesh, shape.gate).unwrap();
        let d0 = synth_field(&base.mesh, &base.normals, &base.pairing, &g0, &c, &field).unwrap();
        for _ in 0..5 {
            let t = random_rigid(&mut rng, true, 10.0);
            let moved = Geometry::compute(base.mesh.transformed(&t.q, &t.g)).unwrap();
            let g1 = geodesic_from_gate(&moved.mesh, shape.gate).unwrap();
            let d1 = synth_field(&moved.mesh, &moved.normals, &moved.pairing, &g1, &c, &field).unwrap();
            for (a, b) in d0.iter().zip(&d1) {
                assert!((t.q * a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let (mesh, gate) = flat_plate();
        let normals = NormalField::compute(&mesh).unwrap();
        let pairing = find_thickness_pairs(&mesh, &normals);
        let g = geodesic_from_gate(&mesh, gate).unwrap();
        let bad = FieldSpec {
            s: 0.0,
            ..FieldSpec::default()
        };
        assert!(synth_field(&mesh, &normals, &pairing, &g, &[0.0, 0.0], &bad).is_err());
        assert!(synth_field(&mesh, &normals, &pairing, &g, &[0.0], &FieldSpec::default()).is_err());
    }
}
