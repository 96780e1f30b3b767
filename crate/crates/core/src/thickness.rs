//! Thickness node pairs and the sigmoid thickness gate.
//!
//! For every node a ray is cast from its position along the inward normal
//! `-n_i`. The first triangle hit (excluding triangles incident to the node)
//! fixes the projection distance `d`; the partner is the vertex of the hit
//! triangle(s) lying strictly behind the node's tangent plane that is
//! closest to the hit point. Nodes whose ray escapes fall back to the
//! nearest node behind the tangent plane and are flagged.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, NormalField, Point3};

/// Ray-parameter epsilon relative to the bounding-box diagonal.
pub const RAY_EPS_REL: f64 = 1e-9;
/// Barycentric slack so hits exactly on shared edges/vertices are kept.
const BARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodePairing {
    pub partner: Option<usize>,
    /// `||x_i - x_partner||`, zero when invalid.
    pub thickness: f64,
    /// `n_i . n_partner`, zero when invalid.
    pub normal_dot: f64,
    /// Ray parameter at the first hit; zero for the fallback search.
    pub ray_distance: f64,
    /// Partner came from the nearest-node fallback rather than a ray hit.
    pub fallback: bool,
    /// Runner-up candidate was within tolerance of the chosen one.
    pub near_tie: bool,
}

impl NodePairing {
    fn invalid() -> Self {
        Self {
            partner: None,
            thickness: 0.0,
            normal_dot: 0.0,
            ray_distance: 0.0,
            fallback: false,
            near_tie: false,
        }
    }

    pub fn valid(&self) -> bool {
        self.partner.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessPairing {
    pub nodes: Vec<NodePairing>,
}

impl ThicknessPairing {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Thickness of every valid node, in node order.
    pub fn valid_thickness(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter(|p| p.valid())
            .map(|p| p.thickness)
            .collect()
    }

    /// CSV: `node_id,partner_id,thickness,normal_dot,fallback_flag` with
    /// `partner_id = -1` for invalid nodes.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node_id,partner_id,thickness,normal_dot,fallback_flag\n");
        for (i, p) in self.nodes.iter().enumerate() {
            let partner = p.partner.map_or(-1, |j| j as i64);
            let _ = writeln!(
                s,
                "{i},{partner},{:?},{:?},{}",
                p.thickness,
                p.normal_dot,
                u8::from(p.fallback)
            );
        }
        s
    }

    /// Parses [`to_csv`](Self::to_csv) output. Ray distances and tie flags are
    /// not part of the format and come back as zero/false.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut nodes = Vec::new();
        for (row, rec) in rdr.deserialize::<(usize, i64, f64, f64, u8)>().enumerate() {
            let (id, partner, thickness, normal_dot, fb) = rec?;
            if id != row {
                return Err(Error::Parse {
                    line: row + 2,
                    msg: format!("expected node_id {row}, found {id}"),
                });
            }
            nodes.push(NodePairing {
                partner: (partner >= 0).then_some(partner as usize),
                thickness,
                normal_dot,
                ray_distance: 0.0,
                fallback: fb != 0,
                near_tie: false,
            });
        }
        Ok(Self { nodes })
    }
}

/// Möller–Trumbore with inclusive barycentric bounds. Returns the ray
/// parameter for hits with `t > t_min`.
fn ray_triangle(orig: &Point3, dir: &Point3, a: &Point3, b: &Point3, c: &Point3, t_min: f64) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    let scale = e1.norm() * e2.norm();
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv = 1.0 / det;
    let s = orig - a;
    let u = s.dot(&p) * inv;
    if !(-BARY_EPS..=1.0 + BARY_EPS).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -BARY_EPS || u + v > 1.0 + BARY_EPS {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > t_min).then_some(t)
}

fn ray_hits_box(orig: &Point3, dir: &Point3, lo: &Point3, hi: &Point3, pad: f64) -> bool {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        let (l, h) = (lo[k] - pad, hi[k] + pad);
        if dir[k].abs() < 1e-300 {
            if orig[k] < l || orig[k] > h {
                return false;
            }
        } else {
            let a = (l - orig[k]) / dir[k];
            let b = (h - orig[k]) / dir[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    t1 >= t0.max(0.0)
}

/// Lowest-index argmin of distance to `target` over `candidates`, plus a
/// near-tie flag for the runner-up.
fn nearest(points: &[Point3], candidates: impl Iterator<Item = usize>, target: &Point3, tol: f64) -> Option<(usize, bool)> {
    let mut best: Option<(usize, f64)> = None;
    let mut second = f64::INFINITY;
    for j in candidates {
        let d = (points[j] - target).norm();
        match best {
            Some((bj, bd)) if d < bd || (d == bd && j < bj) => {
                second = bd;
                best = Some((j, d));
            }
            Some(_) => second = second.min(d),
            None => best = Some((j, d)),
        }
    }
    best.map(|(j, d)| (j, second - d < tol))
}

pub fn find_thickness_pairs(mesh: &Mesh, normals: &NormalField) -> ThicknessPairing {
    let pts = mesh.vertices();
    let faces = mesh.faces();
    let diag = mesh.bbox_diagonal();
    let eps = RAY_EPS_REL * diag.max(f64::MIN_POSITIVE);
    let tie_tol = 1e-9 * diag;

    let boxes: Vec<(Point3, Point3)> = faces
        .iter()
        .map(|f| {
            let (a, b, c) = (pts[f[0]], pts[f[1]], pts[f[2]]);
            (a.inf(&b).inf(&c), a.sup(&b).sup(&c))
        })
        .collect();

    let nodes = (0..mesh.num_vertices())
        .map(|i| {
            let x = pts[i];
            let n = normals.node[i];
            let dir = -n;
            let incident = &mesh.vertex_faces()[i];
            let behind = |j: usize| j != i && (pts[j] - x).dot(&n) < 0.0;

            let mut hits: Vec<(usize, f64)> = Vec::new();
            for (k, f) in faces.iter().enumerate() {
                if incident.binary_search(&k).is_ok() || !ray_hits_box(&x, &dir, &boxes[k].0, &boxes[k].1, eps) {
                    continue;
                }
                if let Some(t) = ray_triangle(&x, &dir, &pts[f[0]], &pts[f[1]], &pts[f[2]], eps) {
                    hits.push((k, t));
                }
            }
            let first = hits.iter().map(|&(_, t)| t).fold(f64::INFINITY, f64::min);

            let mut chosen = None;
            if first.is_finite() {
                let hit_point = x + dir * first;
                let mut cand: Vec<usize> = hits
                    .iter()
                    .filter(|&&(_, t)| t - first <= tie_tol)
                    .flat_map(|&(k, _)| faces[k])
                    .filter(|&j| behind(j))
                    .collect();
                cand.sort_unstable();
                cand.dedup();
                if let Some((j, tie)) = nearest(pts, cand.into_iter(), &hit_point, tie_tol) {
                    chosen = Some((j, first, false, tie));
                }
            }
            if chosen.is_none() {
                if let Some((j, tie)) = nearest(pts, (0..pts.len()).filter(|&j| behind(j)), &x, tie_tol) {
                    chosen = Some((j, 0.0, true, tie));
                }
            }
            match chosen {
                Some((j, d, fallback, near_tie)) => NodePairing {
                    partner: Some(j),
                    thickness: (x - pts[j]).norm(),
                    normal_dot: n.dot(&normals.node[j]).clamp(-1.0, 1.0),
                    ray_distance: d,
                    fallback,
                    near_tie,
                },
                None => NodePairing::invalid(),
            }
        })
        .collect();
    ThicknessPairing { nodes }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThicknessGate {
    pub tau: f64,
    pub alpha: f64,
}

impl Default for ThicknessGate {
    fn default() -> Self {
        Self { tau: 0.0, alpha: 3.0 }
    }
}

/// `I = 1 / (1 + exp(alpha (t - tau)))`.
pub fn thickness_activation(t: f64, gate: &ThicknessGate) -> f64 {
    crate::autodiff::sigmoid(gate.alpha * (gate.tau - t))
}

/// `dI/dtau = alpha I (1 - I)`.
pub fn thickness_activation_dtau(t: f64, gate: &ThicknessGate) -> f64 {
    let i = thickness_activation(t, gate);
    gate.alpha * i * (1.0 - i)
}

/// Which components of the thickness-edge feature `[t, n_i . n_T]` are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThickFeatureFlags {
    pub use_t: bool,
    pub use_dot: bool,
}

impl Default for ThickFeatureFlags {
    fn default() -> Self {
        Self {
            use_t: true,
            use_dot: true,
        }
    }
}

impl ThickFeatureFlags {
    pub fn dim(&self) -> usize {
        usize::from(self.use_t) + usize::from(self.use_dot)
    }
}

/// One thickness edge `i -> T(v_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessEdge {
    pub node: usize,
    pub partner: usize,
    pub thickness: f64,
    pub features: Vec<f64>,
}

/// Feature vectors for every valid node; invalid nodes get no edge.
pub fn thickness_edge_features(pairing: &ThicknessPairing, normals: &NormalField, flags: ThickFeatureFlags) -> Vec<ThicknessEdge> {
    pairing
        .nodes
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let j = p.partner?;
            let mut features = Vec::with_capacity(2);
            if flags.use_t {
                features.push(p.thickness);
            }
            if flags.use_dot {
                features.push(normals.node[i].dot(&normals.node[j]).clamp(-1.0, 1.0));
            }
            Some(ThicknessEdge {
                node: i,
                partner: j,
                thickness: p.thickness,
                features,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThicknessHistogram {
    /// `bins + 1` ascending bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub tau: f64,
    pub total: usize,
    pub above: usize,
}

impl ThicknessHistogram {
    pub fn fraction_above(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.above as f64 / self.total as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{:?},{:?},{c}", self.edges[k], self.edges[k + 1]);
        }
        s
    }
}

/// Histogram of valid thicknesses and the fraction strictly above `tau`.
pub fn thickness_histogram(thickness: &[f64], tau: f64, bins: usize) -> ThicknessHistogram {
    let bins = bins.max(1);
    let hi = thickness.iter().copied().fold(0.0f64, f64::max);
    let width = if hi > 0.0 { hi / bins as f64 } else { 1.0 };
    let edges = (0..=bins).map(|k| k as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &t in thickness {
        let k = ((t / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    ThicknessHistogram {
        edges,
        counts,
        tau,
        total: thickness.len(),
        above: thickness.iter().filter(|&&t| t > tau).count(),
    }
}



#[cfg(test)]
mod tests {
    use super::tests_support::two_layer_plate;
    use super::*;
    use crate::mesh::fixtures::triangle;

    #[test]
    fn plate_pairs_vertically() {
        let h = 0.5;
        let n = 6;
        let (mesh, truth) = two_layer_plate(n, h);
        assert!(crate::mesh::validate_watertight(&mesh).watertight);
        let normals = NormalField::compute(&mesh).unwrap();
        let pairing = find_thickness_pairs(&mesh, &normals);
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                for l in 0..2 {
                    let k = l * n * n + j * n + i;
                    let p = pairing.nodes[k];
                    assert_eq!(p.partner, Some(truth[k]), "node {k}");
                    assert!((p.thickness - h).abs() < 1e-12);
                    assert!((p.normal_dot + 1.0).abs() < 1e-12);
                    assert!(!p.fallback);
                }
            }
        }
        let edges = thickness_edge_features(&pairing, &normals, ThickFeatureFlags::default());
        let inner = edges.iter().find(|e| e.node == n + 1).unwrap();
        assert!((inner.features[0] - h).abs() < 1e-12 && (inner.features[1] + 1.0).abs() < 1e-12);
        let only_t = thickness_edge_features(&pairing, &normals, ThickFeatureFlags { use_t: true, use_dot: false });
        assert_eq!(only_t[0].features.len(), 1);
    }

    #[test]
    fn pairing_invariants_hold_everywhere() {
        let (mesh, _) = two_layer_plate(5, 0.7);
        let normals = NormalField::compute(&mesh).unwrap();
        let pairing = find_thickness_pairs(&mesh, &normals);
        for (i, p) in pairing.nodes.iter().enumerate() {
            let j = p.partner.expect("closed plate pairs every node");
            assert_ne!(i, j);
            let x = mesh.vertices();
            assert!((x[j] - x[i]).dot(&normals.node[i]) < 0.0);
            assert_eq!(p.thickness, (x[i] - x[j]).norm());
            assert!((-1.0..=1.0).contains(&p.normal_dot));
            assert!(p.thickness > 0.0);
        }
    }

    #[test]
    fn open_triangle_has_no_pairs() {
        let m = triangle();
        let normals = NormalField::compute(&m).unwrap();
        let pairing = find_thickness_pairs(&m, &normals);
        assert!(pairing.nodes.iter().all(|p| !p.valid()));
    }

    #[test]
    fn ray_cast_agrees_with_brute_force() {
        let (mesh, _) = two_layer_plate(7, 0.9);
        let normals = NormalField::compute(&mesh).unwrap();
        let pairing = find_thickness_pairs(&mesh, &normals);
        let mut agree = 0;
        let mut valid = 0;
        for (i, p) in pairing.nodes.iter().enumerate() {
            if let Some(j) = p.partner {
                valid += 1;
                let (bj, bd, second) = oracle::brute_force_partner(&mesh, &normals, i, p.ray_distance).unwrap();
                if bj == j || (second - bd).abs() < 1e-9 {
                    agree += 1;
                }
            }
        }
        assert!(agree as f64 >= 0.99 * valid as f64, "{agree}/{valid}");
    }

    #[test]
    fn activation_values() {
        let g = ThicknessGate { tau: 2.0, alpha: 3.0 };
        assert_eq!(thickness_activation(2.0, &g), 0.5);
        let far = thickness_activation(12.0, &g);
        assert!((far - 1.0 / (1.0 + 30f64.exp())).abs() < 1e-25);
        assert!((far - 9.357622968840175e-14).abs() < 1e-24);
        let near = thickness_activation(1.0, &g);
        assert!((near - 0.9525741268224334).abs() < 1e-15);
        assert!(thickness_activation(1e6, &g) > 0.0 || thickness_activation(1e6, &g) == 0.0);
        assert!(thickness_activation(-1e6, &g) <= 1.0);
        // derivative against the closed form
        let d = thickness_activation_dtau(1.0, &g);
        let h = 1e-6;
        let fd = (thickness_activation(1.0, &ThicknessGate { tau: 2.0 + h, ..g })
            - thickness_activation(1.0, &ThicknessGate { tau: 2.0 - h, ..g }))
            / (2.0 * h);
        assert!((d - fd).abs() < 1e-8);
    }

    #[test]
    fn activation_is_strictly_decreasing_and_bounded() {
        let g = ThicknessGate { tau: 5.68, alpha: 3.0 };
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let t = k as f64 * 0.05;
            let i = thickness_activation(t, &g);
            assert!(i > 0.0 && i < 1.0);
            assert!(i < prev);
            prev = i;
        }
    }

    #[test]
    fn histogram_fractions() {
        let h = thickness_histogram(&[1.0; 10], 2.0, 4);
        assert_eq!(h.fraction_above(), 0.0);
        let h = thickness_histogram(&[1.0, 3.0, 1.0, 3.0], 2.0, 4);
        assert_eq!(h.fraction_above(), 0.5);
        assert_eq!(h.counts.iter().sum::<usize>(), 4);
    }

    #[test]
    fn csv_roundtrip() {
        let (mesh, _) = two_layer_plate(4, 0.3);
        let normals = NormalField::compute(&mesh).unwrap();
        let pairing = find_thickness_pairs(&mesh, &normals);
        let csv = pairing.to_csv();
        assert!(csv.starts_with("node_id,partner_id,thickness,normal_dot,fallback_flag\n"));
        let back = ThicknessPairing::from_csv(&csv).unwrap();
        for (a, b) in pairing.nodes.iter().zip(&back.nodes) {
            assert_eq!(a.partner, b.partner);
            assert_eq!(a.thickness.to_bits(), b.thickness.to_bits());
            assert_eq!(a.normal_dot.to_bits(), b.normal_dot.to_bits());
            assert_eq!(a.fallback, b.fallback);
        }
        assert_eq!(back.to_csv(), csv);
    }
}
