//! Data-driven canonical frame.
//!
//! A shape's frame is its vertex mean `x_cm` plus the principal axes of the
//! centered vertex cloud, each axis signed so that it points along
//! `v = x_cm - x_bbox` (vertex mean minus bounding-box center). The box is
//! measured along the principal axes rather than the world axes: a
//! world-aligned box moves relative to the shape when the shape rotates,
//! which would make the signs orientation-dependent. Coordinates
//! expressed in this frame are unchanged by any rotation, reflection or
//! translation of the input, and mapping a prediction back with the stored
//! frame makes the output transform with the input.
//!
//! When an axis cannot be signed (`b_i . v` vanishes) or two eigenvalues
//! coincide, the frame is still produced deterministically but the axis is
//! flagged in [`CanonicalFrame::degenerate`]; invariance is not guaranteed
//! along flagged axes.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point3};

/// Relative tolerance for sign-rule and eigenvalue ties.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// How [`CanonicalFrame::from_invariant`] maps values back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseMode {
    /// `R p + x_cm`, for positions.
    Point,
    /// `R p`, for displacements and other free vectors.
    #[default]
    Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "FrameJson", from = "FrameJson")]
pub struct CanonicalFrame {
    /// Columns are the principal axes `b1, b2, b3` by descending variance.
    pub rotation: Matrix3<f64>,
    pub center: Point3,
    pub degenerate: [bool; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameJson {
    rotation: [[f64; 3]; 3],
    center: [f64; 3],
    degenerate: [bool; 3],
}

impl From<CanonicalFrame> for FrameJson {
    fn from(f: CanonicalFrame) -> Self {
        let col = |j: usize| [f.rotation[(0, j)], f.rotation[(1, j)], f.rotation[(2, j)]];
        FrameJson {
            rotation: [col(0), col(1), col(2)],
            center: [f.center.x, f.center.y, f.center.z],
            degenerate: f.degenerate,
        }
    }
}

impl From<FrameJson> for CanonicalFrame {
    fn from(j: FrameJson) -> Self {
        let rotation = Matrix3::from_fn(|r, c| j.rotation[c][r]);
        CanonicalFrame {
            rotation,
            center: Point3::from(j.center),
            degenerate: j.degenerate,
        }
    }
}

impl CanonicalFrame {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            center: Point3::zeros(),
            degenerate: [false; 3],
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }

    /// `R^T (x - x_cm)` per point.
    pub fn to_invariant(&self, points: &[Point3]) -> Vec<Point3> {
        let rt = self.rotation.transpose();
        points.iter().map(|p| rt * (p - self.center)).collect()
    }

    /// Inverse of [`to_invariant`](Self::to_invariant) for the given mode.
    pub fn from_invariant(&self, points: &[Point3], mode: InverseMode) -> Vec<Point3> {
        match mode {
            InverseMode::Point => points.iter().map(|p| self.rotation * p + self.center).collect(),
            InverseMode::Vector => points.iter().map(|p| self.rotation * p).collect(),
        }
    }

    /// Forward map matching `from_invariant(.., mode)`: `R^T (x - x_cm)` or `R^T x`.
    pub fn to_invariant_mode(&self, points: &[Point3], mode: InverseMode) -> Vec<Point3> {
        match mode {
            InverseMode::Point => self.to_invariant(points),
            InverseMode::Vector => {
                let rt = self.rotation.transpose();
                points.iter().map(|p| rt * p).collect()
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("frame serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Unweighted vertex mean.
pub fn center_of_mass(points: &[Point3]) -> Result<Point3> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let sum = points.iter().fold(Point3::zeros(), |acc, p| acc + p);
    Ok(sum / points.len() as f64)
}

/// Midpoint of the world-axis-aligned bounding box.
pub fn bounding_box_center(points: &[Point3]) -> Result<Point3> {
    let first = points.first().ok_or(Error::EmptyPointSet)?;
    let (lo, hi) = points[1..]
        .iter()
        .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    Ok((lo + hi) / 2.0)
}

pub fn compute_frame(mesh: &Mesh) -> Result<CanonicalFrame> {
    compute_frame_from_points(mesh.vertices())
}

pub fn compute_frame_from_points(points: &[Point3]) -> Result<CanonicalFrame> {
    if points.len() < 2 {
        return Err(Error::TooFewVertices {
            needed: 2,
            got: points.len(),
        });
    }
    let center = center_of_mass(points)?;

    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - center;
        cov += d * d.transpose();
    }
    cov /= (points.len() - 1) as f64;

    let (values, vectors) = symmetric_eigen3(&cov);
    let mut order = [0usize, 1, 2];
    // stable: equal eigenvalues keep solver order
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let sorted: [f64; 3] = order.map(|k| values[k]);

    // box center along the (unsigned) principal axes, relative to x_cm
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        let d = p - center;
        for (axis, &k) in order.iter().enumerate() {
            let c = vectors.column(k).dot(&d);
            lo[axis] = lo[axis].min(c);
            hi[axis] = hi[axis].max(c);
        }
    }
    // v expressed in the principal basis: b_axis . v = v_local[axis]
    let v_local: [f64; 3] = std::array::from_fn(|a| -(lo[a] + hi[a]) / 2.0);
    let vnorm = v_local.iter().map(|c| c * c).sum::<f64>().sqrt();
    let lmax = sorted[0].abs();
    let mut degenerate = [false; 3];
    let mut rotation = Matrix3::zeros();
    for (axis, &k) in order.iter().enumerate() {
        let mut b: Vector3<f64> = vectors.column(k).into_owned();
        let eig_tie = (0..3)
            .filter(|&o| o != axis)
            .any(|o| (sorted[axis] - sorted[o]).abs() < DEGENERACY_TOL * lmax);
        let dot = v_local[axis];
        let sign_tie = vnorm < 1e-12 || dot.abs() < DEGENERACY_TOL * vnorm;
        if sign_tie {
            // largest-magnitude component positive, lowest axis on ties
            let mut arg = 0;
            for c in 1..3 {
                if b[c].abs() > b[arg].abs() {
                    arg = c;
                }
            }
            if b[arg] < 0.0 {
                b = -b;
            }
        } else if dot < 0.0 {
            b = -b;
        }
        degenerate[axis] = eig_tie || sign_tie;
        rotation.set_column(axis, &b);
    }

    if vnorm < 1e-12 {
        return Err(Error::SymmetricFrame { flags: degenerate });
    }

    Ok(CanonicalFrame {
        rotation,
        center,
        degenerate,
    })
}

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues (unsorted) and the matrix whose columns are the
/// corresponding unit eigenvectors.
pub fn symmetric_eigen3(m: &Matrix3<f64>) -> ([f64; 3], Matrix3<f64>) {
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = Matrix3::identity();
    let scale = a.norm();
    if scale == 0.0 {
        return ([0.0; 3], v);
    }
    for _sweep in 0..64 {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        if off <= (f64::EPSILON * scale).powi(2) * 1e-4 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut j = Matrix3::identity();
            j[(p, p)] = c;
            j[(q, q)] = c;
            j[(p, q)] = s;
            j[(q, p)] = -s;
            a = j.transpose() * a * j;
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= j;
        }
    }
    ([a[(0, 0)], a[(1, 1)], a[(2, 2)]], v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::random_rigid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    /// Anisotropic cloud 4:2:1 along x,y,z plus a tail shifting the mean
    /// away from the box center on every axis.
    fn stretched_cloud() -> Vec<Point3> {
        let mut pts = Vec::new();
        for i in -2..=2 {
            for j in -2..=2 {
                for k in -2..=2 {
                    pts.push(p(4.0 * i as f64, 2.0 * j as f64, k as f64));
                }
            }
        }
        pts.push(p(7.0, 3.5, 1.7));
        pts.push(p(7.5, 3.0, 1.5));
        pts
    }

    #[test]
    fn centers() {
        assert_eq!(center_of_mass(&[p(1.0, 2.0, 3.0)]).unwrap(), p(1.0, 2.0, 3.0));
        assert_eq!(center_of_mass(&[p(1.0, 0.0, 0.0), p(-1.0, 0.0, 0.0)]).unwrap(), p(0.0, 0.0, 0.0));
        let cube: Vec<_> = (0..8)
            .map(|i| p((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        assert_eq!(center_of_mass(&cube).unwrap(), p(0.5, 0.5, 0.5));
        assert!(matches!(center_of_mass(&[]), Err(Error::EmptyPointSet)));

        assert_eq!(bounding_box_center(&[p(0.0, 0.0, 0.0), p(2.0, 4.0, 6.0)]).unwrap(), p(1.0, 2.0, 3.0));
        assert_eq!(bounding_box_center(&[p(3.0, -1.0, 2.0)]).unwrap(), p(3.0, -1.0, 2.0));
        let l = [p(0.0, 0.0, 0.0), p(3.0, 0.0, 0.0), p(0.0, 1.0, 0.0), p(0.0, 0.0, 2.0)];
        assert_eq!(bounding_box_center(&l).unwrap(), p(1.5, 0.5, 1.0));
        assert!(bounding_box_center(&[]).is_err());
    }

    #[test]
    fn jacobi_matches_reference_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = Matrix3::from_fn(|_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
            let s = a * a.transpose();
            let (vals, vecs) = symmetric_eigen3(&s);
            let reference = nalgebra::SymmetricEigen::new(s);
            let mut mine = vals;
            let mut theirs: Vec<f64> = reference.eigenvalues.iter().copied().collect();
            mine.sort_by(f64::total_cmp);
            theirs.sort_by(f64::total_cmp);
            for (x, y) in mine.iter().zip(&theirs) {
                assert!((x - y).abs() < 1e-12);
            }
            for k in 0..3 {
                let b = vecs.column(k);
                assert!((s * b - b * vals[k]).amax() < 1e-12);
            }
            assert!((vecs.transpose() * vecs - Matrix3::identity()).amax() < 1e-13);
        }
    }

    #[test]
    fn stretched_cloud_aligns_with_world_axes() {
        let pts = stretched_cloud();
        let frame = compute_frame_from_points(&pts).unwrap();
        assert!(!frame.is_degenerate());
        // independent route: nalgebra eigen-solver, sorted by descending value
        let c = center_of_mass(&pts).unwrap();
        let mut cov = Matrix3::zeros();
        for q in &pts {
            cov += (q - c) * (q - c).transpose();
        }
        let eig = nalgebra::SymmetricEigen::new(cov / (pts.len() - 1) as f64);
        let mut idx = [0, 1, 2];
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for (axis, &k) in idx.iter().enumerate() {
            let reference = eig.eigenvectors.column(k);
            let mine = frame.rotation.column(axis);
            assert!((mine.dot(&reference).abs() - 1.0).abs() < 1e-12);
            // dominant component sits on the world axis of the same rank
            assert!(mine[axis].abs() > 0.99, "axis {axis}: {mine:?}");
            // tail is at positive x,y,z so every axis points positive
            assert!(mine[axis] > 0.0);
        }
    }

    #[test]
    fn orthogonality_and_roundtrip() {
        let pts = stretched_cloud();
        let frame = compute_frame_from_points(&pts).unwrap();
        let r = frame.rotation;
        assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-9);
        assert!((r.determinant().abs() - 1.0).abs() < 1e-9);
        let back = frame.from_invariant(&frame.to_invariant(&pts), InverseMode::Point);
        for (a, b) in pts.iter().zip(&back) {
            assert!((a - b).amax() < 1e-9);
        }
    }

    #[test]
    fn inverse_modes() {
        let frame = compute_frame_from_points(&stretched_cloud()).unwrap();
        let zero = [Point3::zeros()];
        assert_eq!(frame.from_invariant(&zero, InverseMode::Point)[0], frame.center);
        assert_eq!(frame.from_invariant(&zero, InverseMode::Vector)[0], Point3::zeros());
        assert!(frame.to_invariant(&[frame.center])[0].amax() < 1e-15);
        let id = CanonicalFrame::identity();
        let pts = stretched_cloud();
        assert_eq!(id.to_invariant(&pts), pts);
    }

    #[test]
    fn translation_and_rotation_equivariance() {
        let pts = stretched_cloud();
        let base = compute_frame_from_points(&pts).unwrap();
        let base_inv = base.to_invariant(&pts);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let t = random_rigid(&mut rng, true, 50.0);
            let moved: Vec<_> = pts.iter().map(|x| t.apply_point(x)).collect();
            let f = compute_frame_from_points(&moved).unwrap();
            assert!((f.rotation - t.q * base.rotation).amax() < 1e-7);
            let inv = f.to_invariant(&moved);
            for (a, b) in inv.iter().zip(&base_inv) {
                assert!((a - b).amax() < 1e-7);
            }
            let shifted: Vec<_> = pts.iter().map(|x| x + t.g).collect();
            let fs = compute_frame_from_points(&shifted).unwrap();
            assert!((fs.rotation - base.rotation).amax() < 1e-9);
        }
    }

    #[test]
    fn generic_clouds_are_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let pts: Vec<Point3> = (0..12)
                .map(|_| Point3::from_fn(|r, _| rand::Rng::random_range(&mut rng, -1.0..1.0) * (3.0 - r as f64)))
                .collect();
            let base = compute_frame_from_points(&pts).unwrap();
            let inv = base.to_invariant(&pts);
            for _ in 0..20 {
                let t = random_rigid(&mut rng, true, 20.0);
                let moved: Vec<_> = pts.iter().map(|x| t.apply_point(x)).collect();
                let f = compute_frame_from_points(&moved).unwrap();
                assert!((f.rotation - t.q * base.rotation).amax() < 1e-7);
                for (a, b) in f.to_invariant(&moved).iter().zip(&inv) {
                    assert!((a - b).amax() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn axis_aligned_shape_uses_plain_box_center() {
        // principal axes are the world axes here, so the principal-frame box
        // coincides with the world box
        let pts = stretched_cloud();
        let f = compute_frame_from_points(&pts).unwrap();
        let v = center_of_mass(&pts).unwrap() - bounding_box_center(&pts).unwrap();
        for axis in 0..3 {
            assert!(f.rotation.column(axis).dot(&v) > 0.0);
        }
    }

    #[test]
    fn symmetric_shape_is_rejected() {
        let cube: Vec<_> = (0..8)
            .map(|i| p((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        match compute_frame_from_points(&cube) {
            Err(Error::SymmetricFrame { flags }) => assert_eq!(flags, [true; 3]),
            other => panic!("expected symmetric frame error, got {other:?}"),
        }
        assert!(matches!(
            compute_frame_from_points(&[p(0.0, 0.0, 0.0)]),
            Err(Error::TooFewVertices { .. })
        ));
    }

    #[test]
    fn sign_fallback_is_flagged() {
        // mean/box offset purely along x: the y and z axes cannot be signed
        let mut pts = Vec::new();
        for i in 0..5 {
            for j in -1..=1 {
                for k in -1..=1 {
                    pts.push(p(i as f64 * i as f64, 2.0 * j as f64, 0.5 * k as f64));
                }
            }
        }
        let f = compute_frame_from_points(&pts).unwrap();
        assert_eq!(f.degenerate, [false, true, true]);
        for axis in 1..3 {
            let b = f.rotation.column(axis);
            let arg = (0..3).max_by(|&a, &c| b[a].abs().total_cmp(&b[c].abs())).unwrap();
            assert!(b[arg] > 0.0);
        }
    }

    #[test]
    fn json_shape() {
        let f = compute_frame_from_points(&stretched_cloud()).unwrap();
        let js = f.to_json();
        let v: serde_json::Value = serde_json::from_str(&js).unwrap();
        assert_eq!(v["rotation"].as_array().unwrap().len(), 3);
        assert_eq!(v["rotation"][0][0].as_f64().unwrap(), f.rotation[(0, 0)]);
        assert_eq!(v["rotation"][1][0].as_f64().unwrap(), f.rotation[(0, 1)]);
        assert_eq!(CanonicalFrame::from_json(&js).unwrap(), f);
        assert!(CanonicalFrame::from_json(r#"{"rotation":[[1,0,0],[0,1,0],[0,0,1]],"center":[0,0,0],"degenerate":[false,false,false],"x":1}"#).is_err());
    }
}
