//! Random rigid transforms used by the OOD evaluation and the invariance suites.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub q: Matrix3<f64>,
    pub g: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            q: Matrix3::identity(),
            g: Vector3::zeros(),
        }
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.q * p + self.g
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.q * v
    }
}

/// Haar-distributed orthogonal matrix from the QR factorization of a
/// Gaussian matrix. With `allow_reflection == false` the result is a proper
/// rotation (det = +1); otherwise the determinant sign is random.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, allow_reflection: bool) -> Matrix3<f64> {
    let a = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..3 {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let want_reflection = allow_reflection && rng.random_bool(0.5);
    if (q.determinant() < 0.0) != want_reflection {
        q.column_mut(2).neg_mut();
    }
    q
}

/// Random orthogonal `q` plus a translation with components in `[-scale, scale]`.
pub fn random_rigid<R: Rng + ?Sized>(rng: &mut R, allow_reflection: bool, scale: f64) -> RigidTransform {
    let q = random_orthogonal(rng, allow_reflection);
    let g = Vector3::from_fn(|_, _| rng.random_range(-scale..=scale));
    RigidTransform { q, g }
}
