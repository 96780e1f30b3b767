use super::{Mesh, Point3};
use crate::error::{Error, Result};

/// Per-face and per-node unit normals of a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    pub face: Vec<Point3>,
    pub node: Vec<Point3>,
}

impl NormalField {
    pub fn compute(mesh: &Mesh) -> Result<Self> {
        let face = face_normals(mesh)?;
        let node = node_normals(mesh, &face)?;
        Ok(Self { face, node })
    }
}

/// Unit normal of each face from the winding order: `(v1-v0) x (v2-v0)`.
pub fn face_normals(mesh: &Mesh) -> Result<Vec<Point3>> {
    let v = mesh.vertices();
    mesh.faces()
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let c = (v[f[1]] - v[f[0]]).cross(&(v[f[2]] - v[f[0]]));
            let n = c.norm();
            if n <= 1e-12 {
                Err(Error::DegenerateFace { face: k })
            } else {
                Ok(c / n)
            }
        })
        .collect()
}

/// Unweighted mean of incident face normals, renormalized to unit length.
pub fn node_normals(mesh: &Mesh, face_normals: &[Point3]) -> Result<Vec<Point3>> {
    if face_normals.len() != mesh.num_faces() {
        return Err(Error::LengthMismatch {
            what: "face normals",
            expected: mesh.num_faces(),
            got: face_normals.len(),
        });
    }
    mesh.vertex_faces()
        .iter()
        .enumerate()
        .map(|(i, fs)| {
            if fs.is_empty() {
                return Err(Error::IsolatedVertex { vertex: i });
            }
            let sum = fs
                .iter()
                .fold(Point3::zeros(), |acc, &k| acc + face_normals[k]);
            let mean = sum / fs.len() as f64;
            let n = mean.norm();
            if n < 1e-9 {
                Err(Error::CancellingNormals { vertex: i })
            } else {
                Ok(mean / n)
            }
        })
        .collect()
}
