//! Triangular surface meshes: storage, parsing, watertightness and normals.
//!
//! Vertex order defines node indices. The undirected edge set and per-vertex
//! face incidence are always derived from the face list, never read from a
//! file, so they stay consistent with the incidence counts used by
//! [`validate_watertight`].

mod io;
mod normals;

pub use io::{parse_mesh, write_off, MeshFormat};
pub use normals::{face_normals, node_normals, NormalField};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    vertex_faces: Vec<Vec<usize>>,
}

impl Mesh {
    /// Builds a mesh and derives its edge set and incidence lists.
    ///
    /// Every face must reference three distinct, in-range vertices.
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (k, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {k} references vertex {bad}, only {n} vertices"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!(
                    "face {k} repeats a vertex index: {f:?}"
                )));
            }
        }
        if let Some((i, p)) = vertices
            .iter()
            .enumerate()
            .find(|(_, p)| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidMesh(format!(
                "vertex {i} has a non-finite coordinate: {p:?}"
            )));
        }

        let mut edges: Vec<[usize; 2]> = faces
            .iter()
            .flat_map(|f| {
                [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
                    .into_iter()
                    .map(|(a, b)| [a.min(b), a.max(b)])
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();

        let mut vertex_faces = vec![Vec::new(); n];
        for (k, f) in faces.iter().enumerate() {
            for &v in f {
                vertex_faces[v].push(k);
            }
        }

        Ok(Self {
            vertices,
            faces,
            edges,
            vertex_faces,
        })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Undirected edges as `[lo, hi]` pairs, sorted lexicographically.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Faces incident to each vertex, in ascending face order.
    pub fn vertex_faces(&self) -> &[Vec<usize>] {
        &self.vertex_faces
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Number of faces incident to each undirected edge, aligned with [`Mesh::edges`].
    pub fn edge_face_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.edges.len()];
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = [a.min(b), a.max(b)];
                // edges are sorted, so binary search always succeeds
                let idx = self.edges.binary_search(&key).expect("derived edge");
                counts[idx] += 1;
            }
        }
        counts
    }

    /// Length of the bounding-box diagonal.
    pub fn bbox_diagonal(&self) -> f64 {
        if self.vertices.is_empty() {
            return 0.0;
        }
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for p in &self.vertices[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (hi - lo).norm()
    }

    /// Applies `x -> q x + g` to every vertex.
    ///
    /// When `q` is a reflection (det < 0) the winding of every face is
    /// reversed so that outward normals stay outward: face normals of the
    /// result are exactly `q n`.
    pub fn transformed(&self, q: &Matrix3<f64>, g: &Point3) -> Mesh {
        let vertices = self.vertices.iter().map(|p| q * p + g).collect();
        let faces = if q.determinant() < 0.0 {
            self.faces.iter().map(|f| [f[0], f[2], f[1]]).collect()
        } else {
            self.faces.clone()
        };
        Mesh::new(vertices, faces).expect("transform preserves validity")
    }

    /// Relabels nodes: new index of old vertex `i` is `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Mesh> {
        if perm.len() != self.vertices.len() {
            return Err(Error::LengthMismatch {
                what: "permutation",
                expected: self.vertices.len(),
                got: perm.len(),
            });
        }
        let mut vertices = vec![Point3::zeros(); perm.len()];
        for (old, &new) in perm.iter().enumerate() {
            vertices[new] = self.vertices[old];
        }
        let faces = self
            .faces
            .iter()
            .map(|f| [perm[f[0]], perm[f[1]], perm[f[2]]])
            .collect();
        Mesh::new(vertices, faces)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WatertightReport {
    pub watertight: bool,
    /// Edges with exactly one incident face.
    pub boundary_edges: Vec<[usize; 2]>,
    /// Edges with three or more incident faces.
    pub non_manifold_edges: Vec<[usize; 2]>,
}

/// A mesh is watertight iff every edge has exactly two incident faces.
pub fn validate_watertight(mesh: &Mesh) -> WatertightReport {
    let counts = mesh.edge_face_counts();
    let mut boundary_edges = Vec::new();
    let mut non_manifold_edges = Vec::new();
    for (e, &c) in mesh.edges().iter().zip(&counts) {
        match c {
            2 => {}
            1 => boundary_edges.push(*e),
            _ => non_manifold_edges.push(*e),
        }
    }
    WatertightReport {
        watertight: boundary_edges.is_empty() && non_manifold_edges.is_empty(),
        boundary_edges,
        non_manifold_edges,
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Unit cube `[0,1]^3`, 12 outward-wound triangles.
    pub fn unit_cube() -> Mesh {
        let v = (0..8)
            .map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let faces = vec![
            [0, 2, 1], [1, 2, 3], // z = 0
            [4, 5, 6], [5, 7, 6], // z = 1
            [0, 1, 4], [1, 5, 4], // y = 0
            [2, 6, 3], [3, 6, 7], // y = 1
            [0, 4, 2], [2, 4, 6], // x = 0
            [1, 3, 5], [3, 7, 5], // x = 1
        ];
        Mesh::new(v, faces).unwrap()
    }

    pub fn triangle() -> Mesh {
        Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }
}
