//! Graph structure and invariant features of one training sample.

pub(crate) mod bundle;

pub use bundle::{Bundle, Dataset, Manifest, ManifestEntry, Split, MANIFEST_VERSION};

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{compute_frame, CanonicalFrame};
use crate::mesh::{validate_watertight, Mesh, NormalField, Point3};
use crate::thickness::{find_thickness_pairs, thickness_edge_features, ThickFeatureFlags, ThicknessEdge, ThicknessPairing};

/// Which coordinates reach the spatial encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordMode {
    /// Canonical-frame coordinates `R^T (x - x_cm)`.
    #[default]
    Invariant,
    /// Raw world coordinates; breaks equivariance.
    Original,
    /// No spatial input at all.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleOptions {
    #[serde(default)]
    pub coord_mode: CoordMode,
    #[serde(default)]
    pub thick_flags: ThickFeatureFlags,
}

/// Per-mesh derived geometry: normals, canonical frame and thickness pairs.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub mesh: Mesh,
    pub normals: NormalField,
    pub frame: CanonicalFrame,
    pub pairing: ThicknessPairing,
}

impl Geometry {
    /// Rejects non-watertight meshes, then derives everything downstream.
    pub fn compute(mesh: Mesh) -> Result<Self> {
        let report = validate_watertight(&mesh);
        if !report.watertight {
            return Err(Error::NotWatertight {
                boundary: report.boundary_edges.len(),
                non_manifold: report.non_manifold_edges.len(),
            });
        }
        let normals = NormalField::compute(&mesh)?;
        let frame = compute_frame(&mesh)?;
        let pairing = find_thickness_pairs(&mesh, &normals);
        Ok(Self {
            mesh,
            normals,
            frame,
            pairing,
        })
    }
}

/// Both orientations of every undirected edge, sorted by `(src, dst)`.
pub fn build_surface_graph(mesh: &Mesh) -> Vec<[usize; 2]> {
    let mut out: Vec<[usize; 2]> = mesh.edges().iter().flat_map(|&[a, b]| [[a, b], [b, a]]).collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLengths {
    pub lengths: Vec<f64>,
    /// Edges of zero length (coincident endpoints).
    pub degenerate: Vec<usize>,
}

pub fn edge_lengths(mesh: &Mesh, edges: &[[usize; 2]]) -> EdgeLengths {
    let v = mesh.vertices();
    let lengths: Vec<f64> = edges.iter().map(|&[a, b]| (v[a] - v[b]).norm()).collect();
    let degenerate = lengths
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == 0.0)
        .map(|(k, _)| k)
        .collect();
    EdgeLengths { lengths, degenerate }
}

pub fn radius_from_cm(mesh: &Mesh, x_cm: &Point3) -> Vec<f64> {
    mesh.vertices().iter().map(|p| (p - x_cm).norm()).collect()
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on distance, then node index
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Neighbor lists with edge lengths, ascending by neighbor.
fn adjacency(mesh: &Mesh) -> Vec<Vec<(usize, f64)>> {
    let v = mesh.vertices();
    let mut adj = vec![Vec::new(); mesh.num_vertices()];
    for &[a, b] in mesh.edges() {
        let w = (v[a] - v[b]).norm();
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    for l in &mut adj {
        l.sort_unstable_by_key(|&(n, _)| n);
    }
    adj
}

/// Shortest-path distance from `gate` along mesh edges weighted by length.
pub fn geodesic_from_gate(mesh: &Mesh, gate: usize) -> Result<Vec<f64>> {
    let n = mesh.num_vertices();
    if gate >= n {
        return Err(Error::InvalidGate { gate, count: n });
    }
    let adj = adjacency(mesh);
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[gate] = 0.0;
    heap.push(Entry(0.0, gate));
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    if let Some(node) = dist.iter().position(|d| d.is_infinite()) {
        return Err(Error::Disconnected { node });
    }
    Ok(dist)
}

/// Fully assembled network input for one mesh and condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    pub num_nodes: usize,
    pub directed_edges: Vec<[usize; 2]>,
    /// `||x_ij||` per directed edge.
    pub edge_features: Vec<f64>,
    /// `[g_i, r_i]` per node.
    pub node_features: Vec<[f64; 2]>,
    pub thickness_edges: Vec<ThicknessEdge>,
    pub coord_mode: CoordMode,
    /// Coordinates for the spatial encoder; absent for [`CoordMode::None`].
    pub coords: Option<Vec<[f64; 3]>>,
    pub condition: Vec<f64>,
    /// Per-node displacement in the original frame.
    pub targets: Vec<[f64; 3]>,
    pub frame: CanonicalFrame,
    pub gate: usize,
}

impl GraphSample {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sample serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn arr(p: &Point3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

#[allow(clippy::too_many_arguments)]
pub fn assemble_sample(
    mesh: &Mesh,
    normals: &NormalField,
    frame: &CanonicalFrame,
    pairing: &ThicknessPairing,
    gate: usize,
    condition: &[f64],
    targets: &[Point3],
    options: &SampleOptions,
) -> Result<GraphSample> {
    let n = mesh.num_vertices();
    for (what, got) in [
        ("node normals", normals.node.len()),
        ("pairing", pairing.len()),
        ("targets", targets.len()),
    ] {
        if got != n {
            return Err(Error::LengthMismatch { what, expected: n, got });
        }
    }
    let directed_edges = build_surface_graph(mesh);
    let edge_features = edge_lengths(mesh, &directed_edges).lengths;
    let g = geodesic_from_gate(mesh, gate)?;
    let r = radius_from_cm(mesh, &frame.center);
    let coords = match options.coord_mode {
        CoordMode::Invariant => Some(frame.to_invariant(mesh.vertices()).iter().map(arr).collect()),
        CoordMode::Original => Some(mesh.vertices().iter().map(arr).collect()),
        CoordMode::None => None,
    };
    Ok(GraphSample {
        num_nodes: n,
        directed_edges,
        edge_features,
        node_features: g.into_iter().zip(r).map(|(g, r)| [g, r]).collect(),
        thickness_edges: thickness_edge_features(pairing, normals, options.thick_flags),
        coord_mode: options.coord_mode,
        coords,
        condition: condition.to_vec(),
        targets: targets.iter().map(arr).collect(),
        frame: *frame,
        gate,
    })
}

/// Index of the vertex nearest `anchor` (lowest index on ties).
pub fn nearest_node(mesh: &Mesh, anchor: &Point3) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, p) in mesh.vertices().iter().enumerate() {
        let d = (p - anchor).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}
