//! Watertight surfaces of solids made of axis-aligned grid cells.
//!
//! A solid is sampled on a rectilinear grid given by per-axis breakpoints;
//! every boundary quad between a filled and an empty cell becomes two
//! triangles. Vertices are welded by grid index, so the mesh is watertight
//! whenever no two filled cells touch only along an edge or a corner.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, NormalField, Point3};

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Aabb {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Self { lo, hi }
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|k| p[k] > self.lo[k] && p[k] < self.hi[k])
    }
}

/// Union of `add` boxes minus the union of `sub` boxes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoxSolid {
    pub add: Vec<Aabb>,
    pub sub: Vec<Aabb>,
}

impl BoxSolid {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.add.iter().any(|b| b.contains(p)) && !self.sub.iter().any(|b| b.contains(p))
    }

    /// Length of the first inside run of the ray `p + s dir`, marched in
    /// `step` increments and bisected at the exit. `None` when the ray does
    /// not start inside or stays inside beyond `max`.
    pub fn ray_depth(&self, p: &Point3, dir: &Point3, step: f64, max: f64) -> Option<f64> {
        let at = |s: f64| {
            let q = p + dir * s;
            self.contains([q.x, q.y, q.z])
        };
        if !at(step * 1e-3) {
            return None;
        }
        let mut s = step * 1e-3;
        while at(s + step) {
            s += step;
            if s > max {
                return None;
            }
        }
        let (mut lo, mut hi) = (s, s + step);
        while hi - lo > 1e-10 * (1.0 + hi) {
            let mid = 0.5 * (lo + hi);
            if at(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi)
    }

    /// Smallest [`ray_depth`](Self::ray_depth) over the central ray and four
    /// rays shifted by `offset` perpendicular to it, so rays grazing a face
    /// plane see the nearest opposing surface.
    pub fn min_ray_depth(&self, p: &Point3, dir: &Point3, offset: f64, step: f64, max: f64) -> Option<f64> {
        let helper = if dir.x.abs() < 0.9 { Point3::x() } else { Point3::y() };
        let e1 = dir.cross(&helper).normalize();
        let e2 = dir.cross(&e1);
        [Point3::zeros(), e1, -e1, e2, -e2]
            .iter()
            .filter_map(|e| self.ray_depth(&(p + e * offset), dir, step, max))
            .reduce(f64::min)
    }
}

/// Sorted breakpoints: every `keep` value plus the uniform `count`-point
/// subdivision of `[lo, hi]`, dropping uniform points closer than a quarter
/// spacing to a kept value.
pub fn breakpoints(lo: f64, hi: f64, count: usize, keep: &[f64]) -> Vec<f64> {
    let count = count.max(2);
    let spacing = (hi - lo) / (count - 1) as f64;
    let mut out: Vec<f64> = keep.to_vec();
    out.push(lo);
    out.push(hi);
    out.sort_by(f64::total_cmp);
    out.dedup();
    let fixed = out.clone();
    for k in 1..count - 1 {
        let u = lo + spacing * k as f64;
        if fixed.iter().all(|f| (f - u).abs() >= 0.25 * spacing) {
            out.push(u);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Adds points so no gap inside `[lo, hi]` exceeds `max_gap`.
pub fn refine(points: &mut Vec<f64>, lo: f64, hi: f64, max_gap: f64) {
    let mut extra = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a >= lo - 1e-12 && b <= hi + 1e-12 && b - a > max_gap {
            let n = ((b - a) / max_gap).ceil() as usize;
            for k in 1..n {
                extra.push(a + (b - a) * k as f64 / n as f64);
            }
        }
    }
    points.extend(extra);
    points.sort_by(f64::total_cmp);
}

/// Oracle classification of a node from a straight march through the solid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    /// Opposing surface at most `t*` away.
    Wall,
    /// Opposing surface farther than `t*` (a lateral width).
    Wide,
    /// Rim/corner node or a march that leaves through an edge.
    Unknown,
}

/// Generator-side ground truth for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOracle {
    /// Opposing node along a grid line, for nodes on a flat face whose
    /// inward march leaves the solid through a face.
    pub partner: Vec<Option<usize>>,
    pub thickness: Vec<Option<f64>>,
    /// Distance through the solid along the inward node normal.
    pub depth: Vec<Option<f64>>,
}

impl GridOracle {
    /// Class from the exact inward depth, defined for every node.
    pub fn classify(&self, t_star: f64) -> Vec<NodeClass> {
        self.depth
            .iter()
            .map(|t| match t {
                Some(t) if *t <= t_star => NodeClass::Wall,
                Some(_) => NodeClass::Wide,
                None => NodeClass::Unknown,
            })
            .collect()
    }

    /// Flat-face nodes whose grid-line partner is at most `t_star` away.
    pub fn interior_walls(&self, t_star: f64) -> Vec<usize> {
        (0..self.thickness.len())
            .filter(|&i| self.thickness[i].is_some_and(|t| t <= t_star))
            .collect()
    }
}

pub struct GridMesh {
    pub mesh: Mesh,
    pub oracle: GridOracle,
}

struct Grid {
    axes: [Vec<f64>; 3],
    filled: Vec<bool>,
}

impl Grid {
    fn cells(&self, a: usize) -> usize {
        self.axes[a].len() - 1
    }

    /// Filled state of cell `c`; out-of-range cells are empty.
    fn at(&self, c: [i64; 3]) -> bool {
        for a in 0..3 {
            if c[a] < 0 || c[a] >= self.cells(a) as i64 {
                return false;
            }
        }
        let (nx, ny) = (self.cells(0), self.cells(1));
        self.filled[(c[2] as usize * ny + c[1] as usize) * nx + c[0] as usize]
    }
}

/// Meshes the boundary of `solid` sampled on the given breakpoints.
pub fn mesh_box_solid(solid: &BoxSolid, axes: [Vec<f64>; 3]) -> Result<GridMesh> {
    for a in &axes {
        if a.len() < 2 || a.windows(2).any(|w| w[1] - w[0] <= 1e-9) {
            return Err(Error::InfeasibleSpec("grid breakpoints must be strictly increasing".into()));
        }
    }
    let (nx, ny, nz) = (axes[0].len() - 1, axes[1].len() - 1, axes[2].len() - 1);
    let mut filled = vec![false; nx * ny * nz];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = [
                    (axes[0][i] + axes[0][i + 1]) / 2.0,
                    (axes[1][j] + axes[1][j + 1]) / 2.0,
                    (axes[2][k] + axes[2][k + 1]) / 2.0,
                ];
                filled[(k * ny + j) * nx + i] = solid.contains(c);
            }
        }
    }
    let grid = Grid { axes, filled };

    // quads as grid-point corners, counter-clockwise seen from outside
    let mut quads: Vec<[[usize; 3]; 4]> = Vec::new();
    let mut quad_dir: Vec<(usize, bool)> = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = [i as i64, j as i64, k as i64];
                if !grid.at(c) {
                    continue;
                }
                for a in 0..3 {
                    for positive in [false, true] {
                        let mut nb = c;
                        nb[a] += if positive { 1 } else { -1 };
                        if grid.at(nb) {
                            continue;
                        }
                        let (b, cc) = ((a + 1) % 3, (a + 2) % 3);
                        let base = [i, j, k];
                        let corner = |db: usize, dc: usize| {
                            let mut p = base;
                            p[a] += usize::from(positive);
                            p[b] += db;
                            p[cc] += dc;
                            p
                        };
                        // (b, c) is right-handed with a, so this order faces +a
                        let mut q = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                        if !positive {
                            q.reverse();
                        }
                        quads.push(q);
                        quad_dir.push((a, positive));
                    }
                }
            }
        }
    }
    if quads.is_empty() {
        return Err(Error::InfeasibleSpec("solid has no filled cells".into()));
    }

    // weld and order vertices by (z, y, x) grid index
    let mut index: BTreeMap<[usize; 3], usize> = BTreeMap::new();
    for q in &quads {
        for p in q {
            index.insert([p[2], p[1], p[0]], 0);
        }
    }
    let mut vertices = Vec::with_capacity(index.len());
    let mut grid_pts = Vec::with_capacity(index.len());
    for (n, (key, slot)) in index.iter_mut().enumerate() {
        *slot = n;
        let p = [key[2], key[1], key[0]];
        vertices.push(Point3::new(grid.axes[0][p[0]], grid.axes[1][p[1]], grid.axes[2][p[2]]));
        grid_pts.push(p);
    }
    let id = |p: &[usize; 3]| index[&[p[2], p[1], p[0]]];
    let mut faces = Vec::with_capacity(2 * quads.len());
    let mut node_dirs: Vec<Vec<(usize, bool)>> = vec![Vec::new(); vertices.len()];
    for (q, &dir) in quads.iter().zip(&quad_dir) {
        let v = [id(&q[0]), id(&q[1]), id(&q[2]), id(&q[3])];
        faces.push([v[0], v[1], v[2]]);
        faces.push([v[0], v[2], v[3]]);
        for n in v {
            node_dirs[n].push(dir);
        }
    }
    let mesh = Mesh::new(vertices, faces)?;
    let (partner, thickness) = march_oracle(&grid, &grid_pts, &node_dirs, &index);
    let normals = NormalField::compute(&mesh)?;
    let diag = mesh.bbox_diagonal();
    let step = 1e-3 * diag;
    let depth = mesh
        .vertices()
        .iter()
        .zip(&normals.node)
        .map(|(p, n)| solid.min_ray_depth(p, &-n, 1e-6 * diag, step, 2.0 * diag))
        .collect();
    let oracle = GridOracle {
        partner,
        thickness,
        depth,
    };
    Ok(GridMesh { mesh, oracle })
}

/// For nodes whose incident quads all face the same way, walk from the node
/// along the inward axis while the four cells around the grid line are
/// filled; a clean exit (all four empty beyond) names the partner.
fn march_oracle(
    grid: &Grid,
    pts: &[[usize; 3]],
    dirs: &[Vec<(usize, bool)>],
    index: &BTreeMap<[usize; 3], usize>,
) -> (Vec<Option<usize>>, Vec<Option<f64>>) {
    let n = pts.len();
    let mut partner = vec![None; n];
    let mut thickness = vec![None; n];
    for v in 0..n {
        let (a, positive) = dirs[v][0];
        if dirs[v].iter().any(|&d| d != (a, positive)) {
            continue;
        }
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let p = pts[v];
        let step: i64 = if positive { -1 } else { 1 };
        let filled_around = |s: i64| -> usize {
            // cells around the segment leaving grid index s along `step`
            let cell_a = if step > 0 { s } else { s - 1 };
            let mut count = 0;
            for db in [-1i64, 0] {
                for dc in [-1i64, 0] {
                    let mut cell = [0i64; 3];
                    cell[a] = cell_a;
                    cell[b] = p[b] as i64 + db;
                    cell[c] = p[c] as i64 + dc;
                    count += usize::from(grid.at(cell));
                }
            }
            count
        };
        let mut s = p[a] as i64;
        if filled_around(s) != 4 {
            continue;
        }
        while filled_around(s) == 4 {
            s += step;
        }
        if filled_around(s) != 0 {
            continue;
        }
        let mut q = p;
        q[a] = s as usize;
        if let Some(&j) = index.get(&[q[2], q[1], q[0]]) {
            partner[v] = Some(j);
            thickness[v] = Some((grid.axes[a][q[a]] - grid.axes[a][p[a]]).abs());
        }
    }
    (partner, thickness)
}
