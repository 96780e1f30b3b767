use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::{breakpoints, mesh_box_solid, refine, Aabb, BoxSolid, GridOracle};
use crate::error::{Error, Result};
use crate::features::nearest_node;
use crate::mesh::{validate_watertight, Mesh, Point3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Plate,
    HollowBox,
    RibbedPlate,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Plate, Family::HollowBox, Family::RibbedPlate];
}

/// Square pin standing on the top face of a plate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Post {
    pub x: f64,
    pub y: f64,
    pub size: f64,
    pub height: f64,
}

/// Fin along x on the top face of a plate, spanning `[x0, x1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rib {
    pub y: f64,
    pub thickness: f64,
    pub height: f64,
    pub x0: f64,
    pub x1: f64,
}

/// Family-specific dimensions; all shapes sit in the positive octant with a
/// corner at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ShapeKind {
    Plate {
        length: f64,
        width: f64,
        thickness: f64,
        post: Option<Post>,
    },
    /// Open-top box: floor plus four walls `[x_lo, x_hi, y_lo, y_hi]`.
    HollowBox {
        length: f64,
        width: f64,
        height: f64,
        floor: f64,
        walls: [f64; 4],
    },
    RibbedPlate {
        length: f64,
        width: f64,
        thickness: f64,
        ribs: Vec<Rib>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    pub shape: ShapeKind,
    /// Grid vertices along each lateral edge of the base.
    pub resolution: usize,
    pub gate_anchor: [f64; 3],
    pub seed: u64,
}

/// A generated mesh with its ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedShape {
    pub mesh: Mesh,
    pub oracle: GridOracle,
    pub gate: usize,
}

fn infeasible(msg: impl Into<String>) -> Error {
    Error::InfeasibleSpec(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(infeasible(format!("{name} must be positive, got {v}")))
    }
}

impl ShapeSpec {
    pub fn family(&self) -> Family {
        match self.shape {
            ShapeKind::Plate { .. } => Family::Plate,
            ShapeKind::HollowBox { .. } => Family::HollowBox,
            ShapeKind::RibbedPlate { .. } => Family::RibbedPlate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(infeasible(format!("resolution must be >= 2, got {}", self.resolution)));
        }
        match &self.shape {
            ShapeKind::Plate { length, width, thickness, post } => {
                positive("length", *length)?;
                positive("width", *width)?;
                positive("thickness", *thickness)?;
                if *thickness >= length.min(*width) {
                    return Err(infeasible("plate thickness must be below its lateral extent"));
                }
                if let Some(p) = post {
                    positive("post size", p.size)?;
                    positive("post height", p.height)?;
                    if p.x <= 0.0 || p.y <= 0.0 || p.x + p.size >= *length || p.y + p.size >= *width {
                        return Err(infeasible("post must lie strictly inside the plate"));
                    }
                }
            }
            ShapeKind::HollowBox { length, width, height, floor, walls } => {
                for (n, v) in [("length", length), ("width", width), ("height", height), ("floor", floor)] {
                    positive(n, *v)?;
                }
                for w in walls {
                    positive("wall", *w)?;
                }
                if walls[0] + walls[1] >= *length || walls[2] + walls[3] >= *width || floor >= height {
                    return Err(infeasible("hollow box walls leave no cavity"));
                }
                if walls.iter().chain([floor]).any(|w| *w >= length.min(*width)) {
                    return Err(infeasible("wall thickness must be below the lateral extent"));
                }
            }
            ShapeKind::RibbedPlate { length, width, thickness, ribs } => {
                positive("length", *length)?;
                positive("width", *width)?;
                positive("thickness", *thickness)?;
                if *thickness >= length.min(*width) {
                    return Err(infeasible("plate thickness must be below its lateral extent"));
                }
                let mut spans: Vec<(f64, f64)> = Vec::new();
                for r in ribs {
                    positive("rib thickness", r.thickness)?;
                    positive("rib height", r.height)?;
                    if r.y <= 0.0 || r.y + r.thickness >= *width || r.x0 < 0.0 || r.x1 > *length || r.x1 <= r.x0 {
                        return Err(infeasible("rib must lie inside the plate"));
                    }
                    spans.push((r.y, r.y + r.thickness));
                }
                spans.sort_by(|a, b| a.0.total_cmp(&b.0));
                if spans.windows(2).any(|w| w[1].0 <= w[0].1) {
                    return Err(infeasible("ribs must not touch"));
                }
            }
        }
        Ok(())
    }

    /// Spacing of the uniform lateral subdivision.
    fn spacing(&self, length: f64, width: f64) -> f64 {
        length.max(width) / (self.resolution - 1) as f64
    }

    fn solid_and_axes(&self) -> (BoxSolid, [Vec<f64>; 3]) {
        let res = self.resolution;
        match &self.shape {
            ShapeKind::Plate { length, width, thickness, post } => {
                let (l, w, h) = (*length, *width, *thickness);
                let mut solid = BoxSolid {
                    add: vec![Aabb::new([0.0; 3], [l, w, h])],
                    sub: vec![],
                };
                let (mut kx, mut ky, mut kz) = (vec![], vec![], vec![h / 2.0, h]);
                let mut top = h;
                if let Some(p) = post {
                    solid.add.push(Aabb::new([p.x, p.y, h], [p.x + p.size, p.y + p.size, h + p.height]));
                    kx.extend([p.x, p.x + p.size / 2.0, p.x + p.size]);
                    ky.extend([p.y, p.y + p.size / 2.0, p.y + p.size]);
                    top = h + p.height;
                    kz.push(top);
                }
                let mut z = breakpoints(0.0, top, 2, &kz);
                refine(&mut z, h, top, self.spacing(l, w));
                (solid, [breakpoints(0.0, l, res, &kx), breakpoints(0.0, w, res, &ky), z])
            }
            ShapeKind::HollowBox { length, width, height, floor, walls } => {
                let (l, w, ht, f) = (*length, *width, *height, *floor);
                let [x0, x1, y0, y1] = *walls;
                let solid = BoxSolid {
                    add: vec![Aabb::new([0.0; 3], [l, w, ht])],
                    sub: vec![Aabb::new([x0, y0, f], [l - x1, w - y1, ht + 1.0])],
                };
                let kx = [x0, l - x1];
                let ky = [y0, w - y1];
                let mut z = breakpoints(0.0, ht, 2, &[f / 2.0, f]);
                refine(&mut z, f, ht, self.spacing(l, w));
                (solid, [breakpoints(0.0, l, res, &kx), breakpoints(0.0, w, res, &ky), z])
            }
            ShapeKind::RibbedPlate { length, width, thickness, ribs } => {
                let (l, w, h) = (*length, *width, *thickness);
                let mut solid = BoxSolid {
                    add: vec![Aabb::new([0.0; 3], [l, w, h])],
                    sub: vec![],
                };
                let (mut kx, mut ky, mut kz) = (vec![], vec![], vec![h / 2.0, h]);
                let mut top = h;
                for r in ribs {
                    solid.add.push(Aabb::new([r.x0, r.y, h], [r.x1, r.y + r.thickness, h + r.height]));
                    kx.extend([r.x0, r.x1]);
                    ky.extend([r.y, r.y + r.thickness / 2.0, r.y + r.thickness]);
                    kz.push(h + r.height);
                    top = top.max(h + r.height);
                }
                let mut z = breakpoints(0.0, top, 2, &kz);
                refine(&mut z, h, top, self.spacing(l, w));
                (solid, [breakpoints(0.0, l, res, &kx), breakpoints(0.0, w, res, &ky), z])
            }
        }
    }

    /// Draws a random asymmetric shape of `family` from `rng`.
    pub fn sample<R: Rng + ?Sized>(family: Family, rng: &mut R, resolution: usize, seed: u64) -> Self {
        let length = rng.random_range(21.0..24.0);
        let width = rng.random_range(16.0..18.0);
        fn wall<R: Rng + ?Sized>(rng: &mut R) -> f64 {
            rng.random_range(1.0..1.8)
        }
        let (shape, gate_anchor) = match family {
            Family::Plate => {
                let thickness = wall(rng);
                let size = rng.random_range(1.2..1.8);
                let post = Post {
                    x: rng.random_range(0.6..0.75) * length,
                    y: rng.random_range(0.25..0.4) * width,
                    size,
                    height: rng.random_range(14.5..16.0),
                };
                let anchor = [length / 2.0, width / 2.0, thickness];
                (
                    ShapeKind::Plate {
                        length,
                        width,
                        thickness,
                        post: Some(post),
                    },
                    anchor,
                )
            }
            Family::HollowBox => {
                let walls = [wall(rng), wall(rng), wall(rng), wall(rng)];
                let floor = wall(rng);
                let height = rng.random_range(16.0..18.0);
                let anchor = [length / 2.0, width / 2.0, floor];
                (
                    ShapeKind::HollowBox {
                        length,
                        width,
                        height,
                        floor,
                        walls,
                    },
                    anchor,
                )
            }
            Family::RibbedPlate => {
                let thickness = wall(rng);
                let r1 = Rib {
                    y: rng.random_range(0.2..0.3) * width,
                    thickness: wall(rng),
                    height: rng.random_range(14.5..16.0),
                    x0: 0.0,
                    x1: length,
                };
                let r2 = Rib {
                    y: rng.random_range(0.6..0.7) * width,
                    thickness: wall(rng),
                    height: rng.random_range(14.5..16.0),
                    x0: rng.random_range(0.3..0.4) * length,
                    x1: length,
                };
                let anchor = [length * 0.1, width / 2.0, thickness];
                (
                    ShapeKind::RibbedPlate {
                        length,
                        width,
                        thickness,
                        ribs: vec![r1, r2],
                    },
                    anchor,
                )
            }
        };
        Self {
            shape,
            resolution,
            gate_anchor,
            seed,
        }
    }
}

/// Meshes a shape and records its oracle pairing and gate node.
pub fn gen_shape(spec: &ShapeSpec) -> Result<GeneratedShape> {
    spec.validate()?;
    let (solid, axes) = spec.solid_and_axes();
    let grid = mesh_box_solid(&solid, axes)?;
    let report = validate_watertight(&grid.mesh);
    if !report.watertight {
        return Err(Error::NotWatertight {
            boundary: report.boundary_edges.len(),
            non_manifold: report.non_manifold_edges.len(),
        });
    }
    let [x, y, z] = spec.gate_anchor;
    let gate = nearest_node(&grid.mesh, &Point3::new(x, y, z));
    Ok(GeneratedShape {
        mesh: grid.mesh,
        oracle: grid.oracle,
        gate,
    })
}
