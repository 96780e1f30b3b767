use std::fmt::Write as _;
use std::str::FromStr;

use super::{Mesh, Point3};
use crate::error::{Error, Result};

/// Supported on-disk mesh formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    /// ASCII OFF.
    Off,
    /// Wavefront OBJ restricted to `v` and `f` records.
    Obj,
}

impl MeshFormat {
    /// Guesses the format from a file extension (case-insensitive).
    pub fn from_extension(path: &std::path::Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(MeshFormat::Off),
            "obj" => Some(MeshFormat::Obj),
            _ => None,
        }
    }
}

/// Parses raw file content. Errors carry 1-based line numbers.
pub fn parse_mesh(bytes: &[u8], format: MeshFormat) -> Result<Mesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        Error::Parse {
            line,
            msg: "invalid UTF-8".into(),
        }
    })?;
    match format {
        MeshFormat::Off => parse_off(text),
        MeshFormat::Obj => parse_obj(text),
    }
}

fn parse_num<T: FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected {what}, found {tok:?}"),
    })
}

/// Non-empty lines with comments stripped, paired with their line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_off(text: &str) -> Result<Mesh> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let mut head_toks = header.split_whitespace();
    if head_toks.next() != Some("OFF") {
        return Err(Error::Parse {
            line: hline,
            msg: format!("expected OFF header, found {header:?}"),
        });
    }
    // counts may share the header line ("OFF 8 12 0")
    let rest: Vec<&str> = head_toks.collect();
    let (cline, counts): (usize, Vec<&str>) = if rest.is_empty() {
        let (l, c) = lines.next().ok_or(Error::Parse {
            line: hline,
            msg: "missing element counts".into(),
        })?;
        (l, c.split_whitespace().collect())
    } else {
        (hline, rest)
    };
    if counts.len() < 2 {
        return Err(Error::Parse {
            line: cline,
            msg: "expected vertex and face counts".into(),
        });
    }
    let nv: usize = parse_num(counts[0], cline, "vertex count")?;
    let nf: usize = parse_num(counts[1], cline, "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, s) = lines.next().ok_or(Error::Parse {
            line: cline,
            msg: format!("expected {nv} vertices, found {}", vertices.len()),
        })?;
        let toks: Vec<&str> = s.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(Error::Parse {
                line: l,
                msg: "vertex needs 3 coordinates".into(),
            });
        }
        vertices.push(Point3::new(
            parse_num(toks[0], l, "coordinate")?,
            parse_num(toks[1], l, "coordinate")?,
            parse_num(toks[2], l, "coordinate")?,
        ));
    }

    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, s) = lines.next().ok_or(Error::Parse {
            line: cline,
            msg: format!("expected {nf} faces, found {}", faces.len()),
        })?;
        let toks: Vec<&str> = s.split_whitespace().collect();
        let count: usize = parse_num(toks[0], l, "face vertex count")?;
        if count != 3 {
            return Err(Error::NonTriangleFace { line: l, count });
        }
        if toks.len() < 4 {
            return Err(Error::Parse {
                line: l,
                msg: "face lists fewer than 3 indices".into(),
            });
        }
        let mut f = [0usize; 3];
        for (slot, tok) in f.iter_mut().zip(&toks[1..4]) {
            let idx: i64 = parse_num(tok, l, "vertex index")?;
            if idx < 0 || idx as usize >= nv {
                return Err(Error::IndexOutOfRange {
                    line: l,
                    index: idx,
                    count: nv,
                });
            }
            *slot = idx as usize;
        }
        faces.push(f);
    }
    Mesh::new(vertices, faces)
}

fn parse_obj(text: &str) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut raw_faces: Vec<(usize, [i64; 3])> = Vec::new();
    for (l, s) in content_lines(text) {
        let mut toks = s.split_whitespace();
        match toks.next() {
            Some("v") => {
                let c: Vec<&str> = toks.collect();
                if c.len() < 3 {
                    return Err(Error::Parse {
                        line: l,
                        msg: "vertex needs 3 coordinates".into(),
                    });
                }
                vertices.push(Point3::new(
                    parse_num(c[0], l, "coordinate")?,
                    parse_num(c[1], l, "coordinate")?,
                    parse_num(c[2], l, "coordinate")?,
                ));
            }
            Some("f") => {
                let c: Vec<&str> = toks.collect();
                if c.len() != 3 {
                    return Err(Error::NonTriangleFace {
                        line: l,
                        count: c.len(),
                    });
                }
                let mut f = [0i64; 3];
                for (slot, tok) in f.iter_mut().zip(&c) {
                    // "7/1/3" -> vertex 7
                    let head = tok.split('/').next().unwrap_or("");
                    *slot = parse_num(head, l, "vertex index")?;
                }
                raw_faces.push((l, f));
            }
            // texture coordinates, normals, groups etc. carry no geometry we use
            _ => {}
        }
    }
    let nv = vertices.len();
    let mut faces = Vec::with_capacity(raw_faces.len());
    for (l, raw) in raw_faces {
        let mut f = [0usize; 3];
        for (slot, &idx) in f.iter_mut().zip(&raw) {
            // 1-based; negative indices count back from the end
            let resolved = if idx > 0 { idx - 1 } else { nv as i64 + idx };
            if idx == 0 || resolved < 0 || resolved as usize >= nv {
                return Err(Error::IndexOutOfRange {
                    line: l,
                    index: idx,
                    count: nv,
                });
            }
            *slot = resolved as usize;
        }
        faces.push(f);
    }
    Mesh::new(vertices, faces)
}

/// Serializes as ASCII OFF using shortest round-trip float formatting.
pub fn write_off(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "OFF");
    let _ = writeln!(s, "{} {} 0", mesh.num_vertices(), mesh.num_faces());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}
