//! On-disk sample bundles and dataset manifests.
//!
//! A bundle directory holds `mesh.off`, `frame.json`, `pairing.csv`,
//! `features.json` (`{"gate": .., "condition": [..]}`) and `targets.csv`
//! (`node_id,dx,dy,dz`). A dataset is a directory of bundles plus
//! `manifest.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{assemble_sample, GraphSample, SampleOptions};
use crate::error::{Error, Result};
use crate::frame::CanonicalFrame;
use crate::mesh::{parse_mesh, write_off, Mesh, MeshFormat, NormalField, Point3};
use crate::thickness::ThicknessPairing;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub mesh: Mesh,
    pub frame: CanonicalFrame,
    pub pairing: ThicknessPairing,
    pub gate: usize,
    pub condition: Vec<f64>,
    pub targets: Vec<Point3>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeaturesJson {
    gate: usize,
    condition: Vec<f64>,
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn targets_to_csv(targets: &[Point3]) -> String {
    let mut s = String::from("node_id,dx,dy,dz\n");
    for (i, t) in targets.iter().enumerate() {
        let _ = writeln!(s, "{i},{:?},{:?},{:?}", t.x, t.y, t.z);
    }
    s
}

pub fn targets_from_csv(text: &str) -> Result<Vec<Point3>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (row, rec) in rdr.deserialize::<(usize, f64, f64, f64)>().enumerate() {
        let (id, x, y, z) = rec?;
        if id != row {
            return Err(Error::Parse {
                line: row + 2,
                msg: format!("expected node_id {row}, found {id}"),
            });
        }
        out.push(Point3::new(x, y, z));
    }
    Ok(out)
}

impl Bundle {
    pub fn write(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        write_text(&dir.join("mesh.off"), &write_off(&self.mesh))?;
        write_text(&dir.join("frame.json"), &self.frame.to_json())?;
        write_text(&dir.join("pairing.csv"), &self.pairing.to_csv())?;
        let features = FeaturesJson {
            gate: self.gate,
            condition: self.condition.clone(),
        };
        write_text(
            &dir.join("features.json"),
            &serde_json::to_string_pretty(&features)?,
        )?;
        write_text(&dir.join("targets.csv"), &targets_to_csv(&self.targets))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let mesh = parse_mesh(read_text(&dir.join("mesh.off"))?.as_bytes(), MeshFormat::Off)?;
        let frame = CanonicalFrame::from_json(&read_text(&dir.join("frame.json"))?)?;
        let pairing = ThicknessPairing::from_csv(&read_text(&dir.join("pairing.csv"))?)?;
        let features: FeaturesJson = serde_json::from_str(&read_text(&dir.join("features.json"))?)?;
        let targets = targets_from_csv(&read_text(&dir.join("targets.csv"))?)?;
        let n = mesh.num_vertices();
        for (what, got) in [("pairing", pairing.len()), ("targets", targets.len())] {
            if got != n {
                return Err(Error::LengthMismatch { what, expected: n, got });
            }
        }
        Ok(Self {
            mesh,
            frame,
            pairing,
            gate: features.gate,
            condition: features.condition,
            targets,
        })
    }

    /// Assembles the network input; normals are recomputed from the mesh.
    pub fn to_sample(&self, options: &SampleOptions) -> Result<GraphSample> {
        let normals = NormalField::compute(&self.mesh)?;
        assemble_sample(
            &self.mesh,
            &normals,
            &self.frame,
            &self.pairing,
            self.gate,
            &self.condition,
            &self.targets,
            options,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    /// Samples of shapes withheld from training entirely.
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Bundle directory name relative to the dataset root.
    pub name: String,
    pub split: Split,
    pub shape: usize,
    pub condition: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub cond_dim: usize,
    pub samples: Vec<ManifestEntry>,
    /// Generator-specific record (shape and field specs).
    #[serde(default)]
    pub generator: serde_json::Value,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_str(&read_text(&dir.join("manifest.json"))?)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Mismatch(format!(
                "manifest version {} (expected {MANIFEST_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        write_text(&dir.join("manifest.json"), &serde_json::to_string_pretty(self)?)
    }
}

/// A loaded dataset: manifest plus all bundles in manifest order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub bundles: Vec<Bundle>,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self> {
        let manifest = Manifest::read(root)?;
        let bundles = manifest
            .samples
            .iter()
            .map(|e| {
                let b = Bundle::read(&root.join(&e.name))?;
                if b.condition.len() != manifest.cond_dim {
                    return Err(Error::Mismatch(format!(
                        "bundle {} has {} condition values, manifest says {}",
                        e.name,
                        b.condition.len(),
                        manifest.cond_dim
                    )));
                }
                Ok(b)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            bundles,
        })
    }

    /// Indices of the samples in `split`, in manifest order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.manifest
            .samples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.manifest.samples[i].name
    }
}
