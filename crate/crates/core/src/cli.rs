//! Commands behind the `temnn` binary.
//!
//! Every command writes its machine-readable output as CSV/JSON files and a
//! short summary to stdout. Exit codes: 0 success, 1 other failure, 2 bad
//! spec or config, 3 non-watertight mesh, 4 model/dataset mismatch,
//! 5 training stopped on a non-finite loss.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::bundle::{create_dir, read_text, write_text};
use crate::features::{assemble_sample, geodesic_from_gate, radius_from_cm, CoordMode, Dataset, Geometry, Split};
use crate::mesh::{parse_mesh, validate_watertight, MeshFormat, Point3};
use crate::model::{Model, ModelConfig, TauInit};
use crate::synth::{gen_dataset, DatasetSpec};
use crate::thickness::thickness_histogram;
use crate::train::{evaluate, log_to_csv, resolve_model_config, sweep_to_csv, tau_sweep, train, EvalMode, TrainConfig};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_SPEC: i32 = 2;
pub const EXIT_NOT_WATERTIGHT: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;
pub const EXIT_NAN: i32 = 5;

pub const DEFAULT_TAU_GRID: &str = "0,2,4,5.68,8,12,20";

#[derive(Debug, Parser)]
#[command(name = "temnn", version, about = "Thickness-aware equivariant mesh networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData {
        /// JSON dataset spec; defaults apply to missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute frame, thickness pairs and node features for one mesh.
    Preprocess {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        gate: usize,
    },
    /// Train a model; artifacts go to a run directory under the output dir.
    Train(RunArgs),
    /// Score a checkpoint on one dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "in_dist", value_parser = parse_mode)]
        mode: EvalMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        /// Defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model per fixed threshold and tabulate the metrics.
    TauSweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = DEFAULT_TAU_GRID)]
        grid: String,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Predict per-node displacements for a standalone mesh.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        /// Comma-separated condition vector.
        #[arg(long, default_value = "")]
        condition: String,
        #[arg(long, default_value_t = 0)]
        gate: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Thickness histogram of a dataset split.
    Inspect {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 24)]
        bins: usize,
        #[arg(long, default_value = "train", value_parser = parse_split)]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Config file plus flag overrides shared by `train` and `tau-sweep`.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub tau_lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub fixed_tau: Option<f64>,
    /// `median` or a number.
    #[arg(long, value_parser = parse_tau_init)]
    pub tau_init: Option<TauInit>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = parse_enum::<CoordMode>)]
    pub coord_mode: Option<CoordMode>,
    #[arg(long)]
    pub use_thickness: Option<bool>,
    #[arg(long)]
    pub use_t: Option<bool>,
    #[arg(long)]
    pub use_dot: Option<bool>,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<EvalMode, String> {
    EvalMode::parse(s).ok_or_else(|| format!("unknown mode {s:?} (in_dist | ood_rotated)"))
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    Split::parse(s).map_err(|e| e.to_string())
}

fn parse_tau_init(s: &str) -> std::result::Result<TauInit, String> {
    if s == "median" {
        return Ok(TauInit::Median);
    }
    s.parse().map(TauInit::Constant).map_err(|_| format!("expected `median` or a number, got {s:?}"))
}

/// Everything a training run depends on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_text(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies flag overrides; flags win over the file.
    pub fn apply(&mut self, a: &RunArgs) {
        let (m, t) = (&mut self.model, &mut self.train);
        if let Some(v) = &a.data {
            self.data = Some(v.clone());
        }
        if let Some(v) = &a.out {
            self.out = Some(v.clone());
        }
        macro_rules! set {
            ($($dst:expr => $src:expr),* $(,)?) => {
                $(if let Some(v) = $src { $dst = v; })*
            };
        }
        set! {
            t.seed => a.seed,
            t.epochs => a.epochs,
            t.lr => a.lr,
            t.tau_lr => a.tau_lr,
            t.weight_decay => a.weight_decay,
            m.tau_init => a.tau_init,
            m.layers => a.layers,
            m.hidden_dim => a.hidden_dim,
            m.alpha => a.alpha,
            m.coord_mode => a.coord_mode,
            m.use_thickness => a.use_thickness,
            m.thick_flags.use_t => a.use_t,
            m.thick_flags.use_dot => a.use_dot,
        }
        if a.fixed_tau.is_some() {
            t.fixed_tau = a.fixed_tau;
        }
    }

    pub fn from_args(a: &RunArgs) -> Result<Self> {
        let mut c = match &a.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        c.apply(a);
        c.model.validate()?;
        c.train.validate()?;
        Ok(c)
    }

    fn data_dir(&self) -> Result<&Path> {
        let d = self.data.as_deref().ok_or_else(|| Error::Config("no dataset given (--data or \"data\")".into()))?;
        if !d.is_dir() {
            return Err(Error::Config(format!("dataset directory {} does not exist", d.display())));
        }
        Ok(d)
    }

    fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| Error::Config("no output directory given (--out or \"out\")".into()))
    }

    /// The configuration as recorded in a run directory, which does not
    /// depend on where the run directory lives.
    pub fn snapshot(&self) -> Self {
        Self {
            out: None,
            ..self.clone()
        }
    }

    /// Short content hash of the snapshot.
    pub fn hash(&self, extra: &str) -> String {
        let json = serde_json::to_string(&self.snapshot()).expect("config serializes");
        let digest = Sha256::digest(format!("{json}\n{extra}").as_bytes());
        digest.iter().take(6).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InfeasibleSpec(_) | Error::Json(_) => EXIT_SPEC,
        Error::NotWatertight { .. } => EXIT_NOT_WATERTIGHT,
        Error::Mismatch(_) | Error::LengthMismatch { .. } => EXIT_MISMATCH,
        Error::NanLoss { .. } => EXIT_NAN,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` and runs the command; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_SPEC } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { spec, out, seed } => cmd_gen_data(spec.as_deref(), &out, seed),
        Command::Preprocess { mesh, out, gate } => cmd_preprocess(&mesh, &out, gate),
        Command::Train(args) => cmd_train(&args),
        Command::Eval {
            checkpoint,
            data,
            mode,
            seed,
            split,
            out,
        } => cmd_eval(&checkpoint, &data, mode, seed, split, out.as_deref()),
        Command::TauSweep { run, grid, split } => cmd_tau_sweep(&run, &grid, split),
        Command::Predict {
            checkpoint,
            mesh,
            condition,
            gate,
            out,
        } => cmd_predict(&checkpoint, &mesh, &condition, gate, &out),
        Command::Inspect {
            data,
            tau,
            bins,
            split,
            out,
        } => cmd_inspect(&data, tau, bins, split, &out),
    }
}

fn cmd_gen_data(spec: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let spec: DatasetSpec = match spec {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| Error::InfeasibleSpec(format!("{}: {e}", p.display())))?,
        None => DatasetSpec::default(),
    };
    let m = gen_dataset(&spec, out, seed)?;
    let count = |s: Split| m.samples.iter().filter(|e| e.split == s).count();
    println!(
        "wrote {} bundles to {} (train {}, val {}, test {})",
        m.samples.len(),
        out.display(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test)
    );
    Ok(())
}

fn read_mesh(path: &Path) -> Result<crate::mesh::Mesh> {
    let format = MeshFormat::from_extension(path)
        .ok_or_else(|| Error::Config(format!("{}: unknown mesh extension (expected .off or .obj)", path.display())))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&bytes, format)
}

/// Reads a mesh and rejects it with the offending edges listed on stderr.
fn read_watertight(path: &Path) -> Result<Geometry> {
    let mesh = read_mesh(path)?;
    let report = validate_watertight(&mesh);
    if !report.watertight {
        for [a, b] in &report.boundary_edges {
            eprintln!("boundary edge {a} {b}");
        }
        for [a, b] in &report.non_manifold_edges {
            eprintln!("non-manifold edge {a} {b}");
        }
    }
    Geometry::compute(mesh)
}

fn points_csv(header: &str, rows: &[Point3]) -> String {
    let mut s = format!("node_id,{header}\n");
    for (i, p) in rows.iter().enumerate() {
        let _ = writeln!(s, "{i},{:?},{:?},{:?}", p.x, p.y, p.z);
    }
    s
}

fn cmd_preprocess(mesh: &Path, out: &Path, gate: usize) -> Result<()> {
    let geo = read_watertight(mesh)?;
    let g = geodesic_from_gate(&geo.mesh, gate)?;
    let r = radius_from_cm(&geo.mesh, &geo.frame.center);
    create_dir(out)?;
    write_text(&out.join("frame.json"), &geo.frame.to_json())?;
    write_text(&out.join("pairing.csv"), &geo.pairing.to_csv())?;
    let inv = geo.frame.to_invariant(geo.mesh.vertices());
    write_text(&out.join("invariant_coords.csv"), &points_csv("x,y,z", &inv))?;
    let mut feats = String::from("node_id,geodesic,radius\n");
    for (i, (g, r)) in g.iter().zip(&r).enumerate() {
        let _ = writeln!(feats, "{i},{g:?},{r:?}");
    }
    write_text(&out.join("features.csv"), &feats)?;
    let valid = geo.pairing.nodes.iter().filter(|p| p.valid()).count();
    println!(
        "{} nodes, {valid} with a thickness partner; wrote {}",
        geo.mesh.num_vertices(),
        out.display()
    );
    Ok(())
}

fn write_config(dir: &Path, config: &RunConfig) -> Result<()> {
    write_text(&dir.join("config.json"), &serde_json::to_string_pretty(&config.snapshot())?)
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let mut config = RunConfig::from_args(args)?;
    let ds = Dataset::load(config.data_dir()?)?;
    config.model = resolve_model_config(&config.model, &ds)?;
    let dir = config.out_dir()?.join(format!("train-{}-s{}", config.hash(""), config.train.seed));
    create_dir(&dir)?;
    write_config(&dir, &config)?;
    let out = train(&ds, &config.model, &config.train)?;
    write_text(&dir.join("train_log.csv"), &log_to_csv(&out.log))?;
    write_text(&dir.join("checkpoint.json"), &out.model.to_checkpoint_json())?;
    let tau = out.model.tau().map(|t| format!("{t:?}")).unwrap_or_default();
    let nan = out.nan_abort.map(|e| e.to_string()).unwrap_or_default();
    write_text(
        &dir.join("summary.csv"),
        &format!("best_epoch,best_val_loss,tau,nan_abort\n{},{:?},{tau},{nan}\n", out.best_epoch, out.best_val_loss),
    )?;
    println!(
        "run {}: best epoch {} val loss {:.6} tau {}",
        dir.display(),
        out.best_epoch,
        out.best_val_loss,
        if tau.is_empty() { "-" } else { &tau }
    );
    match out.nan_abort {
        Some(epoch) => Err(Error::NanLoss { epoch }),
        None => Ok(()),
    }
}

fn load_checkpoint(path: &Path) -> Result<Model> {
    Model::from_checkpoint_json(&read_text(path)?)
}

fn mode_name(mode: EvalMode) -> &'static str {
    match mode {
        EvalMode::InDist => "in_dist",
        EvalMode::OodRotated => "ood_rotated",
    }
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

fn cmd_eval(checkpoint: &Path, data: &Path, mode: EvalMode, seed: u64, split: Split, out: Option<&Path>) -> Result<()> {
    let model = load_checkpoint(checkpoint)?;
    let ds = Dataset::load(data)?;
    resolve_model_config(&model.config, &ds)?;
    let report = evaluate(&model, &ds, split, mode, seed)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| {
        checkpoint.parent().map(Path::to_path_buf).unwrap_or_default()
    });
    create_dir(&dir)?;
    let file = dir.join(format!("eval_{}_{}_s{seed}.csv", mode_name(mode), split_name(split)));
    write_text(&file, &report.to_csv())?;
    let a = &report.aggregate;
    let r2 = a.r2.map(|r| format!("{r:.4}")).unwrap_or_else(|| "n/a".into());
    println!("rmse {:.6} mae {:.6} r2 {r2}; wrote {}", a.rmse, a.mae, file.display());
    Ok(())
}

pub fn parse_grid(grid: &str) -> Result<Vec<f64>> {
    grid.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("bad tau grid value {s:?}")))
        })
        .collect()
}

fn cmd_tau_sweep(args: &RunArgs, grid: &str, split: Split) -> Result<()> {
    let mut config = RunConfig::from_args(args)?;
    let grid = parse_grid(grid)?;
    let ds = Dataset::load(config.data_dir()?)?;
    config.model = resolve_model_config(&config.model, &ds)?;
    let extra = format!("{grid:?} {}", split_name(split));
    let dir = config.out_dir()?.join(format!("sweep-{}-s{}", config.hash(&extra), config.train.seed));
    create_dir(&dir)?;
    write_config(&dir, &config)?;
    let rows = tau_sweep(&ds, &config.model, &config.train, &grid, split)?;
    write_text(&dir.join("tau_sweep.csv"), &sweep_to_csv(&rows))?;
    for r in &rows {
        let r2 = r.metrics.r2.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
        println!("tau {:>6} rmse {:.6} r2 {r2}", r.tau, r.metrics.rmse);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn parse_condition(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|v| v.parse().map_err(|_| Error::Config(format!("bad condition value {v:?}"))))
        .collect()
}

fn cmd_predict(checkpoint: &Path, mesh: &Path, condition: &str, gate: usize, out: &Path) -> Result<()> {
    let model = load_checkpoint(checkpoint)?;
    let condition = parse_condition(condition)?;
    let geo = read_watertight(mesh)?;
    let zeros = vec![Point3::zeros(); geo.mesh.num_vertices()];
    let sample = assemble_sample(
        &geo.mesh,
        &geo.normals,
        &geo.frame,
        &geo.pairing,
        gate,
        &condition,
        &zeros,
        &model.config.sample_options(),
    )?;
    model.check_sample(&sample)?;
    let pred = model.predict(&sample)?;
    let mut s = String::from("node_id,dx,dy,dz,dx_inv,dy_inv,dz_inv\n");
    for (i, (o, c)) in pred.p_orig.iter().zip(&pred.p_inv).enumerate() {
        let _ = writeln!(s, "{i},{:?},{:?},{:?},{:?},{:?},{:?}", o.x, o.y, o.z, c.x, c.y, c.z);
    }
    create_dir(out)?;
    write_text(&out.join("prediction.csv"), &s)?;
    println!("{} nodes; wrote {}", pred.p_orig.len(), out.join("prediction.csv").display());
    Ok(())
}

fn cmd_inspect(data: &Path, tau: f64, bins: usize, split: Split, out: &Path) -> Result<()> {
    if !tau.is_finite() {
        return Err(Error::Config("tau must be finite".into()));
    }
    let ds = Dataset::load(data)?;
    let t: Vec<f64> = ds.indices(split).into_iter().flat_map(|i| ds.bundles[i].pairing.valid_thickness()).collect();
    let h = thickness_histogram(&t, tau, bins);
    create_dir(out)?;
    write_text(&out.join("thickness_hist.csv"), &h.to_csv())?;
    write_text(
        &out.join("thickness_summary.csv"),
        &format!("tau,total,above,fraction_above\n{tau:?},{},{},{:?}\n", h.total, h.above, h.fraction_above()),
    )?;
    println!(
        "{} valid thicknesses, {:.2}% above tau={tau}; wrote {}",
        h.total,
        100.0 * h.fraction_above(),
        out.display()
    );
    Ok(())
}
