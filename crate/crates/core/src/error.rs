use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: face has {count} vertices, only triangles are supported")]
    NonTriangleFace { line: usize, count: usize },

    #[error("line {line}: vertex index {index} out of range ({count} vertices)")]
    IndexOutOfRange { line: usize, index: i64, count: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("face {face} is degenerate (zero area)")]
    DegenerateFace { face: usize },

    #[error("vertex {vertex} has no incident face")]
    IsolatedVertex { vertex: usize },

    #[error("incident face normals cancel at vertex {vertex}")]
    CancellingNormals { vertex: usize },

    #[error("mesh is not watertight: {boundary} boundary edge(s), {non_manifold} non-manifold edge(s)")]
    NotWatertight { boundary: usize, non_manifold: usize },

    #[error("point set is empty")]
    EmptyPointSet,

    #[error("at least {needed} vertices required, got {got}")]
    TooFewVertices { needed: usize, got: usize },

    #[error("canonical frame not sign-determinable (degenerate axes {flags:?})")]
    SymmetricFrame { flags: [bool; 3] },

    #[error("node {node} is unreachable from the gate")]
    Disconnected { node: usize },

    #[error("gate index {gate} out of range ({count} nodes)")]
    InvalidGate { gate: usize, count: usize },

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: shape mismatch: {msg}")]
    ShapeMismatch { op: &'static str, msg: String },

    #[error("{op}: index {index} out of range for {rows} rows")]
    IndexRange {
        op: &'static str,
        index: usize,
        rows: usize,
    },

    #[error("loss must be a 1x1 tensor, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model/dataset mismatch: {0}")]
    Mismatch(String),

    #[error("non-finite loss at epoch {epoch}")]
    NanLoss { epoch: usize },

    #[error("infeasible shape spec: {0}")]
    InfeasibleSpec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
