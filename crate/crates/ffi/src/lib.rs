//! C interface to `temnn`.
//!
//! Objects are opaque handles created by `*_load` / `*_new` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`TemnnStatus`]; on failure [`temnn_last_error`] describes the cause for
//! the calling thread. Output buffers are caller-allocated and their length
//! is checked against the expected size.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use temnn::features::{assemble_sample, Geometry};
use temnn::mesh::{parse_mesh, validate_watertight, Mesh, MeshFormat, Point3};
use temnn::model::Model;
use temnn::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    NotWatertight = 5,
    Mismatch = 6,
    Geometry = 7,
    BufferSize = 8,
    Panic = 9,
}

/// A triangle mesh with lazily derived geometry.
pub struct TemnnMesh {
    mesh: Mesh,
    geometry: Option<Geometry>,
}

/// A trained model loaded from a checkpoint.
pub struct TemnnModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TemnnStatus {
    match e {
        Error::Io { .. } => TemnnStatus::Io,
        Error::Parse { .. } | Error::NonTriangleFace { .. } | Error::IndexOutOfRange { .. } | Error::Json(_) | Error::Csv(_) => {
            TemnnStatus::Parse
        }
        Error::NotWatertight { .. } => TemnnStatus::NotWatertight,
        Error::Mismatch(_) | Error::LengthMismatch { .. } | Error::ShapeMismatch { .. } => TemnnStatus::Mismatch,
        Error::Config(_) | Error::InvalidGate { .. } | Error::InfeasibleSpec(_) => TemnnStatus::InvalidArgument,
        _ => TemnnStatus::Geometry,
    }
}

/// Runs `f`, recording errors and converting panics.
fn guard<F: FnOnce() -> Result<(), (TemnnStatus, String)>>(f: F) -> TemnnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TemnnStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TemnnStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (TemnnStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TemnnStatus, String) {
    (TemnnStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, (TemnnStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (TemnnStatus::InvalidArgument, "path is not valid UTF-8".to_string()))?;
    Ok(Path::new(s))
}

unsafe fn out_slice<'a>(buf: *mut f64, len: usize, expected: usize) -> Result<&'a mut [f64], (TemnnStatus, String)> {
    if buf.is_null() {
        return Err(null("output buffer"));
    }
    if len != expected {
        return Err((TemnnStatus::BufferSize, format!("buffer holds {len} values, {expected} required")));
    }
    Ok(std::slice::from_raw_parts_mut(buf, len))
}

impl TemnnMesh {
    fn geometry(&mut self) -> Result<&Geometry, (TemnnStatus, String)> {
        if self.geometry.is_none() {
            self.geometry = Some(Geometry::compute(self.mesh.clone()).map_err(lib_err)?);
        }
        Ok(self.geometry.as_ref().expect("just computed"))
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn temnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn temnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a mesh from `n_vertices x 3` coordinates and `n_faces x 3`
/// zero-based vertex indices.
///
/// # Safety
/// `vertices` and `faces` must point to arrays of the stated sizes and `out`
/// to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn temnn_mesh_new(
    vertices: *const f64,
    n_vertices: usize,
    faces: *const u32,
    n_faces: usize,
    out: *mut *mut TemnnMesh,
) -> TemnnStatus {
    guard(|| {
        if vertices.is_null() || faces.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let v = std::slice::from_raw_parts(vertices, 3 * n_vertices);
        let f = std::slice::from_raw_parts(faces, 3 * n_faces);
        let points = v.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect();
        let tris = f.chunks_exact(3).map(|c| [c[0] as usize, c[1] as usize, c[2] as usize]).collect();
        let mesh = Mesh::new(points, tris).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TemnnMesh { mesh, geometry: None }));
        Ok(())
    })
}

/// Reads an `.off` or `.obj` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn temnn_mesh_load(path: *const c_char, out: *mut *mut TemnnMesh) -> TemnnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        let format = MeshFormat::from_extension(path)
            .ok_or_else(|| (TemnnStatus::InvalidArgument, format!("{}: unknown mesh extension", path.display())))?;
        let bytes = std::fs::read(path).map_err(|e| (TemnnStatus::Io, format!("{}: {e}", path.display())))?;
        let mesh = parse_mesh(&bytes, format).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TemnnMesh { mesh, geometry: None }));
        Ok(())
    })
}

/// # Safety
/// `mesh` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn temnn_mesh_free(mesh: *mut TemnnMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Vertex count, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn temnn_mesh_num_vertices(mesh: *const TemnnMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.num_vertices())
}

/// Writes 1 to `watertight` when every edge has exactly two faces, and the
/// number of boundary edges to `boundary_edges`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn temnn_mesh_watertight(
    mesh: *const TemnnMesh,
    watertight: *mut i32,
    boundary_edges: *mut usize,
) -> TemnnStatus {
    guard(|| {
        let m = mesh.as_ref().ok_or_else(|| null("mesh"))?;
        if watertight.is_null() || boundary_edges.is_null() {
            return Err(null("output"));
        }
        let r = validate_watertight(&m.mesh);
        *watertight = i32::from(r.watertight);
        *boundary_edges = r.boundary_edges.len();
        Ok(())
    })
}

/// Per-node thickness into `thickness` (length N; 0 for unpaired nodes) and
/// optionally partner indices into `partner` (length N; -1 when unpaired).
///
/// # Safety
/// `mesh` must be live; buffers must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn temnn_mesh_thickness(
    mesh: *mut TemnnMesh,
    thickness: *mut f64,
    partner: *mut i64,
    len: usize,
) -> TemnnStatus {
    guard(|| {
        let m = mesh.as_mut().ok_or_else(|| null("mesh"))?;
        let n = m.mesh.num_vertices();
        let t = out_slice(thickness, len, n)?;
        let geo = m.geometry()?;
        for (dst, p) in t.iter_mut().zip(&geo.pairing.nodes) {
            *dst = p.thickness;
        }
        if !partner.is_null() {
            let out = std::slice::from_raw_parts_mut(partner, len);
            for (dst, p) in out.iter_mut().zip(&geo.pairing.nodes) {
                *dst = p.partner.map_or(-1, |j| j as i64);
            }
        }
        Ok(())
    })
}

/// Canonical frame: `rotation` receives 9 values in column-major order
/// (columns are the principal axes), `center` receives 3.
///
/// # Safety
/// `mesh` must be live; `rotation` and `center` must hold 9 and 3 values.
#[no_mangle]
pub unsafe extern "C" fn temnn_mesh_frame(mesh: *mut TemnnMesh, rotation: *mut f64, center: *mut f64) -> TemnnStatus {
    guard(|| {
        let m = mesh.as_mut().ok_or_else(|| null("mesh"))?;
        let r = out_slice(rotation, 9, 9)?;
        let c = out_slice(center, 3, 3)?;
        let f = m.geometry()?.frame;
        r.copy_from_slice(f.rotation.as_slice());
        c.copy_from_slice(f.center.as_slice());
        Ok(())
    })
}

/// Invariant coordinates, row-major `N x 3`.
///
/// # Safety
/// `mesh` must be live; `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn temnn_mesh_invariant_coords(mesh: *mut TemnnMesh, out: *mut f64, len: usize) -> TemnnStatus {
    guard(|| {
        let m = mesh.as_mut().ok_or_else(|| null("mesh"))?;
        let dst = out_slice(out, len, 3 * m.mesh.num_vertices())?;
        let geo = m.geometry()?;
        for (d, p) in dst.chunks_exact_mut(3).zip(geo.frame.to_invariant(geo.mesh.vertices())) {
            d.copy_from_slice(p.as_slice());
        }
        Ok(())
    })
}

/// Loads a checkpoint written by `temnn train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn temnn_model_load(path: *const c_char, out: *mut *mut TemnnModel) -> TemnnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        let text = std::fs::read_to_string(path).map_err(|e| (TemnnStatus::Io, format!("{}: {e}", path.display())))?;
        let model = Model::from_checkpoint_json(&text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TemnnModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn temnn_model_free(model: *mut TemnnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Length of the condition vector the model expects; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn temnn_model_cond_dim(model: *const TemnnModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.cond_dim)
}

/// Threshold value; returns NaN when the model has no thickness branch.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn temnn_model_tau(model: *const TemnnModel) -> f64 {
    model.as_ref().and_then(|m| m.model.tau()).unwrap_or(f64::NAN)
}

/// Predicts per-node displacement in the mesh's own frame, row-major
/// `N x 3`, for injection node `gate` and the given condition vector.
///
/// # Safety
/// Handles must be live; `condition` must hold `cond_len` values and `out`
/// `len` values.
#[no_mangle]
pub unsafe extern "C" fn temnn_model_predict(
    model: *const TemnnModel,
    mesh: *mut TemnnMesh,
    gate: usize,
    condition: *const f64,
    cond_len: usize,
    out: *mut f64,
    len: usize,
) -> TemnnStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.model;
        let m = mesh.as_mut().ok_or_else(|| null("mesh"))?;
        let cond: &[f64] = if cond_len == 0 {
            &[]
        } else if condition.is_null() {
            return Err(null("condition"));
        } else {
            std::slice::from_raw_parts(condition, cond_len)
        };
        let dst = out_slice(out, len, 3 * m.mesh.num_vertices())?;
        let geo = m.geometry()?;
        let zeros = vec![Point3::zeros(); geo.mesh.num_vertices()];
        let sample = assemble_sample(
            &geo.mesh,
            &geo.normals,
            &geo.frame,
            &geo.pairing,
            gate,
            cond,
            &zeros,
            &model.config.sample_options(),
        )
        .map_err(lib_err)?;
        model.check_sample(&sample).map_err(lib_err)?;
        let pred = model.predict(&sample).map_err(lib_err)?;
        for (d, p) in dst.chunks_exact_mut(3).zip(&pred.p_orig) {
            d.copy_from_slice(p.as_slice());
        }
        Ok(())
    })
}
