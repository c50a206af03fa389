//! C ABI over `bloch_topo`.
//!
//! Models are opaque handles created by the `bt_model_*` constructors and
//! released with [`bt_model_free`]. Every entry point returns a [`BtStatus`];
//! results are written through out-pointers. On failure the message is kept
//! per thread and read back with [`bt_last_error_message`]. Panics never cross
//! the boundary; they come back as [`BtStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bloch_topo::chern::{self, ChernReport};
use bloch_topo::field::{band_energy, velocity};
use bloch_topo::zeros::{euler_characteristic, ZeroKind};
use bloch_topo::{models, BrillouinPoint, Error, ModelSpec, Part};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    UnknownModel = 3,
    Config = 4,
    Singular = 5,
    NonConvergence = 6,
    NonIsolated = 7,
    IllConditionedLoop = 8,
    Gapless = 9,
    NotHermitian = 10,
    Precondition = 11,
    Io = 12,
    InvalidString = 13,
    Panic = 14,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtPart {
    Re = 0,
    Im = 1,
}

impl From<BtPart> for Part {
    fn from(p: BtPart) -> Self {
        match p {
            BtPart::Re => Part::Re,
            BtPart::Im => Part::Im,
        }
    }
}

/// Opaque model handle.
pub struct BtModel {
    inner: ModelSpec,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BtEulerSummary {
    pub chi: i32,
    pub index_sum: i32,
    pub n_source: usize,
    pub n_sink: usize,
    pub n_saddle: usize,
    pub n_degenerate: usize,
    pub n_singular: usize,
    pub n_excluded: usize,
    /// 1 or 0 against the model's expected value, -1 when none is known.
    pub matches_expected: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BtChernResult {
    pub c_re: f64,
    pub c_im: f64,
    /// Valid only when `has_int` is true.
    pub c_int: i32,
    pub has_int: bool,
    pub gapless: bool,
    /// False when `sqrt(h·h)` has no branch continuous over the mesh.
    pub branch_consistent: bool,
    pub min_gap: f64,
    pub mesh_n: usize,
}

struct Failure {
    status: BtStatus,
    message: String,
}

impl Failure {
    fn new(status: BtStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidParameter { .. }
            | Error::MissingParameter { .. }
            | Error::UnknownParameter { .. } => BtStatus::InvalidParameter,
            Error::UnknownModel(_) => BtStatus::UnknownModel,
            Error::Config { .. } => BtStatus::Config,
            Error::Singular { .. } => BtStatus::Singular,
            Error::NonConvergence { .. } => BtStatus::NonConvergence,
            Error::NonIsolated { .. } => BtStatus::NonIsolated,
            Error::IllConditionedLoop { .. } => BtStatus::IllConditionedLoop,
            Error::Gapless { .. } => BtStatus::Gapless,
            Error::NotHermitian(_) => BtStatus::NotHermitian,
            Error::Precondition(_) => BtStatus::Precondition,
            Error::Io(_) => BtStatus::Io,
        };
        Self::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> BtStatus {
    let failure = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return BtStatus::Ok,
        Ok(Err(failure)) => failure,
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Failure::new(BtStatus::Panic, format!("panic: {what}"))
        }
    };
    set_last_error(&failure.message);
    failure.status
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(
            BtStatus::NullPointer,
            format!("`{name}` is null"),
        ))
    } else {
        Ok(())
    }
}

unsafe fn model_ref<'a>(model: *const BtModel) -> Result<&'a ModelSpec, Failure> {
    non_null(model, "model")?;
    Ok(&(*model).inner)
}

unsafe fn emit_model(
    out: *mut *mut BtModel,
    built: bloch_topo::Result<ModelSpec>,
) -> Result<(), Failure> {
    non_null(out, "out")?;
    *out = ptr::null_mut();
    let inner = built?;
    *out = Box::into_raw(Box::new(BtModel { inner }));
    Ok(())
}

/// Builds the sphere model. Requires `r > 0` and `a > 0`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn bt_model_sphere(r: f64, a: f64, out: *mut *mut BtModel) -> BtStatus {
    guard(|| emit_model(out, models::builtin_sphere(r, a)))
}

/// Builds the Hermitian torus model. Requires `big_r > r > 0`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn bt_model_torus(
    big_r: f64,
    r: f64,
    a: f64,
    out: *mut *mut BtModel,
) -> BtStatus {
    guard(|| emit_model(out, models::builtin_torus(big_r, r, a)))
}

/// Builds the non-Hermitian torus with the imaginary shift enabled.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn bt_model_nh_torus(
    big_r: f64,
    r: f64,
    c: f64,
    delta_x: f64,
    delta_y: f64,
    delta_z: f64,
    out: *mut *mut BtModel,
) -> BtStatus {
    guard(|| {
        emit_model(
            out,
            models::builtin_nh_torus(big_r, r, c, [delta_x, delta_y, delta_z]),
        )
    })
}

/// Loads a model from a JSON config file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn bt_model_from_config(
    path: *const c_char,
    out: *mut *mut BtModel,
) -> BtStatus {
    guard(|| {
        non_null(path, "path")?;
        let path = CStr::from_ptr(path).to_str().map_err(|e| {
            Failure::new(BtStatus::InvalidString, format!("path is not UTF-8: {e}"))
        })?;
        emit_model(out, models::load_model_config(path))
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from a `bt_model_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn bt_model_free(model: *mut BtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bt_model_is_hermitian(model: *const BtModel, out: *mut bool) -> BtStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        *out = m.hermitian;
        Ok(())
    })
}

/// Upper band energy `E+ = sqrt(h·h)` at `(kx, ky)`.
///
/// # Safety
/// `model` must be a live handle; `re` and `im` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bt_band_energy(
    model: *const BtModel,
    kx: f64,
    ky: f64,
    re: *mut f64,
    im: *mut f64,
) -> BtStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(re, "re")?;
        non_null(im, "im")?;
        let e = band_energy(m, BrillouinPoint::new(kx, ky)).e_plus;
        *re = e.re;
        *im = e.im;
        Ok(())
    })
}

/// Upper band velocity as `[vx_re, vx_im, vy_re, vy_im]`.
///
/// # Safety
/// `model` must be a live handle; `out` must point to four writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bt_velocity(
    model: *const BtModel,
    kx: f64,
    ky: f64,
    out: *mut f64,
) -> BtStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        let v = velocity(m, BrillouinPoint::new(kx, ky))?;
        let vals = [v.vx.re, v.vx.im, v.vy.re, v.vy.im];
        ptr::copy_nonoverlapping(vals.as_ptr(), out, 4);
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bt_euler_characteristic(
    model: *const BtModel,
    part: BtPart,
    grid_n: usize,
    out: *mut BtEulerSummary,
) -> BtStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        let r = euler_characteristic(m, part.into(), grid_n)?;
        *out = BtEulerSummary {
            chi: r.chi,
            index_sum: r.index_sum,
            n_source: r.count(ZeroKind::Source),
            n_sink: r.count(ZeroKind::Sink),
            n_saddle: r.count(ZeroKind::Saddle),
            n_degenerate: r.count(ZeroKind::Degenerate),
            n_singular: r.count(ZeroKind::SingularEnergy),
            n_excluded: r.excluded.len(),
            matches_expected: r.matches_expected.map_or(-1, i32::from),
        };
        Ok(())
    })
}

/// Full Euler report as a JSON string, released with [`bt_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn bt_euler_report_json(
    model: *const BtModel,
    part: BtPart,
    grid_n: usize,
    out: *mut *mut c_char,
) -> BtStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let r = euler_characteristic(m, part.into(), grid_n)?;
        let text = serde_json::to_string(&bloch_topo::cli::euler_json(m, &r))
            .map_err(|e| Failure::new(BtStatus::Io, e.to_string()))?;
        *out = CString::new(text)
            .map_err(|e| Failure::new(BtStatus::InvalidString, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn bt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn chern_result(r: &ChernReport) -> BtChernResult {
    BtChernResult {
        c_re: r.c_raw.re,
        c_im: r.c_raw.im,
        c_int: r.c_int.unwrap_or(0),
        has_int: r.c_int.is_some(),
        gapless: r.gapless,
        branch_consistent: r.branch_consistent,
        min_gap: r.min_gap,
        mesh_n: r.mesh_n,
    }
}

/// Curvature quadrature on an `mesh_n`² midpoint mesh (`mesh_n >= 32`).
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bt_chern_quadrature(
    model: *const BtModel,
    mesh_n: usize,
    out: *mut BtChernResult,
) -> BtStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        *out = chern_result(&chern::chern_quadrature(m, mesh_n)?);
        Ok(())
    })
}

/// Plaquette (lattice) Chern number. Hermitian, gapped models only.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bt_chern_lattice(
    model: *const BtModel,
    mesh_n: usize,
    out: *mut BtChernResult,
) -> BtStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        *out = chern_result(&chern::chern_lattice(m, mesh_n)?);
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, as a static string.
#[no_mangle]
pub extern "C" fn bt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
