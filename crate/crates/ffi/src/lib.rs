//! C ABI over the simulator core.
//!
//! Every fallible call returns a [`ByrdStatus`]; on failure the message is
//! available from [`byrd_last_error`] on the same thread. Vectors cross the
//! boundary as row-major `double` buffers with explicit lengths. Servers are
//! opaque handles released with [`byrd_server_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use byrd_nafl::aggregate::{AggregationRule, GEOMED_DEFAULT_MAX_ITER, GEOMED_DEFAULT_TOL};
use byrd_nafl::attack::{apply_attack, AttackKind};
use byrd_nafl::config::ConfigFile;
use byrd_nafl::engine::run_training;
use byrd_nafl::metrics::{metrics_csv, summary_text};
use byrd_nafl::model::{ModelParams, ModelShape};
use byrd_nafl::optimizer::{self, ServerState, TheoremParams};
use byrd_nafl::{rng, Error, GradVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByrdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimMismatch = 3,
    NonFinite = 4,
    Config = 5,
    Io = 6,
    Training = 7,
    Data = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByrdRule {
    Mean = 0,
    CwMed = 1,
    GeoMed = 2,
    Krum = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByrdAttack {
    None = 0,
    RandomNoise = 1,
    SignFlip = 2,
    ZeroGradient = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ByrdTheoremParams {
    pub sin_gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub lipschitz: f64,
    pub beta: f64,
    pub eta: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ByrdRunSummary {
    pub final_acc: f64,
    pub best_acc: f64,
    pub final_loss: f64,
    pub wall_time_s: f64,
    pub iterations: u64,
}

/// Server-side optimizer state.
pub struct ByrdServer {
    state: ServerState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> ByrdStatus {
    match err {
        Error::DimMismatch { .. } => ByrdStatus::DimMismatch,
        Error::NonFinite(_) => ByrdStatus::NonFinite,
        Error::Config(_) => ByrdStatus::Config,
        Error::Io(_) => ByrdStatus::Io,
        Error::Training { .. } => ByrdStatus::Training,
        Error::Parse { .. } | Error::Idx(_) | Error::LabelMismatch(_) => ByrdStatus::Data,
        Error::Empty(_) | Error::InvalidArgument(_) => ByrdStatus::InvalidArgument,
    }
}

struct Failure(ByrdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: ByrdStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `body`, records any error and converts panics into `Panic`.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ByrdStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => ByrdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ByrdStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(ByrdStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or valid for `len` writes.
unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(ByrdStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(ByrdStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(ByrdStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn rows(flat: &[f64], n: usize, dim: usize) -> Result<Vec<GradVector>, Failure> {
    if n == 0 || dim == 0 {
        return fail(ByrdStatus::InvalidArgument, "need at least one vector of positive dimension");
    }
    let total = n.checked_mul(dim).ok_or(Failure(ByrdStatus::InvalidArgument, "size overflow".into()))?;
    debug_assert_eq!(flat.len(), total);
    Ok(flat.chunks_exact(dim).map(|c| GradVector(c.to_vec())).collect())
}

fn theorem(tp: &ByrdTheoremParams) -> TheoremParams {
    TheoremParams {
        sin_gamma: tp.sin_gamma,
        c1: tp.c1,
        c2: tp.c2,
        lipschitz: tp.lipschitz,
        beta: tp.beta,
        eta: tp.eta,
    }
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn byrd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn byrd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Aggregates `n` vectors of length `dim` stored row-major in `grads` into
/// `out` (length `dim`). `byzantine` is the Krum `f`; other rules ignore it.
/// GeoMed uses the default tolerance and iteration cap.
///
/// # Safety
/// `grads` must hold `n * dim` doubles and `out` must have room for `dim`.
#[no_mangle]
pub unsafe extern "C" fn byrd_aggregate(
    rule: ByrdRule,
    grads: *const f64,
    n: usize,
    dim: usize,
    byzantine: usize,
    out: *mut f64,
) -> ByrdStatus {
    guard(|| {
        let flat = slice(grads, n.saturating_mul(dim), "grads")?;
        let vs = rows(flat, n, dim)?;
        let out = slice_mut(out, dim, "out")?;
        let rule = match rule {
            ByrdRule::Mean => AggregationRule::Mean,
            ByrdRule::CwMed => AggregationRule::CwMed,
            ByrdRule::GeoMed => AggregationRule::GeoMed { tol: GEOMED_DEFAULT_TOL, max_iter: GEOMED_DEFAULT_MAX_ITER },
            ByrdRule::Krum => AggregationRule::Krum { f: Some(byzantine) },
        };
        let agg = rule.aggregate(&vs, byzantine)?;
        out.copy_from_slice(&agg);
        Ok(())
    })
}

/// Builds the upload list for one round: the `honest` rows followed by
/// `byzantine` crafted rows (none for `ByrdAttack::None`). `mu` is the noise
/// variance or the sign-flip factor and is ignored otherwise. Writes the
/// row count to `out_rows`; `out_len` is the capacity of `out` in doubles.
///
/// # Safety
/// `honest` must hold `h * dim` doubles, `out` must be valid for `out_len`
/// writes and `out_rows` must be writable.
#[no_mangle]
pub unsafe extern "C" fn byrd_apply_attack(
    attack: ByrdAttack,
    mu: f64,
    honest: *const f64,
    h: usize,
    dim: usize,
    byzantine: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
    out_rows: *mut usize,
) -> ByrdStatus {
    guard(|| {
        if out_rows.is_null() {
            return fail(ByrdStatus::NullPointer, "out_rows is null");
        }
        let flat = slice(honest, h.saturating_mul(dim), "honest")?;
        let vs = rows(flat, h, dim)?;
        let kind = match attack {
            ByrdAttack::None => AttackKind::NoAttack,
            ByrdAttack::RandomNoise => AttackKind::RandomNoise { mu },
            ByrdAttack::SignFlip => AttackKind::SignFlip { mu },
            ByrdAttack::ZeroGradient => AttackKind::ZeroGradient,
        };
        kind.validate()?;
        let uploads = apply_attack(&kind, &vs, byzantine, &mut rng::attack_stream(seed))?;
        let needed = uploads.len() * dim;
        if out_len < needed {
            return fail(ByrdStatus::BufferTooSmall, format!("need {needed} doubles, got {out_len}"));
        }
        let out = slice_mut(out, needed, "out")?;
        for (dst, src) in out.chunks_exact_mut(dim).zip(&uploads) {
            dst.copy_from_slice(src);
        }
        *out_rows = uploads.len();
        Ok(())
    })
}

/// Creates a server at `x0` with zero momentum. `beta = 0` gives plain SGD.
///
/// # Safety
/// `x0` must hold `dim` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn byrd_server_new(
    x0: *const f64,
    dim: usize,
    eta: f64,
    beta: f64,
    out: *mut *mut ByrdServer,
) -> ByrdStatus {
    guard(|| {
        if out.is_null() {
            return fail(ByrdStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        if dim == 0 {
            return fail(ByrdStatus::InvalidArgument, "dim must be positive");
        }
        let x = slice(x0, dim, "x0")?.to_vec();
        if x.iter().any(|v| !v.is_finite()) {
            return fail(ByrdStatus::NonFinite, "x0 has non-finite entries");
        }
        let params = ModelParams::new(ModelShape::Logistic { features: dim }, x)?;
        let state = ServerState::new(params, eta, beta)?;
        *out = Box::into_raw(Box::new(ByrdServer { state }));
        Ok(())
    })
}

/// Applies one momentum step with the aggregated gradient `grad`.
///
/// # Safety
/// `server` must come from [`byrd_server_new`]; `grad` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn byrd_server_step(server: *mut ByrdServer, grad: *const f64, dim: usize) -> ByrdStatus {
    guard(|| {
        let Some(server) = server.as_mut() else {
            return fail(ByrdStatus::NullPointer, "server is null");
        };
        let g = GradVector(slice(grad, dim, "grad")?.to_vec());
        server.state.step(&g)?;
        Ok(())
    })
}

/// Copies the current iterate into `out` (`len` must equal the dimension).
///
/// # Safety
/// `server` must come from [`byrd_server_new`]; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn byrd_server_params(server: *const ByrdServer, out: *mut f64, len: usize) -> ByrdStatus {
    guard(|| {
        let Some(server) = server.as_ref() else {
            return fail(ByrdStatus::NullPointer, "server is null");
        };
        let x = server.state.x.values();
        if len != x.len() {
            return fail(ByrdStatus::DimMismatch, format!("expected {}, got {len}", x.len()));
        }
        slice_mut(out, len, "out")?.copy_from_slice(x);
        Ok(())
    })
}

/// Number of steps taken so far, or 0 for a null handle.
///
/// # Safety
/// `server` must be null or come from [`byrd_server_new`].
#[no_mangle]
pub unsafe extern "C" fn byrd_server_iteration(server: *const ByrdServer) -> u64 {
    server.as_ref().map_or(0, |s| s.state.k as u64)
}

/// Releases a server. Null is ignored.
///
/// # Safety
/// `server` must be null or come from [`byrd_server_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn byrd_server_free(server: *mut ByrdServer) {
    if !server.is_null() {
        drop(Box::from_raw(server));
    }
}

/// Largest admissible learning rate for the given constants.
///
/// # Safety
/// `tp` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn byrd_max_stepsize(tp: *const ByrdTheoremParams, out: *mut f64) -> ByrdStatus {
    guard(|| {
        let (Some(tp), false) = (tp.as_ref(), out.is_null()) else {
            return fail(ByrdStatus::NullPointer, "null argument");
        };
        *out = optimizer::max_stepsize(&theorem(tp))?;
        Ok(())
    })
}

/// Asymptotic error floor for the given constants.
///
/// # Safety
/// `tp` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn byrd_error_floor_bound(tp: *const ByrdTheoremParams, out: *mut f64) -> ByrdStatus {
    guard(|| {
        let (Some(tp), false) = (tp.as_ref(), out.is_null()) else {
            return fail(ByrdStatus::NullPointer, "null argument");
        };
        *out = optimizer::error_floor_bound(&theorem(tp))?;
        Ok(())
    })
}

/// Trains the single run described by `config_toml` (same format as the CLI
/// config files, without a `[matrix]` table). When `out_dir` is non-null,
/// `metrics.csv` and `summary.txt` are written there. `summary` may be null.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out_dir` null or
/// NUL-terminated; `summary` null or writable.
#[no_mangle]
pub unsafe extern "C" fn byrd_run_config(
    config_toml: *const c_char,
    out_dir: *const c_char,
    summary: *mut ByrdRunSummary,
) -> ByrdStatus {
    guard(|| {
        let text = string(config_toml, "config_toml")?;
        let file = ConfigFile::parse(text)?;
        if file.matrix.is_some() {
            return fail(ByrdStatus::Config, "config has a [matrix] table; run cells individually");
        }
        let run = run_training(&file.run)?;
        if !out_dir.is_null() {
            let dir = Path::new(string(out_dir, "out_dir")?);
            std::fs::create_dir_all(dir).map_err(Error::from)?;
            std::fs::write(dir.join("metrics.csv"), metrics_csv(&run.reports)).map_err(Error::from)?;
            std::fs::write(dir.join("summary.txt"), summary_text(&run.summary)?).map_err(Error::from)?;
        }
        if let Some(s) = summary.as_mut() {
            *s = ByrdRunSummary {
                final_acc: run.summary.final_acc,
                best_acc: run.summary.best_acc,
                final_loss: run.summary.final_loss,
                wall_time_s: run.summary.wall_time.as_secs_f64(),
                iterations: file.run.iterations as u64,
            };
        }
        Ok(())
    })
}
