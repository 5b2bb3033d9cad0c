//! C ABI for the dara engine.
//!
//! Banks and models are opaque heap handles released with their `_free`
//! function. Every fallible call returns a [`DaraStatus`]; on failure the
//! message is available from [`dara_last_error`] on the same thread until
//! the next failing call. Strings handed out by the library are released
//! with [`dara_string_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dara::checkpoint::Checkpoint;
use dara::data::{gen_synthetic, load_bank, save_bank, FeatureBank, KvConfig, SynthConfig};
use dara::numerics::Matrix;
use dara::pfa::ridge_reconstruct;
use dara::pipeline::{evaluate, pretrain_source, Model, TrainConfig};
use dara::DaraError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DaraStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    Format = 5,
    Shape = 6,
    Numeric = 7,
    Data = 8,
    Training = 9,
    Panic = 10,
}

/// Loaded or generated feature bank.
pub struct DaraBank {
    bank: FeatureBank,
}

/// Pretrained or finetuned engine state.
pub struct DaraModel {
    checkpoint: Checkpoint,
}

/// Header fields of a feature bank.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DaraBankHeader {
    pub num_items: u32,
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub class_count: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &DaraError) -> DaraStatus {
    match e {
        DaraError::ShapeMismatch { .. } | DaraError::ChannelMismatch { .. } => DaraStatus::Shape,
        DaraError::NotPositiveDefinite { .. }
        | DaraError::NonScalarLoss { .. }
        | DaraError::NonFinite(_)
        | DaraError::ZeroNormFeature { .. } => DaraStatus::Numeric,
        DaraError::BadMagic { .. } | DaraError::HeaderMismatch(_) | DaraError::LabelOutOfRange { .. } => {
            DaraStatus::Format
        }
        DaraError::InsufficientItems { .. } | DaraError::InvalidSpec(_) => DaraStatus::Data,
        DaraError::DivergenceDetected(_) => DaraStatus::Training,
        DaraError::Config { .. } => DaraStatus::Config,
        DaraError::Io(_) => DaraStatus::Io,
    }
}

enum Failure {
    Status(DaraStatus, String),
    Engine(DaraError),
}

impl From<DaraError> for Failure {
    fn from(e: DaraError) -> Self {
        Failure::Engine(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DaraStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DaraStatus::Ok,
        Ok(Err(Failure::Status(s, m))) => {
            set_error(m);
            s
        }
        Ok(Err(Failure::Engine(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            DaraStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(DaraStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(DaraStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Parses config text, rejecting keys the engine does not know.
fn config(text: &str) -> Result<KvConfig, Failure> {
    let kv = KvConfig::parse(text)?;
    kv.check_known(&dara::cli::known_keys())?;
    Ok(kv)
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null. Owned by the
/// library; valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn dara_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dara_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a `DARAFB01` bank file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dara_bank_load(path: *const c_char, out: *mut *mut DaraBank) -> DaraStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let bank = load_bank(str_arg(path, "path")?)?;
        put(out, DaraBank { bank });
        Ok(())
    })
}

/// Writes a bank to `path`.
///
/// # Safety
/// `bank` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dara_bank_save(bank: *const DaraBank, path: *const c_char) -> DaraStatus {
    guard(|| {
        let bank = bank.as_ref().ok_or_else(|| null("bank"))?;
        save_bank(&bank.bank, str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Copies the bank header into `out`.
///
/// # Safety
/// `bank` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dara_bank_header(bank: *const DaraBank, out: *mut DaraBankHeader) -> DaraStatus {
    guard(|| {
        let bank = bank.as_ref().ok_or_else(|| null("bank"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let h = bank.bank.header();
        *out = DaraBankHeader {
            num_items: h.num_items,
            width: h.width,
            height: h.height,
            channels: h.channels,
            class_count: h.class_count,
        };
        Ok(())
    })
}

/// Releases a bank; null is ignored.
///
/// # Safety
/// `bank` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dara_bank_free(bank: *mut DaraBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Generates synthetic source and target banks from config text.
/// `query_offset` (may be null) receives the covariate offset to apply to
/// target queries.
///
/// # Safety
/// `config_text` must be NUL-terminated; `source` and `target` writable.
#[no_mangle]
pub unsafe extern "C" fn dara_synth(
    config_text: *const c_char,
    source: *mut *mut DaraBank,
    target: *mut *mut DaraBank,
    query_offset: *mut f64,
) -> DaraStatus {
    guard(|| {
        if source.is_null() || target.is_null() {
            return Err(null("output handle"));
        }
        let cfg = SynthConfig::from_kv(&config(str_arg(config_text, "config_text")?)?)?;
        let (s, t, shift) = gen_synthetic(&cfg)?;
        put(source, DaraBank { bank: s });
        put(target, DaraBank { bank: t });
        if !query_offset.is_null() {
            *query_offset = shift.offset;
        }
        Ok(())
    })
}

/// Loads a `DARACK01` checkpoint.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dara_model_load(path: *const c_char, out: *mut *mut DaraModel) -> DaraStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let checkpoint = Checkpoint::load(str_arg(path, "path")?)?;
        put(out, DaraModel { checkpoint });
        Ok(())
    })
}

/// Pretrains a model on `source` with the given config text.
///
/// # Safety
/// `source` must come from this library; `config_text` NUL-terminated;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dara_model_pretrain(
    source: *const DaraBank,
    config_text: *const c_char,
    out: *mut *mut DaraModel,
) -> DaraStatus {
    guard(|| {
        let source = source.as_ref().ok_or_else(|| null("source"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = TrainConfig::from_kv(&config(str_arg(config_text, "config_text")?)?)?;
        let (model, _) = pretrain_source(&source.bank, &cfg)?;
        put(
            out,
            DaraModel {
                checkpoint: Checkpoint {
                    model,
                    z: None,
                    config_digest: cfg.digest(),
                },
            },
        );
        Ok(())
    })
}

/// Writes a model checkpoint to `path`.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dara_model_save(model: *const DaraModel, path: *const c_char) -> DaraStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        model.checkpoint.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dara_model_free(model: *mut DaraModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn model_of(m: &DaraModel) -> &Model {
    &m.checkpoint.model
}

/// Runs the episodic evaluation and returns the report JSON in
/// `report_json` (release with [`dara_string_free`]).
///
/// # Safety
/// Handles must come from this library; `config_text` NUL-terminated;
/// `report_json` writable.
#[no_mangle]
pub unsafe extern "C" fn dara_evaluate(
    model: *const DaraModel,
    target: *const DaraBank,
    config_text: *const c_char,
    workers: u32,
    report_json: *mut *mut c_char,
) -> DaraStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let target = target.as_ref().ok_or_else(|| null("target"))?;
        if report_json.is_null() {
            return Err(null("report_json"));
        }
        let cfg = TrainConfig::from_kv(&config(str_arg(config_text, "config_text")?)?)?;
        let m = model_of(model);
        if target.bank.channels() != m.backbone.in_channels() {
            return Err(DaraError::ChannelMismatch {
                expected: m.backbone.in_channels(),
                found: target.bank.channels(),
            }
            .into());
        }
        let report = evaluate(&target.bank, m, &cfg, workers.max(1) as usize)?;
        *report_json = CString::new(report.to_json())
            .expect("JSON has no NUL")
            .into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dara_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Ridge reconstruction of a `query_rows x cols` query from a
/// `pool_rows x cols` pool, both row-major. Writes `query_rows x cols`
/// values to `out`.
///
/// # Safety
/// Buffers must hold the stated number of `double`s.
#[no_mangle]
pub unsafe extern "C" fn dara_ridge_reconstruct(
    pool: *const f64,
    pool_rows: u32,
    query: *const f64,
    query_rows: u32,
    cols: u32,
    lambda: f64,
    out: *mut f64,
) -> DaraStatus {
    guard(|| {
        if pool.is_null() || query.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        let (pr, qr, c) = (pool_rows as usize, query_rows as usize, cols as usize);
        let p = Matrix::from_vec(pr, c, std::slice::from_raw_parts(pool, pr * c).to_vec())?;
        let q = Matrix::from_vec(qr, c, std::slice::from_raw_parts(query, qr * c).to_vec())?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Failure::Status(DaraStatus::Config, format!("lambda {lambda} must be finite and >= 0")));
        }
        let r = ridge_reconstruct(&p, &q, lambda)?;
        std::slice::from_raw_parts_mut(out, qr * c).copy_from_slice(r.data());
        Ok(())
    })
}
