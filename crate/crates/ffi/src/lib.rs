//! C ABI for the quantbeam engine.
//!
//! All functions return a [`QbStatus`] code; out-values go through pointer
//! arguments. Handles are opaque and must be released with their matching
//! `_free` function. Strings returned through `char**` are heap-allocated
//! and must be released with [`qb_string_free`]. On any non-OK status a
//! human-readable message is available from [`qb_last_error`] (thread-local,
//! valid until the next failing call on the same thread).

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::{c_char, c_double, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use quantbeam::bench;
use quantbeam::decode::{sentence_bleu, LexTable, Vocab};
use quantbeam::error::Error;
use quantbeam::model::{ModelConfig, ModelParams};
use quantbeam::pipeline::{PipelineOptions, Translator};
use quantbeam::runtime::Precision;

/// Status code of every C-ABI call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum QbStatus {
    Ok = 0,
    /// A pointer was null or an argument value was rejected.
    InvalidArgument = 1,
    /// File could not be read or written.
    Io = 2,
    /// A file had the wrong format.
    BadInput = 3,
    /// A token or id fell outside the vocabulary.
    Vocabulary = 4,
    /// Internal evaluation failure.
    Internal = 5,
    /// A panic was caught at the boundary.
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> QbStatus {
    match err {
        Error::Parameter(_) | Error::Dimension(_) => QbStatus::InvalidArgument,
        Error::Io(_) => QbStatus::Io,
        Error::InputFormat(_) => QbStatus::BadInput,
        Error::Vocabulary(_) => QbStatus::Vocabulary,
        Error::Graph(_) | Error::Feed(_) | Error::State(_) => QbStatus::Internal,
    }
}

fn fail(err: Error) -> QbStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn invalid(message: &str) -> QbStatus {
    set_error(message);
    QbStatus::InvalidArgument
}

fn guarded(body: impl FnOnce() -> QbStatus) -> QbStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic caught at the C boundary");
            QbStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, QbStatus> {
    if ptr.is_null() {
        return Err(invalid(&format!("{what} must not be null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid(&format!("{what} must be valid UTF-8")))
}

fn out_string(s: String, out: *mut *mut c_char) -> QbStatus {
    match CString::new(s.replace('\0', " ")) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            QbStatus::Ok
        }
        Err(_) => invalid("output string contained an interior NUL"),
    }
}

/// Opaque translator handle.
pub struct QbTranslator {
    inner: Translator,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failing call on this thread.
#[no_mangle]
pub extern "C" fn qb_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Load a model and build a translator.
///
/// `precision` is one of `float32`, `int16`, `int8`, `autotune`. `lex_path`
/// and `freq_path` may both be null to decode without a shortlist. On
/// success `*out` owns the handle; free it with [`qb_translator_free`].
///
/// # Safety
/// Path and precision pointers must be NUL-terminated strings or null where
/// documented; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qb_translator_new(
    model_path: *const c_char,
    config_path: *const c_char,
    vocab_path: *const c_char,
    precision: *const c_char,
    beam: c_int,
    batch_words: c_int,
    lex_path: *const c_char,
    freq_path: *const c_char,
    out: *mut *mut QbTranslator,
) -> QbStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out must not be null");
        }
        let model_path = match cstr(model_path, "model_path") {
            Ok(s) => s,
            Err(st) => return st,
        };
        let config_path = match cstr(config_path, "config_path") {
            Ok(s) => s,
            Err(st) => return st,
        };
        let vocab_path = match cstr(vocab_path, "vocab_path") {
            Ok(s) => s,
            Err(st) => return st,
        };
        let precision = match cstr(precision, "precision") {
            Ok(s) => s,
            Err(st) => return st,
        };
        if beam < 1 || batch_words < 1 {
            return invalid("beam and batch_words must be at least 1");
        }
        let build = || -> Result<Translator, Error> {
            let precision = Precision::parse(precision)?;
            let config = ModelConfig::load(Path::new(config_path))?;
            let params = ModelParams::load(Path::new(model_path))?;
            let vocab = Vocab::load(Path::new(vocab_path))?;
            let lex = match (lex_path.is_null(), freq_path.is_null()) {
                (true, true) => None,
                (false, false) => {
                    let lex_path = cstr(lex_path, "lex_path").map_err(|_| {
                        Error::Parameter("lex_path must be valid UTF-8".into())
                    })?;
                    let freq_path = cstr(freq_path, "freq_path").map_err(|_| {
                        Error::Parameter("freq_path must be valid UTF-8".into())
                    })?;
                    Some(LexTable::load(Path::new(lex_path), Path::new(freq_path), &vocab)?)
                }
                _ => {
                    return Err(Error::Parameter(
                        "lex_path and freq_path must be given together".into(),
                    ))
                }
            };
            let options = PipelineOptions {
                precision,
                beam: beam as usize,
                batch_words: batch_words as usize,
                ..Default::default()
            };
            Translator::new(config, params, vocab, lex, options)
        };
        match build() {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(QbTranslator { inner }));
                QbStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Translate one whitespace-tokenized line. `*out` receives the translation
/// (possibly empty for an empty line); free it with [`qb_string_free`].
///
/// # Safety
/// `translator` must come from [`qb_translator_new`] and not be freed;
/// `line` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qb_translate_line(
    translator: *mut QbTranslator,
    line: *const c_char,
    out: *mut *mut c_char,
) -> QbStatus {
    guarded(|| {
        if translator.is_null() {
            return invalid("translator must not be null");
        }
        if out.is_null() {
            return invalid("out must not be null");
        }
        let line = match cstr(line, "line") {
            Ok(s) => s,
            Err(st) => return st,
        };
        let handle = &mut *translator;
        match handle.inner.translate_corpus(&[line.to_string()]) {
            Ok(mut outputs) => out_string(outputs.remove(0), out),
            Err(e) => fail(e),
        }
    })
}

/// Kernel-counter summary of everything this translator executed so far.
///
/// # Safety
/// `translator` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qb_translator_counters(
    translator: *const QbTranslator,
    out: *mut *mut c_char,
) -> QbStatus {
    guarded(|| {
        if translator.is_null() {
            return invalid("translator must not be null");
        }
        if out.is_null() {
            return invalid("out must not be null");
        }
        let handle = &*translator;
        out_string(handle.inner.counter_line(), out)
    })
}

/// Release a translator handle. Null is ignored.
///
/// # Safety
/// `translator` must come from [`qb_translator_new`] and must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn qb_translator_free(translator: *mut QbTranslator) {
    if !translator.is_null() {
        drop(Box::from_raw(translator));
    }
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from a `qb_*` out-parameter and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Source tokens translated per US dollar:
/// `tokens / seconds * 3600 / usd_per_hour`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qb_cost_effectiveness(
    tokens: u64,
    seconds: c_double,
    usd_per_hour: c_double,
    out: *mut c_double,
) -> QbStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out must not be null");
        }
        match bench::cost_effectiveness(tokens, seconds, usd_per_hour) {
            Ok(v) => {
                *out = v;
                QbStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Sentence BLEU of two whitespace-tokenized lines, in `[0, 1]`.
///
/// # Safety
/// `hypothesis` and `reference` must be NUL-terminated strings; `out` must
/// be valid.
#[no_mangle]
pub unsafe extern "C" fn qb_sentence_bleu(
    hypothesis: *const c_char,
    reference: *const c_char,
    out: *mut c_double,
) -> QbStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out must not be null");
        }
        let hypothesis = match cstr(hypothesis, "hypothesis") {
            Ok(s) => s,
            Err(st) => return st,
        };
        let reference = match cstr(reference, "reference") {
            Ok(s) => s,
            Err(st) => return st,
        };
        let hyp: Vec<&str> = hypothesis.split_whitespace().collect();
        let reference: Vec<&str> = reference.split_whitespace().collect();
        match sentence_bleu(&hyp, &reference) {
            Ok(v) => {
                *out = v;
                QbStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
