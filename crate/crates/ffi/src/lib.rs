//! C interface to the tagger.
//!
//! Every function returns a [`JsegStatus`]. On failure a message is kept per
//! thread and can be read with [`jseg_last_error`]. Strings passed in are
//! NUL-terminated UTF-8; strings handed out must be released with
//! [`jseg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use jointseg::corpus::{format_sentence, parse_corpus};
use jointseg::eval::{mcnemar_midp, word_f1};
use jointseg::{Error, Tagger};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JsegStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Archive = 5,
    LabelSpaceMismatch = 6,
    InvalidArgument = 7,
    Internal = 8,
}

/// A loaded model or ensemble.
pub struct JsegTagger {
    inner: Tagger,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> JsegStatus {
    match e {
        Error::Io { .. } => JsegStatus::Io,
        Error::Parse { .. } | Error::DimMismatch { .. } => JsegStatus::Parse,
        Error::Archive(_) => JsegStatus::Archive,
        Error::LabelSpaceMismatch => JsegStatus::LabelSpaceMismatch,
        _ => JsegStatus::InvalidArgument,
    }
}

/// Runs `f`, recording errors and turning panics into `Internal`.
fn guard(f: impl FnOnce() -> Result<(), (JsegStatus, String)>) -> JsegStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => JsegStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal error");
            JsegStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (JsegStatus, String) {
    (status_of(&e), e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (JsegStatus, String)> {
    if p.is_null() {
        return Err((JsegStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (JsegStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn null(what: &str) -> (JsegStatus, String) {
    (JsegStatus::NullPointer, format!("{what} is null"))
}

/// Message for the most recent failure on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn jseg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads `n` model archives; more than one forms an ensemble.
///
/// # Safety
/// `paths` must point to `n` NUL-terminated strings and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn jseg_tagger_load(paths: *const *const c_char, n: usize, out: *mut *mut JsegTagger) -> JsegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if paths.is_null() {
            return Err(null("paths"));
        }
        if n == 0 {
            return Err((JsegStatus::InvalidArgument, "at least one model is required".into()));
        }
        let list = std::slice::from_raw_parts(paths, n)
            .iter()
            .map(|&p| str_arg(p, "model path").map(Path::new))
            .collect::<Result<Vec<_>, _>>()?;
        let inner = Tagger::load(&list).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(JsegTagger { inner }));
        Ok(())
    })
}

/// Releases a tagger; null is ignored.
///
/// # Safety
/// `tagger` must come from [`jseg_tagger_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jseg_tagger_free(tagger: *mut JsegTagger) {
    if !tagger.is_null() {
        drop(Box::from_raw(tagger));
    }
}

/// Number of combined boundary/POS labels of the tagger.
///
/// # Safety
/// `tagger` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jseg_tagger_num_labels(tagger: *const JsegTagger, out: *mut usize) -> JsegStatus {
    guard(|| {
        let t = tagger.as_ref().ok_or_else(|| null("tagger"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = t.inner.models()[0].labels.k();
        Ok(())
    })
}

/// Tags one sentence. Whitespace in the input is ignored; the result is
/// space-separated `word_POS` tokens (empty for empty input).
///
/// # Safety
/// `tagger` must be valid, `sentence` a NUL-terminated string and `out`
/// writable. The string stored in `out` must be freed with
/// [`jseg_string_free`].
#[no_mangle]
pub unsafe extern "C" fn jseg_tag(tagger: *const JsegTagger, sentence: *const c_char, out: *mut *mut c_char) -> JsegStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let t = tagger.as_ref().ok_or_else(|| null("tagger"))?;
        let chars: Vec<char> = str_arg(sentence, "sentence")?
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect();
        let tagged = t.inner.ensemble().tag(&chars).map_err(lib_err)?;
        let text = CString::new(format_sentence(&tagged))
            .map_err(|_| (JsegStatus::InvalidArgument, "output contains NUL".to_string()))?;
        *out = text.into_raw();
        Ok(())
    })
}

/// Frees a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jseg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Mid-p McNemar p-value for discordant counts `b` and `c`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jseg_mcnemar_midp(b: u64, c: u64, out: *mut f64) -> JsegStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = mcnemar_midp(b, c).map_err(lib_err)?;
        Ok(())
    })
}

/// Word-level precision, recall and F1 of two corpora given as text in the
/// `word_POS` format. `joint` non-zero also requires matching tags.
///
/// # Safety
/// `gold` and `pred` must be NUL-terminated; `p`, `r`, `f` writable.
#[no_mangle]
pub unsafe extern "C" fn jseg_word_f1(
    gold: *const c_char,
    pred: *const c_char,
    joint: i32,
    p: *mut f64,
    r: *mut f64,
    f: *mut f64,
) -> JsegStatus {
    guard(|| {
        if p.is_null() || r.is_null() || f.is_null() {
            return Err(null("output pointer"));
        }
        let g = parse_corpus(str_arg(gold, "gold")?, Path::new("<gold>")).map_err(lib_err)?;
        let q = parse_corpus(str_arg(pred, "pred")?, Path::new("<pred>")).map_err(lib_err)?;
        let m = word_f1(&g, &q, joint != 0).map_err(lib_err)?;
        (*p, *r, *f) = (m.p, m.r, m.f);
        Ok(())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn jseg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
