//! C ABI for the transdir engine.
//!
//! Every function returns a [`TdStatus`]. On failure a message is kept per
//! thread and can be fetched with [`td_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function. Panics never
//! cross the boundary; they surface as `TD_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use transdir::detection::{self, DetectionError, Direction, DirectionScores, DirectionVerdict};
use transdir::scoring::{load_score_file, CacheKey, ScoreStore, TokenScores};
use transdir::statistics::{self, PermutationConfig, PermutationMethod, StatsError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidScores = 3,
    EmptyDocument = 4,
    TooFewSegments = 5,
    TooManySegments = 6,
    NotFound = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdDirection {
    X2y = 0,
    Y2x = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdVerdict {
    pub predicted: TdDirection,
    pub tie: bool,
    /// log P_tok(y|x) - log P_tok(x|y).
    pub log_margin: f64,
    pub prob_ratio: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdPValue {
    pub observed_stat: f64,
    pub p_value: f64,
    pub n_permutations: u64,
    pub extreme_count: u64,
    /// True for full enumeration, false for Monte Carlo.
    pub exhaustive: bool,
}

/// Per-segment scores of one document, in push order.
pub struct TdDocument {
    segments: Vec<DirectionScores>,
}

/// A loaded score file.
pub struct TdScoreStore {
    store: ScoreStore,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

type Failure = (TdStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TdStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TdStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TdStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    (TdStatus::NullPointer, format!("{what} is null"))
}

fn detection_failure(e: DetectionError) -> Failure {
    let status = match e {
        DetectionError::EmptyDocument => TdStatus::EmptyDocument,
        DetectionError::InvalidScores(_) | DetectionError::MismatchedPair(_) => TdStatus::InvalidScores,
        _ => TdStatus::InvalidArgument,
    };
    (status, e.to_string())
}

fn stats_failure(e: StatsError) -> Failure {
    let status = match e {
        StatsError::TooFewSegments { .. } => TdStatus::TooFewSegments,
        StatsError::TooManySegments { .. } => TdStatus::TooManySegments,
        StatsError::EmptyInput => TdStatus::EmptyDocument,
        _ => TdStatus::InvalidArgument,
    };
    (status, e.to_string())
}

/// # Safety
/// `ptr` must be null or point to `len` readable doubles.
unsafe fn logprobs<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

fn token_scores(lps: &[f64], src: &str, tgt: &str) -> Result<TokenScores, Failure> {
    TokenScores::new(lps.to_vec(), None, "ffi", src, tgt).map_err(|e| (TdStatus::InvalidScores, e.to_string()))
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn string<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| (TdStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

fn verdict(v: DirectionVerdict) -> TdVerdict {
    TdVerdict {
        predicted: match v.predicted {
            Direction::X2Y => TdDirection::X2y,
            Direction::Y2X => TdDirection::Y2x,
        },
        tie: v.tie,
        log_margin: v.log_margin,
        prob_ratio: v.prob_ratio,
    }
}

fn pvalue(r: statistics::PValueReport) -> TdPValue {
    TdPValue {
        observed_stat: r.observed_stat,
        p_value: r.p_value,
        n_permutations: r.n_permutations,
        extreme_count: r.extreme_count,
        exhaustive: r.method == PermutationMethod::Exhaustive,
    }
}

/// Copies the calling thread's last error message. Returns null when the
/// last call succeeded. Release the result with [`td_string_free`].
#[no_mangle]
pub extern "C" fn td_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |m| m.clone().into_raw()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn td_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn td_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Average token log-probability of one scored sequence.
///
/// # Safety
/// `logprobs` must point to `len` doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn td_avg_token_logprob(logprobs_ptr: *const f64, len: usize, out: *mut f64) -> TdStatus {
    guard(|| {
        let lps = logprobs(logprobs_ptr, len, "logprobs")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = detection::avg_token_logprob(&token_scores(lps, "x", "y")?);
        Ok(())
    })
}

/// Sentence-level verdict from the token log-probabilities of y given x
/// and of x given y.
///
/// # Safety
/// `xy` and `yx` must point to `n_xy` and `n_yx` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_detect_sentence(
    xy: *const f64,
    n_xy: usize,
    yx: *const f64,
    n_yx: usize,
    out: *mut TdVerdict,
) -> TdStatus {
    guard(|| {
        let xy = token_scores(logprobs(xy, n_xy, "xy")?, "x", "y")?;
        let yx = token_scores(logprobs(yx, n_yx, "yx")?, "y", "x")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = verdict(detection::detect_sentence(&xy, &yx).map_err(detection_failure)?);
        Ok(())
    })
}

/// |acc_xy - acc_yx| for accuracies in [0, 1].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_directional_bias(acc_xy: f64, acc_yx: f64, out: *mut f64) -> TdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(0.0..=1.0).contains(&acc_xy) || !(0.0..=1.0).contains(&acc_yx) {
            return Err((TdStatus::InvalidArgument, "accuracies must lie in [0, 1]".into()));
        }
        *out = statistics::directional_bias(acc_xy, acc_yx);
        Ok(())
    })
}

/// New empty document. Never returns null.
#[no_mangle]
pub extern "C" fn td_document_new() -> *mut TdDocument {
    Box::into_raw(Box::new(TdDocument { segments: Vec::new() }))
}

/// # Safety
/// `doc` must be null or a handle from [`td_document_new`], freed at most once.
#[no_mangle]
pub unsafe extern "C" fn td_document_free(doc: *mut TdDocument) {
    if !doc.is_null() {
        drop(Box::from_raw(doc));
    }
}

/// # Safety
/// `doc` must be a live handle or null.
unsafe fn document<'a>(doc: *mut TdDocument) -> Result<&'a mut TdDocument, Failure> {
    doc.as_mut().ok_or_else(|| null("doc"))
}

/// Appends one segment from its token log-probabilities in both directions.
///
/// # Safety
/// `doc` must be a live handle; `xy` and `yx` must point to `n_xy` and `n_yx` doubles.
#[no_mangle]
pub unsafe extern "C" fn td_document_push(
    doc: *mut TdDocument,
    xy: *const f64,
    n_xy: usize,
    yx: *const f64,
    n_yx: usize,
) -> TdStatus {
    guard(|| {
        let doc = document(doc)?;
        let xy = token_scores(logprobs(xy, n_xy, "xy")?, "x", "y")?;
        let yx = token_scores(logprobs(yx, n_yx, "yx")?, "y", "x")?;
        doc.segments
            .push(DirectionScores::from_token_scores(&xy, &yx).map_err(detection_failure)?);
        Ok(())
    })
}

/// Appends one segment from precomputed sums and token counts.
///
/// # Safety
/// `doc` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn td_document_push_sums(
    doc: *mut TdDocument,
    sum_xy: f64,
    count_xy: usize,
    sum_yx: f64,
    count_yx: usize,
) -> TdStatus {
    guard(|| {
        let doc = document(doc)?;
        doc.segments
            .push(DirectionScores::new(sum_xy, count_xy, sum_yx, count_yx).map_err(detection_failure)?);
        Ok(())
    })
}

/// # Safety
/// `doc` must be a live handle or null; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_document_len(doc: *const TdDocument, out: *mut usize) -> TdStatus {
    guard(|| {
        let doc = doc.as_ref().ok_or_else(|| null("doc"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = doc.segments.len();
        Ok(())
    })
}

/// Document verdict from token-weighted pooled averages.
///
/// # Safety
/// `doc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_document_detect(doc: *const TdDocument, out: *mut TdVerdict) -> TdStatus {
    guard(|| {
        let doc = doc.as_ref().ok_or_else(|| null("doc"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = verdict(detection::detect_document(&doc.segments).map_err(detection_failure)?);
        Ok(())
    })
}

/// Monte Carlo swap-permutation test, reproducible for a given seed.
///
/// # Safety
/// `doc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_document_permutation_test(
    doc: *const TdDocument,
    n_permutations: u64,
    seed: u64,
    small_sample_correction: bool,
    out: *mut TdPValue,
) -> TdStatus {
    guard(|| {
        let doc = doc.as_ref().ok_or_else(|| null("doc"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let config = PermutationConfig {
            n_permutations,
            seed,
            small_sample_correction,
        };
        *out = pvalue(statistics::permutation_test(&doc.segments, &config).map_err(stats_failure)?);
        Ok(())
    })
}

/// Exhaustive permutation test over all 2^n swap subsets.
///
/// # Safety
/// `doc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_document_exact_test(
    doc: *const TdDocument,
    max_segments: usize,
    out: *mut TdPValue,
) -> TdStatus {
    guard(|| {
        let doc = doc.as_ref().ok_or_else(|| null("doc"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = pvalue(statistics::exact_permutation_test(&doc.segments, max_segments).map_err(stats_failure)?);
        Ok(())
    })
}

/// Loads a newline-delimited JSON score file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable. On
/// success `*out` owns a handle to release with [`td_score_store_free`].
#[no_mangle]
pub unsafe extern "C" fn td_score_store_load(path: *const c_char, out: *mut *mut TdScoreStore) -> TdStatus {
    guard(|| {
        let path = string(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let store = load_score_file(path).map_err(|e| {
            let status = match e {
                transdir::scoring::ScoringError::Io { .. } => TdStatus::Io,
                _ => TdStatus::InvalidScores,
            };
            (status, e.to_string())
        })?;
        *out = Box::into_raw(Box::new(TdScoreStore { store }));
        Ok(())
    })
}

/// # Safety
/// `store` must be null or a handle from [`td_score_store_load`], freed at most once.
#[no_mangle]
pub unsafe extern "C" fn td_score_store_free(store: *mut TdScoreStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// # Safety
/// `store` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_score_store_len(store: *const TdScoreStore, out: *mut usize) -> TdStatus {
    guard(|| {
        let store = store.as_ref().ok_or_else(|| null("store"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = store.store.len();
        Ok(())
    })
}

/// Copies the token log-probabilities of `target` given `source` into
/// `buf`. `*len` receives the token count; when it exceeds `capacity`
/// nothing is copied and `TD_STATUS_BUFFER_TOO_SMALL` is returned, so a
/// call with `capacity` 0 queries the size.
///
/// # Safety
/// Strings must be NUL-terminated; `buf` must hold `capacity` doubles (it may
/// be null when `capacity` is 0); `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn td_score_store_lookup(
    store: *const TdScoreStore,
    scorer_id: *const c_char,
    src_lang: *const c_char,
    tgt_lang: *const c_char,
    source: *const c_char,
    target: *const c_char,
    buf: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> TdStatus {
    guard(|| {
        let store = store.as_ref().ok_or_else(|| null("store"))?;
        let key = CacheKey::new(
            string(scorer_id, "scorer_id")?,
            string(src_lang, "src_lang")?,
            string(tgt_lang, "tgt_lang")?,
            string(source, "source")?,
            string(target, "target")?,
        );
        if len.is_null() {
            return Err(null("len"));
        }
        let scores = store
            .store
            .get(&key)
            .ok_or_else(|| (TdStatus::NotFound, "no score for this request".to_owned()))?;
        let lps = scores.token_logprobs();
        *len = lps.len();
        if lps.len() > capacity {
            return Err((
                TdStatus::BufferTooSmall,
                format!("{} log-probabilities do not fit in {capacity}", lps.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(lps.as_ptr(), buf, lps.len());
        Ok(())
    })
}
