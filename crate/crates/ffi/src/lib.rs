//! C ABI for bidirectional chunk selection.
//!
//! The caller owns the policy and draws the samples; this library scores
//! them and remembers the previous decision. Chunks cross the boundary as
//! flat row-major `double` buffers of `chunk_len * action_dim` values, and a
//! batch of `n` chunks is `n` such blocks back to back.
//!
//! Every fallible function returns a [`BidStatus`]. On failure the message
//! is available from [`bid_last_error_message`] on the same thread.
//!
//! A [`BidSelector`] is not thread-safe; serialize calls on one handle.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bid_core::chain::{total_variation, IdleBin, IdleHistogram};
use bid_core::criteria::{backward_coherence, BackwardConfig, ContrastMode, ForwardConfig};
use bid_core::decoder::{bid_choose, ema_blend};
use bid_core::{ActionChunk, BidError, DecisionMemory};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BidStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Alignment = 3,
    DimensionMismatch = 4,
    Empty = 5,
    Panic = 6,
}

/// Which halves of the forward contrast are active.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BidContrast {
    Full = 0,
    PositivesOnly = 1,
    NegativesOnly = 2,
    Off = 3,
}

/// Selector parameters. Start from [`bid_selector_default_params`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BidSelectorParams {
    /// Actions per chunk.
    pub chunk_len: usize,
    /// Values per action.
    pub action_dim: usize,
    /// Reference set size K; clamped to the batch size at each call.
    pub mode_size: usize,
    /// Backward decay in [0, 1].
    pub rho: f64,
    /// Non-zero blends the chosen chunk with the previous decision.
    pub use_ema: i32,
    /// Blend weight of the new chunk, in (0, 1).
    pub ema_lambda: f64,
    pub contrast: BidContrast,
}

/// Opaque selector holding its parameters and the previous decision.
pub struct BidSelector {
    params: BidSelectorParams,
    cfg_b: BackwardConfig,
    memory: DecisionMemory,
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

fn status_of(e: &BidError) -> BidStatus {
    match e {
        BidError::Alignment(_) => BidStatus::Alignment,
        BidError::DimensionMismatch { .. } => BidStatus::DimensionMismatch,
        BidError::Empty(_) => BidStatus::Empty,
        _ => BidStatus::InvalidArgument,
    }
}

struct Failure(BidStatus, String);

impl From<BidError> for Failure {
    fn from(e: BidError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(BidStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(BidStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BidStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            BidStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            BidStatus::Panic
        }
    }
}

fn contrast_mode(c: BidContrast) -> ContrastMode {
    match c {
        BidContrast::Full => ContrastMode::Full,
        BidContrast::PositivesOnly => ContrastMode::PositivesOnly,
        BidContrast::NegativesOnly => ContrastMode::NegativesOnly,
        BidContrast::Off => ContrastMode::Off,
    }
}

/// # Safety
/// `data` must be null or point to `len` readable doubles.
unsafe fn slice<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

fn chunks_from(flat: &[f64], count: usize, start: usize, len: usize, dim: usize) -> Result<Vec<ActionChunk>, Failure> {
    let block = len * dim;
    (0..count)
        .map(|i| {
            let rows = flat[i * block..(i + 1) * block].chunks(dim).map(<[f64]>::to_vec).collect();
            Ok(ActionChunk::from_rows(start, rows)?)
        })
        .collect()
}

fn flatten(chunk: &ActionChunk, out: &mut [f64]) {
    for (dst, v) in out.iter_mut().zip(chunk.actions().iter().flat_map(|a| a.values())) {
        *dst = *v;
    }
}

/// Defaults: K = 10, rho = 0.9, full contrast, no blending, lambda = 0.75.
/// `chunk_len` and `action_dim` are left at zero for the caller to fill in.
#[no_mangle]
pub extern "C" fn bid_selector_default_params() -> BidSelectorParams {
    BidSelectorParams {
        chunk_len: 0,
        action_dim: 0,
        mode_size: ForwardConfig::DEFAULT_MODE,
        rho: BackwardConfig::DEFAULT_RHO,
        use_ema: 0,
        ema_lambda: bid_core::decoder::DEFAULT_LAMBDA,
        contrast: BidContrast::Full,
    }
}

/// Creates a selector. On success `*out` owns a handle that must be released
/// with [`bid_selector_free`].
///
/// # Safety
/// `params` must point to a valid parameter struct and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn bid_selector_new(params: *const BidSelectorParams, out: *mut *mut BidSelector) -> BidStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        if p.chunk_len == 0 || p.action_dim == 0 {
            return Err(invalid("chunk_len and action_dim must be positive"));
        }
        if p.mode_size == 0 {
            return Err(invalid("mode_size must be positive"));
        }
        if p.use_ema != 0 && !(p.ema_lambda > 0.0 && p.ema_lambda < 1.0) {
            return Err(invalid(format!("ema_lambda must lie in (0, 1), got {}", p.ema_lambda)));
        }
        let cfg_b = BackwardConfig::new(p.rho)?;
        let sel = BidSelector { params: *p, cfg_b, memory: DecisionMemory::new() };
        *out = Box::into_raw(Box::new(sel));
        Ok(())
    })
}

/// Releases a selector. Null is ignored.
///
/// # Safety
/// `sel` must be null or a handle from [`bid_selector_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bid_selector_free(sel: *mut BidSelector) {
    if !sel.is_null() {
        drop(Box::from_raw(sel));
    }
}

/// Forgets the previous decision, as at the start of an episode.
///
/// # Safety
/// `sel` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bid_selector_reset(sel: *mut BidSelector) -> BidStatus {
    guard(|| {
        sel.as_mut().ok_or_else(|| null("selector"))?.memory.clear();
        Ok(())
    })
}

/// Scores `n_strong` strong and `n_weak` weak chunks planned at `tick` and
/// stores the winner as the new previous decision. The previous decision
/// only counts when it was made at `tick - 1`.
///
/// Writes the winning strong index to `*out_index`. When `out_chunk` is not
/// null the executed chunk (blended if enabled) is written there. When
/// `out_backward` / `out_forward` are not null they receive `n_strong`
/// per-candidate loss terms.
///
/// # Safety
/// Buffers must hold the documented number of doubles; `out_index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bid_selector_select(
    sel: *mut BidSelector,
    tick: usize,
    strong: *const f64,
    n_strong: usize,
    weak: *const f64,
    n_weak: usize,
    out_index: *mut usize,
    out_chunk: *mut f64,
    out_backward: *mut f64,
    out_forward: *mut f64,
) -> BidStatus {
    guard(|| {
        let sel = sel.as_mut().ok_or_else(|| null("selector"))?;
        if out_index.is_null() {
            return Err(null("out_index"));
        }
        if n_strong == 0 {
            return Err(Failure(BidStatus::Empty, "no strong candidates".into()));
        }
        if n_weak == 0 && sel.params.contrast != BidContrast::Off && sel.params.contrast != BidContrast::PositivesOnly {
            return Err(Failure(BidStatus::Empty, "no weak candidates".into()));
        }
        let (len, dim) = (sel.params.chunk_len, sel.params.action_dim);
        let block = len * dim;
        let strong = chunks_from(slice(strong, n_strong * block, "strong")?, n_strong, tick, len, dim)?;
        let weak = chunks_from(slice(weak, n_weak * block, "weak")?, n_weak, tick, len, dim)?;
        let k = sel.params.mode_size.min(n_strong);
        let cfg_f = ForwardConfig::new(k, n_strong)?.with_contrast(contrast_mode(sel.params.contrast));
        let prev = sel.memory.reference_for(tick);
        let diag = bid_choose(&strong, &weak, prev, &sel.cfg_b, &cfg_f)?;
        let mut chosen = strong[diag.chosen].clone();
        if let (true, Some(p)) = (sel.params.use_ema != 0, prev) {
            chosen = ema_blend(&chosen, p, sel.params.ema_lambda)?;
        }
        *out_index = diag.chosen;
        if !out_chunk.is_null() {
            flatten(&chosen, std::slice::from_raw_parts_mut(out_chunk, block));
        }
        if !out_backward.is_null() {
            std::slice::from_raw_parts_mut(out_backward, n_strong).copy_from_slice(&diag.backward);
        }
        if !out_forward.is_null() {
            std::slice::from_raw_parts_mut(out_forward, n_strong).copy_from_slice(&diag.forward);
        }
        sel.memory.update(chosen);
        Ok(())
    })
}

/// Backward coherence of `candidate` (planned one tick after `previous`)
/// against `previous`. Both hold `chunk_len * action_dim` doubles.
///
/// # Safety
/// Buffers must hold the documented number of doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bid_backward_coherence(
    candidate: *const f64,
    previous: *const f64,
    chunk_len: usize,
    action_dim: usize,
    rho: f64,
    out: *mut f64,
) -> BidStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if chunk_len == 0 || action_dim == 0 {
            return Err(invalid("chunk_len and action_dim must be positive"));
        }
        let n = chunk_len * action_dim;
        let cand = chunks_from(slice(candidate, n, "candidate")?, 1, 1, chunk_len, action_dim)?;
        let prev = chunks_from(slice(previous, n, "previous")?, 1, 0, chunk_len, action_dim)?;
        *out = backward_coherence(&cand[0], &prev[0], &BackwardConfig::new(rho)?)?;
        Ok(())
    })
}

/// Total variation distance between two distributions over `len` bins.
/// Each must be non-negative and sum to 1.
///
/// # Safety
/// `p` and `q` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bid_total_variation(p: *const f64, q: *const f64, len: usize, out: *mut f64) -> BidStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let hist = |v: &[f64]| -> Result<IdleHistogram, Failure> {
            let probs: BTreeMap<IdleBin, f64> = v.iter().enumerate().map(|(i, x)| (IdleBin::Count(i), *x)).collect();
            Ok(IdleHistogram::from_probs(probs)?)
        };
        let p = hist(slice(p, len, "p")?)?;
        let q = hist(slice(q, len, "q")?)?;
        *out = total_variation(&p, &q)?;
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null if the last call
/// succeeded. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn bid_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bid_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
