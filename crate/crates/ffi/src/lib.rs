//! C ABI over the curriculum planner and the adaptation-cost evaluation.
//!
//! Conventions shared by every function here:
//!
//! * Calls return [`MtpdStatus`]; `Ok` is zero. Output pointers are written
//!   only on success, except `needed`-style size outputs, which are always
//!   written when non-NULL.
//! * Handles produced by `*_new` / `*_from_csv` are owned by the caller and
//!   released exactly once with the matching `*_free`; `*_free(NULL)` is a
//!   no-op.
//! * String outputs use the `(buf, cap, needed)` convention: `needed`
//!   receives the byte length including the NUL terminator, and the call
//!   reports `BufferTooSmall` without touching `buf` when `cap` is short.
//! * On failure a thread-local message is stored; [`mtpd_last_error`]
//!   returns it as a pointer valid until the next call on the same thread.
//! * All `char*` inputs must be NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use mtpd::costgraph::{adaptation_cost_from_features, CostConfig, CostGraph};
use mtpd::curriculum::{enumeration_count, plan_curriculum, Algorithm, PerformanceTable};
use mtpd::io::features_from_bytes;
use mtpd::Error;

/// Result of every C-ABI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtpdStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument was outside the operation's domain (unknown id, bad
    /// algorithm name, invalid shapes, non-UTF-8 text, ...).
    InvalidArgument = 2,
    /// Serialized input (CSV text or a feature dump) is malformed.
    ParseError = 3,
    /// The math broke down: singular systems or non-finite values.
    NumericError = 4,
    /// The provided output buffer is too small; retry with `*needed` bytes.
    BufferTooSmall = 5,
    /// An internal invariant failed; the handle state is unspecified.
    Internal = 6,
}

/// Directed adaptation-cost graph handle (opaque).
pub struct MtpdCostGraph {
    inner: CostGraph,
}

/// Teacher quality-score table handle (opaque).
pub struct MtpdPerfTable {
    inner: PerformanceTable,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(status: MtpdStatus, message: &str) -> MtpdStatus {
    let text = CString::new(message.as_bytes())
        .unwrap_or_else(|_| CString::new("error message contained NUL").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = text);
    status
}

fn set_rust_error(err: &Error) -> MtpdStatus {
    let status = match err {
        Error::Numeric(_) => MtpdStatus::NumericError,
        Error::Format(_) | Error::Io(_) => MtpdStatus::ParseError,
        _ => MtpdStatus::InvalidArgument,
    };
    set_error(status, &err.to_string())
}

/// Run `body`, translating panics into `Internal` instead of unwinding
/// across the ABI boundary.
fn guarded(body: impl FnOnce() -> MtpdStatus) -> MtpdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => set_error(MtpdStatus::Internal, "internal panic"),
    }
}

/// # Safety
/// `ptr` must be NULL or a NUL-terminated string.
unsafe fn utf8_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, MtpdStatus> {
    if ptr.is_null() {
        return Err(set_error(MtpdStatus::NullPointer, &format!("{what} is NULL")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| set_error(MtpdStatus::InvalidArgument, &format!("{what} is not UTF-8")))
}

/// Copy `s` plus a NUL terminator into `(buf, cap)`, reporting the full
/// length through `needed`.
unsafe fn write_str(
    s: &str,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> MtpdStatus {
    let total = s.len() + 1;
    if !needed.is_null() {
        *needed = total;
    }
    // A (NULL, 0) buffer is the size-query idiom: `needed` is already set.
    if cap < total {
        return set_error(
            MtpdStatus::BufferTooSmall,
            &format!("output needs {total} bytes, buffer holds {cap}"),
        );
    }
    if buf.is_null() {
        return set_error(MtpdStatus::NullPointer, "output buffer is NULL");
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    MtpdStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mtpd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on the calling thread. The pointer
/// stays valid until the next library call from this thread; it is never
/// NULL (an empty string means "no failure recorded").
#[no_mangle]
pub extern "C" fn mtpd_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

// ---------------------------------------------------------------------------
// Cost graph
// ---------------------------------------------------------------------------

/// Parse a cost-matrix CSV (as produced by the experiment pipeline) into a
/// new graph handle.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtpd_cost_graph_from_csv(
    text: *const c_char,
    out: *mut *mut MtpdCostGraph,
) -> MtpdStatus {
    guarded(|| {
        if out.is_null() {
            return set_error(MtpdStatus::NullPointer, "out is NULL");
        }
        let text = match utf8_arg(text, "csv text") {
            Ok(t) => t,
            Err(status) => return status,
        };
        match CostGraph::from_csv(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MtpdCostGraph { inner }));
                MtpdStatus::Ok
            }
            Err(e) => set_rust_error(&e),
        }
    })
}

/// Create an empty graph over `n` node ids; fill it with
/// [`mtpd_cost_graph_set_cost`].
///
/// # Safety
/// `ids` must point to `n` NUL-terminated strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mtpd_cost_graph_new(
    ids: *const *const c_char,
    n: usize,
    out: *mut *mut MtpdCostGraph,
) -> MtpdStatus {
    guarded(|| {
        if out.is_null() || ids.is_null() {
            return set_error(MtpdStatus::NullPointer, "ids or out is NULL");
        }
        let mut owned = Vec::with_capacity(n);
        for i in 0..n {
            match utf8_arg(*ids.add(i), "node id") {
                Ok(s) => owned.push(s.to_string()),
                Err(status) => return status,
            }
        }
        match CostGraph::empty(owned, CostConfig::default()) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MtpdCostGraph { inner }));
                MtpdStatus::Ok
            }
            Err(e) => set_rust_error(&e),
        }
    })
}

/// Set the directed cost `from → to`. The diagonal is rejected.
///
/// # Safety
/// `graph` must be a live handle; `from`/`to` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mtpd_cost_graph_set_cost(
    graph: *mut MtpdCostGraph,
    from: *const c_char,
    to: *const c_char,
    value: f64,
) -> MtpdStatus {
    guarded(|| {
        let Some(graph) = graph.as_mut() else {
            return set_error(MtpdStatus::NullPointer, "graph is NULL");
        };
        let (from, to) = match (utf8_arg(from, "from id"), utf8_arg(to, "to id")) {
            (Ok(f), Ok(t)) => (f, t),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match graph.inner.set_cost(from, to, value) {
            Ok(()) => MtpdStatus::Ok,
            Err(e) => set_rust_error(&e),
        }
    })
}

/// Read the directed cost `from → to` into `out_value`.
///
/// # Safety
/// `graph` must be a live handle; `from`/`to` NUL-terminated strings;
/// `out_value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtpd_cost_graph_cost(
    graph: *const MtpdCostGraph,
    from: *const c_char,
    to: *const c_char,
    out_value: *mut f64,
) -> MtpdStatus {
    guarded(|| {
        let Some(graph) = graph.as_ref() else {
            return set_error(MtpdStatus::NullPointer, "graph is NULL");
        };
        if out_value.is_null() {
            return set_error(MtpdStatus::NullPointer, "out_value is NULL");
        }
        let (from, to) = match (utf8_arg(from, "from id"), utf8_arg(to, "to id")) {
            (Ok(f), Ok(t)) => (f, t),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match graph.inner.cost(from, to) {
            Ok(v) => {
                *out_value = v;
                MtpdStatus::Ok
            }
            Err(e) => set_rust_error(&e),
        }
    })
}

/// Serialize the graph to the same CSV dialect `mtpd_cost_graph_from_csv`
/// accepts.
///
/// # Safety
/// `graph` must be a live handle; `buf`/`needed` per the buffer convention.
#[no_mangle]
pub unsafe extern "C" fn mtpd_cost_graph_to_csv(
    graph: *const MtpdCostGraph,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> MtpdStatus {
    guarded(|| {
        let Some(graph) = graph.as_ref() else {
            return set_error(MtpdStatus::NullPointer, "graph is NULL");
        };
        write_str(&graph.inner.to_csv(), buf, cap, needed)
    })
}

/// Release a graph handle. NULL is a no-op.
///
/// # Safety
/// `graph` must be NULL or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn mtpd_cost_graph_free(graph: *mut MtpdCostGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

// ---------------------------------------------------------------------------
// Performance table
// ---------------------------------------------------------------------------

/// Build a quality table from parallel `ids`/`scores` arrays of length `n`.
///
/// # Safety
/// `table_id` and each `ids[i]` must be NUL-terminated strings; `scores`
/// must hold `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mtpd_perf_table_new(
    table_id: *const c_char,
    ids: *const *const c_char,
    scores: *const f64,
    n: usize,
    out: *mut *mut MtpdPerfTable,
) -> MtpdStatus {
    guarded(|| {
        if out.is_null() || (n > 0 && (ids.is_null() || scores.is_null())) {
            return set_error(MtpdStatus::NullPointer, "ids, scores, or out is NULL");
        }
        let table_id = match utf8_arg(table_id, "table id") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let mut pairs = Vec::with_capacity(n);
        for i in 0..n {
            match utf8_arg(*ids.add(i), "teacher id") {
                Ok(s) => pairs.push((s.to_string(), *scores.add(i))),
                Err(status) => return status,
            }
        }
        match PerformanceTable::new(table_id, &pairs) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MtpdPerfTable { inner }));
                MtpdStatus::Ok
            }
            Err(e) => set_rust_error(&e),
        }
    })
}

/// Parse an `id,q` CSV into a new table handle.
///
/// # Safety
/// `table_id` and `text` must be NUL-terminated strings; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mtpd_perf_table_from_csv(
    table_id: *const c_char,
    text: *const c_char,
    out: *mut *mut MtpdPerfTable,
) -> MtpdStatus {
    guarded(|| {
        if out.is_null() {
            return set_error(MtpdStatus::NullPointer, "out is NULL");
        }
        let table_id = match utf8_arg(table_id, "table id") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let text = match utf8_arg(text, "csv text") {
            Ok(t) => t,
            Err(status) => return status,
        };
        match PerformanceTable::from_csv(table_id, text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MtpdPerfTable { inner }));
                MtpdStatus::Ok
            }
            Err(e) => set_rust_error(&e),
        }
    })
}

/// Release a table handle. NULL is a no-op.
///
/// # Safety
/// `table` must be NULL or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn mtpd_perf_table_free(table: *mut MtpdPerfTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

// ---------------------------------------------------------------------------
// Planning
// ---------------------------------------------------------------------------

/// Plan a teacher curriculum over `graph` and `table` and write the order as
/// comma-joined ids (first stage first).
///
/// `algorithm` is one of `bgs`, `forward`, `sp-sum`, `sp-max`, `topk`; `k`
/// caps the curriculum length. The student is the one graph node without a
/// quality score.
///
/// # Safety
/// `graph`/`table` must be live handles; `algorithm` a NUL-terminated
/// string; `buf`/`needed` per the buffer convention.
#[no_mangle]
pub unsafe extern "C" fn mtpd_plan(
    graph: *const MtpdCostGraph,
    table: *const MtpdPerfTable,
    algorithm: *const c_char,
    k: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> MtpdStatus {
    guarded(|| {
        let (Some(graph), Some(table)) = (graph.as_ref(), table.as_ref()) else {
            return set_error(MtpdStatus::NullPointer, "graph or table is NULL");
        };
        let algorithm = match utf8_arg(algorithm, "algorithm") {
            Ok(a) => a,
            Err(status) => return status,
        };
        let algorithm = match Algorithm::parse(algorithm) {
            Ok(a) => a,
            Err(e) => return set_rust_error(&e),
        };
        match plan_curriculum(algorithm, &graph.inner, &table.inner, k) {
            Ok(curriculum) => write_str(&curriculum.order.join(","), buf, cap, needed),
            Err(e) => set_rust_error(&e),
        }
    })
}

/// Number of teacher orders of length 1..=k over a pool of `pool` teachers,
/// saturating at `UINT64_MAX`.
///
/// # Safety
/// `out_count` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtpd_enumeration_count(
    pool: usize,
    k: usize,
    out_count: *mut u64,
) -> MtpdStatus {
    guarded(|| {
        if out_count.is_null() {
            return set_error(MtpdStatus::NullPointer, "out_count is NULL");
        }
        *out_count = u64::try_from(enumeration_count(pool, k)).unwrap_or(u64::MAX);
        MtpdStatus::Ok
    })
}

// ---------------------------------------------------------------------------
// Adaptation cost
// ---------------------------------------------------------------------------

/// Directed adaptation cost between two models from serialized feature
/// dumps (as written by the pipeline's feature export): fit the best
/// ridge-regularized channel map on the train dumps, evaluate the
/// feature-matching loss on the validation dumps.
///
/// All four buffers carry the binary feature-dump format; `from_*` dumps
/// must agree with each other in shape, as must `to_*` dumps.
///
/// # Safety
/// Each pointer must reference `len` readable bytes; `out_cost` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtpd_adaptation_cost(
    from_train: *const u8,
    from_train_len: usize,
    to_train: *const u8,
    to_train_len: usize,
    from_val: *const u8,
    from_val_len: usize,
    to_val: *const u8,
    to_val_len: usize,
    ridge_eps: f64,
    out_cost: *mut f64,
) -> MtpdStatus {
    guarded(|| {
        if out_cost.is_null() {
            return set_error(MtpdStatus::NullPointer, "out_cost is NULL");
        }
        let mut sets = Vec::with_capacity(4);
        for (ptr, len, what) in [
            (from_train, from_train_len, "from_train"),
            (to_train, to_train_len, "to_train"),
            (from_val, from_val_len, "from_val"),
            (to_val, to_val_len, "to_val"),
        ] {
            if ptr.is_null() {
                return set_error(MtpdStatus::NullPointer, &format!("{what} is NULL"));
            }
            let bytes = std::slice::from_raw_parts(ptr, len);
            match features_from_bytes(bytes) {
                Ok((_, features)) => sets.push(features),
                Err(e) => return set_rust_error(&e),
            }
        }
        let (to_val_f, from_val_f, to_train_f, from_train_f) =
            (sets.pop().unwrap(), sets.pop().unwrap(), sets.pop().unwrap(), sets.pop().unwrap());
        let cfg = CostConfig { ridge_eps, ..CostConfig::default() };
        match adaptation_cost_from_features(&from_train_f, &to_train_f, &from_val_f, &to_val_f, &cfg)
        {
            Ok(cost) => {
                *out_cost = cost;
                MtpdStatus::Ok
            }
            Err(e) => set_rust_error(&e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_str_reports_exact_length_and_terminates() {
        let mut needed = 0usize;
        // Size query: NULL buffer, zero capacity.
        let status = unsafe { write_str("abc", std::ptr::null_mut(), 0, &mut needed) };
        assert_eq!(status, MtpdStatus::BufferTooSmall);
        assert_eq!(needed, 4);

        // One byte short still fails; exact capacity succeeds.
        let mut buf = [1 as c_char; 4];
        let status = unsafe { write_str("abc", buf.as_mut_ptr(), 3, &mut needed) };
        assert_eq!(status, MtpdStatus::BufferTooSmall);
        let status = unsafe { write_str("abc", buf.as_mut_ptr(), 4, &mut needed) };
        assert_eq!(status, MtpdStatus::Ok);
        assert_eq!(needed, 4);
        let text = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert_eq!(text, "abc");
    }

    #[test]
    fn statuses_partition_the_library_errors() {
        let cases = [
            (Error::Numeric("x".into()), MtpdStatus::NumericError),
            (Error::Format("x".into()), MtpdStatus::ParseError),
            (
                Error::Io(std::io::Error::other("x")),
                MtpdStatus::ParseError,
            ),
            (Error::Dimension("x".into()), MtpdStatus::InvalidArgument),
            (Error::Argument("x".into()), MtpdStatus::InvalidArgument),
            (Error::State("x".into()), MtpdStatus::InvalidArgument),
            (Error::Adapter("x".into()), MtpdStatus::InvalidArgument),
            (Error::Config("x".into()), MtpdStatus::InvalidArgument),
        ];
        for (err, want) in cases {
            assert_eq!(set_rust_error(&err), want, "{err}");
        }
    }

    #[test]
    fn last_error_is_thread_local_and_utf8() {
        set_error(MtpdStatus::InvalidArgument, "first");
        let other = std::thread::spawn(|| {
            set_error(MtpdStatus::ParseError, "second");
            unsafe { CStr::from_ptr(mtpd_last_error()) }.to_str().unwrap().to_string()
        })
        .join()
        .unwrap();
        assert_eq!(other, "second");
        let here = unsafe { CStr::from_ptr(mtpd_last_error()) }.to_str().unwrap();
        assert_eq!(here, "first");
    }

    #[test]
    fn guarded_converts_panics_to_internal_status() {
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let status = guarded(|| panic!("boom"));
        std::panic::set_hook(prev);
        assert_eq!(status, MtpdStatus::Internal);
        let message = LAST_ERROR.with(|slot| slot.borrow().clone());
        assert_eq!(message.to_str().unwrap(), "internal panic");
    }
}
