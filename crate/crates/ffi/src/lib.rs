//! C ABI over the hyperreg library.
//!
//! Conventions, mirrored in `include/hyperreg.h`:
//!
//! - Graphs and pattern complexes live behind opaque handles with explicit
//!   `_free` functions; everything else crosses the boundary as UTF-8 JSON
//!   strings in the library's interchange format (exact weights as decimal
//!   or `"a/b"` strings).
//! - Every fallible function returns a status code; `0` is success. On
//!   failure a thread-local message is readable via [`hyperreg_last_error`]
//!   until the next failure on the same thread.
//! - Strings returned through `char **` are owned by the caller and must be
//!   released with [`hyperreg_string_free`].
//! - Panics never unwind across the boundary; they surface as
//!   `HYPERREG_ERR_PANIC`.
//!
//! All exact arithmetic uses the big-rational backend; the float backend is
//! not exposed here (callers wanting doubles can parse the reported strings).

use std::cell::RefCell;
use std::ffi::{CStr, CString, c_char};
use std::panic::{AssertUnwindSafe, catch_unwind};
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hyperreg::gpe::{CandidateStack, Ensemble, ThcMode, gpe_count, greedy_embed};
use hyperreg::homcount::{hom_estimate, hom_weight};
use hyperreg::inheritance::inherit_scan;
use hyperreg::jsonio::{
    complex_from_dto, density_from_dto, ensemble_from_dto, graph_from_dto, graph_to_dto,
    stack_from_dto, to_json_string, weight_to_value,
};
use hyperreg::regularity::{is_regular, minimality_report};
use hyperreg::thc::{RandomGraphSpec, is_thc_full, random_hypergraph};
use hyperreg::{DensityGraph, Error, PartiteComplex, Rat, Scalar, WeightedGraph};

pub const HYPERREG_OK: i32 = 0;
pub const HYPERREG_ERR_DOMAIN: i32 = 1;
pub const HYPERREG_ERR_PARSE: i32 = 2;
pub const HYPERREG_ERR_BUDGET: i32 = 3;
pub const HYPERREG_ERR_NULL: i32 = 4;
pub const HYPERREG_ERR_UTF8: i32 = 5;
pub const HYPERREG_ERR_PANIC: i32 = 6;

/// An opaque weighted partite graph (exact rational weights).
pub struct HyperregGraph(WeightedGraph<Rat>);

/// An opaque partite pattern complex.
pub struct HyperregComplex(PartiteComplex);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(code: i32, message: &str) -> i32 {
    let stored = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("invalid error message").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(stored));
    code
}

fn status_of(e: &Error) -> i32 {
    match e {
        Error::Domain(_) => HYPERREG_ERR_DOMAIN,
        Error::Parse(_) => HYPERREG_ERR_PARSE,
        Error::Budget(_) => HYPERREG_ERR_BUDGET,
        Error::Io(_) => HYPERREG_ERR_DOMAIN,
    }
}

/// Runs a body, converting panics and library errors into status codes.
fn guarded(body: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => HYPERREG_OK,
        Ok(Err((code, message))) => set_error(code, &message),
        Err(_) => set_error(HYPERREG_ERR_PANIC, "internal panic"),
    }
}

fn lib_err(e: Error) -> (i32, String) {
    (status_of(&e), e.to_string())
}

fn null_err(what: &str) -> (i32, String) {
    (HYPERREG_ERR_NULL, format!("{what} must not be null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (i32, String)> {
    if p.is_null() {
        return Err(null_err(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| (HYPERREG_ERR_UTF8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, (i32, String)> {
    unsafe { p.as_ref() }.ok_or_else(|| null_err(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (i32, String)> {
    unsafe { p.as_mut() }.ok_or_else(|| null_err(what))
}

fn into_c_string(s: String) -> Result<*mut c_char, (i32, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (HYPERREG_ERR_PARSE, "output contains a NUL byte".into()))
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, (i32, String)> {
    serde_json::from_str(text).map_err(|e| (HYPERREG_ERR_PARSE, format!("{what}: {e}")))
}

fn parse_rat(text: &str, what: &str) -> Result<Rat, (i32, String)> {
    Rat::from_repr(text).map_err(|e| (HYPERREG_ERR_PARSE, format!("{what}: {e}")))
}

fn report_json<T: serde::Serialize>(t: &T) -> Result<String, (i32, String)> {
    to_json_string(t).map_err(lib_err)
}

fn nonzero(budget: u64) -> Option<u64> {
    (budget != 0).then_some(budget)
}

/// Version string of the underlying library; a static, do not free.
#[no_mangle]
pub extern "C" fn hyperreg_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(env!("CARGO_PKG_VERSION")).unwrap())
        .as_ptr()
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn hyperreg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |s| s.as_ptr())
    })
}

/// Releases a string returned through a `char **` out-parameter.
#[no_mangle]
pub unsafe extern "C" fn hyperreg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

#[no_mangle]
pub unsafe extern "C" fn hyperreg_graph_from_json(
    json: *const c_char,
    out: *mut *mut HyperregGraph,
) -> i32 {
    guarded(|| {
        let text = unsafe { str_arg(json, "json") }?;
        let out = unsafe { out_arg(out, "out") }?;
        let g = graph_from_dto(&parse_json(text, "graph json")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(HyperregGraph(g)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hyperreg_graph_to_json(
    graph: *const HyperregGraph,
    out_json: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        let graph = unsafe { ref_arg(graph, "graph") }?;
        let out_json = unsafe { out_arg(out_json, "out_json") }?;
        *out_json = into_c_string(report_json(&graph_to_dto(&graph.0))?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hyperreg_graph_free(graph: *mut HyperregGraph) {
    if !graph.is_null() {
        drop(unsafe { Box::from_raw(graph) });
    }
}

#[no_mangle]
pub unsafe extern "C" fn hyperreg_complex_from_json(
    json: *const c_char,
    out: *mut *mut HyperregComplex,
) -> i32 {
    guarded(|| {
        let text = unsafe { str_arg(json, "json") }?;
        let out = unsafe { out_arg(out, "out") }?;
        let h = complex_from_dto(&parse_json(text, "complex json")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(HyperregComplex(h)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hyperreg_complex_free(complex: *mut HyperregComplex) {
    if !complex.is_null() {
        drop(unsafe { Box::from_raw(complex) });
    }
}

/// Symmetric k-uniform random hypergraph on `k` clone parts of `n` vertices.
#[no_mangle]
pub unsafe extern "C" fn hyperreg_random_graph(
    k: usize,
    n: usize,
    p: f64,
    seed: u64,
    out: *mut *mut HyperregGraph,
) -> i32 {
    guarded(|| {
        let out = unsafe { out_arg(out, "out") }?;
        let g = random_hypergraph::<Rat>(&RandomGraphSpec { k, n, p, seed }).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(HyperregGraph(g)));
        Ok(())
    })
}

/// Exact homomorphism weight as a rational string ("3/4"). `budget` caps the
/// elementary operations; 0 means the library default.
#[no_mangle]
pub unsafe extern "C" fn hyperreg_count(
    graph: *const HyperregGraph,
    complex: *const HyperregComplex,
    budget: u64,
    out_value: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        let graph = unsafe { ref_arg(graph, "graph") }?;
        let complex = unsafe { ref_arg(complex, "complex") }?;
        let out_value = unsafe { out_arg(out_value, "out_value") }?;
        let v = hom_weight(&complex.0, &graph.0, nonzero(budget)).map_err(lib_err)?;
        *out_value = into_c_string(v.to_repr())?;
        Ok(())
    })
}

/// Monte Carlo homomorphism weight: the estimate and its standard error.
#[no_mangle]
pub unsafe extern "C" fn hyperreg_count_estimate(
    graph: *const HyperregGraph,
    complex: *const HyperregComplex,
    samples: u64,
    seed: u64,
    out_value: *mut f64,
    out_stderr: *mut f64,
) -> i32 {
    guarded(|| {
        let graph = unsafe { ref_arg(graph, "graph") }?;
        let complex = unsafe { ref_arg(complex, "complex") }?;
        let out_value = unsafe { out_arg(out_value, "out_value") }?;
        let out_stderr = unsafe { out_arg(out_stderr, "out_stderr") }?;
        let g64 = graph.0.map_scalars(|w| w.to_f64());
        let est = hom_estimate(&complex.0, &g64, samples, seed).map_err(lib_err)?;
        *out_value = est.estimate;
        *out_stderr = est.stderr;
        Ok(())
    })
}

/// Octahedron regularity verdict as a JSON report. `d` may be null to test
/// at the measured density; `eps` and `d` parse as rational strings.
#[no_mangle]
pub unsafe extern "C" fn hyperreg_regcheck(
    graph: *const HyperregGraph,
    reference: *const HyperregGraph,
    eps: *const c_char,
    d: *const c_char,
    out_json: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        let graph = unsafe { ref_arg(graph, "graph") }?;
        let reference = unsafe { ref_arg(reference, "reference") }?;
        let eps = parse_rat(unsafe { str_arg(eps, "eps") }?, "eps")?;
        let d = if d.is_null() {
            None
        } else {
            Some(parse_rat(unsafe { str_arg(d, "d") }?, "d")?)
        };
        let out_json = unsafe { out_arg(out_json, "out_json") }?;
        let verdict = is_regular(&graph.0, &reference.0, &eps, d.as_ref()).map_err(lib_err)?;
        *out_json = into_c_string(report_json(&verdict.map_scalars(weight_to_value))?)?;
        Ok(())
    })
}

/// Worst doubling defect over all octahedron triples, as a JSON report.
#[no_mangle]
pub unsafe extern "C" fn hyperreg_minimality(
    graph: *const HyperregGraph,
    out_json: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        let graph = unsafe { ref_arg(graph, "graph") }?;
        let out_json = unsafe { out_arg(out_json, "out_json") }?;
        let report = minimality_report(&graph.0).map_err(lib_err)?;
        *out_json = into_c_string(report_json(&report.map_scalars(weight_to_value))?)?;
        Ok(())
    })
}

/// Scans the first part's links for inherited regularity; JSON report.
#[no_mangle]
pub unsafe extern "C" fn hyperreg_inherit_scan(
    graph: *const HyperregGraph,
    reference: *const HyperregGraph,
    eps_out: *const c_char,
    d: *const c_char,
    dprime: *const c_char,
    out_json: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        let graph = unsafe { ref_arg(graph, "graph") }?;
        let reference = unsafe { ref_arg(reference, "reference") }?;
        let eps_out = parse_rat(unsafe { str_arg(eps_out, "eps_out") }?, "eps_out")?;
        let d = parse_rat(unsafe { str_arg(d, "d") }?, "d")?;
        let dprime = parse_rat(unsafe { str_arg(dprime, "dprime") }?, "dprime")?;
        let out_json = unsafe { out_arg(out_json, "out_json") }?;
        let scan =
            inherit_scan(&graph.0, &reference.0, &eps_out, &d, &dprime).map_err(lib_err)?;
        *out_json = into_c_string(report_json(&scan.map_scalars(weight_to_value))?)?;
        Ok(())
    })
}

/// Exact hereditary-counting verdict on a tiny instance; JSON report.
/// `density_json` is a density graph in the interchange format.
#[no_mangle]
pub unsafe extern "C" fn hyperreg_thc_full(
    reference: *const HyperregGraph,
    density_json: *const c_char,
    eta: *const c_char,
    cstar: usize,
    out_json: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        let reference = unsafe { ref_arg(reference, "reference") }?;
        let density: DensityGraph<Rat> =
            density_from_dto(&parse_json(unsafe { str_arg(density_json, "density_json") }?, "density json")?)
                .map_err(lib_err)?;
        let eta = parse_rat(unsafe { str_arg(eta, "eta") }?, "eta")?;
        let out_json = unsafe { out_arg(out_json, "out_json") }?;
        let verdict = is_thc_full(&reference.0, &density, &eta, cstar, None).map_err(lib_err)?;
        *out_json = into_c_string(report_json(&verdict)?)?;
        Ok(())
    })
}

/// Level count of a candidate stack against its density prediction; the
/// stack and ensemble arrive as interchange JSON. JSON report out.
#[no_mangle]
pub unsafe extern "C" fn hyperreg_gpe_count(
    stack_json: *const c_char,
    ensemble_json: *const c_char,
    level: usize,
    budget: u64,
    out_json: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        let stack: CandidateStack<Rat> =
            stack_from_dto(&parse_json(unsafe { str_arg(stack_json, "stack_json") }?, "stack json")?)
                .map_err(lib_err)?;
        let ens: Ensemble<Rat> =
            ensemble_from_dto(&parse_json(unsafe { str_arg(ensemble_json, "ensemble_json") }?, "ensemble json")?)
                .map_err(lib_err)?;
        let out_json = unsafe { out_arg(out_json, "out_json") }?;
        let cmp = gpe_count(&stack, &ens, level, None, nonzero(budget)).map_err(lib_err)?;
        *out_json = into_c_string(report_json(&cmp.map_scalars(weight_to_value))?)?;
        Ok(())
    })
}

/// Greedy vertex-by-vertex embedding. `mode`: 0 = full hereditary check,
/// 1 = counting-hypothesis check, 2 = assume the hypothesis. Nonzero
/// `exhaustive` also compares the exact count against the lower bound.
#[no_mangle]
pub unsafe extern "C" fn hyperreg_greedy_embed(
    stack_json: *const c_char,
    ensemble_json: *const c_char,
    seed: u64,
    exhaustive: i32,
    mode: i32,
    out_json: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        let stack: CandidateStack<Rat> =
            stack_from_dto(&parse_json(unsafe { str_arg(stack_json, "stack_json") }?, "stack json")?)
                .map_err(lib_err)?;
        let ens: Ensemble<Rat> =
            ensemble_from_dto(&parse_json(unsafe { str_arg(ensemble_json, "ensemble_json") }?, "ensemble json")?)
                .map_err(lib_err)?;
        let mode = match mode {
            0 => ThcMode::Full,
            1 => ThcMode::Hypothesis,
            2 => ThcMode::Assumed,
            other => {
                return Err((
                    HYPERREG_ERR_PARSE,
                    format!("mode must be 0, 1 or 2, got {other}"),
                ))
            }
        };
        let out_json = unsafe { out_arg(out_json, "out_json") }?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outcome = greedy_embed(&stack, &ens, None, &mut rng, exhaustive != 0, mode, None, None)
            .map_err(lib_err)?;
        *out_json = into_c_string(report_json(&outcome.map_scalars(weight_to_value))?)?;
        Ok(())
    })
}
