//! C ABI for the circuit analysis and simulation pipeline: opaque circuit
//! handles, integer status codes mirroring the CLI exit codes, and
//! UTF-8 JSON/CSV results as caller-freed C strings.
//!
//! The matching declarations live in `include/phcirc.h` (maintained by
//! hand and checked against this file by the test suite).
//!
//! Conventions:
//! - every function returns a `PhcStatus`; results are written through out
//!   pointers only on `PHC_OK`;
//! - strings returned through out pointers must be released with
//!   [`phc_string_free`];
//! - on failure, [`phc_last_error`] returns a thread-local message valid
//!   until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use phcirc::cli::{self, SimulateArgs};
use phcirc::netlist::{parse_netlist, CircuitSpec};
use phcirc::validation::failure_class;
use phcirc::Error;

/// Status codes, aligned with the CLI exit codes.
pub const PHC_OK: c_int = 0;
/// Netlist parse error or well-posedness failure.
pub const PHC_INPUT: c_int = 2;
/// Structurally unamenable (includes a proposed non-normal tree).
pub const PHC_UNAMENABLE: c_int = 3;
/// Invalid argument (null pointer, bad flag combination).
pub const PHC_USAGE: c_int = 64;
/// Internal failure (solver divergence, defective input past validation).
pub const PHC_INTERNAL: c_int = 70;

/// Opaque circuit handle: the validated netlist.
pub struct PhcCircuit {
    text: String,
    #[allow(dead_code)]
    spec: CircuitSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: Vec<u8> = msg.bytes().filter(|&b| b != 0).collect();
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(e: &Error) -> c_int {
    match failure_class(e) {
        "wellposedness" | "parse" => PHC_INPUT,
        "unamenable" => PHC_UNAMENABLE,
        _ => match e {
            Error::InvalidArgument(_) => PHC_USAGE,
            _ => PHC_INTERNAL,
        },
    }
}

fn fail(e: &Error) -> c_int {
    set_error(&e.to_string());
    status_of(e)
}

/// Run a fallible body with panic containment.
fn guarded(body: impl FnOnce() -> c_int) -> c_int {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            PHC_INTERNAL
        }
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, c_int> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(PHC_USAGE);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        PHC_USAGE
    })
}

fn emit_string(out: *mut *mut c_char, s: String) -> c_int {
    let sanitized: Vec<u8> = s.into_bytes().into_iter().filter(|&b| b != 0).collect();
    match CString::new(sanitized) {
        Ok(cs) => {
            unsafe { *out = cs.into_raw() };
            PHC_OK
        }
        Err(_) => {
            set_error("result contained an interior NUL");
            PHC_INTERNAL
        }
    }
}

/// Last error message for this thread (empty string when none). The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn phc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parse and validate a netlist; on success writes a heap-allocated handle.
///
/// # Safety
/// `netlist` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phc_circuit_parse(
    netlist: *const c_char,
    out: *mut *mut PhcCircuit,
) -> c_int {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return PHC_USAGE;
        }
        let text = match str_arg(netlist) {
            Ok(t) => t.to_owned(),
            Err(code) => return code,
        };
        match parse_netlist(&text) {
            Ok(spec) => {
                let handle = Box::new(PhcCircuit { text, spec });
                *out = Box::into_raw(handle);
                PHC_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release a circuit handle. Null is a no-op.
///
/// # Safety
/// `c` must come from [`phc_circuit_parse`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn phc_circuit_free(c: *mut PhcCircuit) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Structural analysis; writes the JSON report (sorted keys).
/// `tree_names` may be null (Kruskal tree) or a comma-separated element
/// name list. `model` is 1 or 2.
///
/// # Safety
/// `c` must be a live handle; `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phc_analyze_json(
    c: *const PhcCircuit,
    model: c_int,
    tree_names: *const c_char,
    out_json: *mut *mut c_char,
) -> c_int {
    guarded(|| {
        if c.is_null() || out_json.is_null() {
            set_error("null argument");
            return PHC_USAGE;
        }
        let circuit = &*c;
        let tree = if tree_names.is_null() {
            None
        } else {
            match str_arg(tree_names) {
                Ok(s) => Some(s.to_owned()),
                Err(code) => return code,
            }
        };
        let rep = match cli::analyze_report(&circuit.text, tree.as_deref(), model as u8) {
            Ok(r) => r,
            Err(e) => return fail(&e),
        };
        let amenable = rep.amenable;
        match cli::to_sorted_json(&rep) {
            Ok(json) => {
                let code = emit_string(out_json, json);
                if code != PHC_OK {
                    return code;
                }
                if amenable {
                    PHC_OK
                } else {
                    set_error("system Jacobian is singular at the sample point");
                    PHC_UNAMENABLE
                }
            }
            Err(e) => fail(&e),
        }
    })
}

/// Simulate and write the trajectory CSV. `h > 0` selects a fixed step;
/// otherwise `rtol`/`atol` drive the adaptive controller (non-positive
/// values fall back to 1e-6 / 1e-9). `order` is 1 or 2; `model` 1 or 2;
/// `guess` seeds the consistent-point solve.
///
/// # Safety
/// `c` must be a live handle; `out_csv` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phc_simulate_csv(
    c: *const PhcCircuit,
    t0: c_double,
    t1: c_double,
    h: c_double,
    rtol: c_double,
    atol: c_double,
    order: c_int,
    model: c_int,
    guess: c_double,
    out_csv: *mut *mut c_char,
) -> c_int {
    guarded(|| {
        if c.is_null() || out_csv.is_null() {
            set_error("null argument");
            return PHC_USAGE;
        }
        let circuit = &*c;
        let args = SimulateArgs {
            file: String::new(),
            t0,
            t1,
            h: (h > 0.0).then_some(h),
            rtol: (rtol > 0.0).then_some(rtol),
            atol: (atol > 0.0).then_some(atol),
            order: order as u8,
            model: model as u8,
            guess,
            out: None,
            tree: None,
        };
        match cli::run_simulation(&args, &circuit.text) {
            Ok(out) => emit_string(out_csv, out.csv),
            Err(e) => fail(&e),
        }
    })
}

/// Finite eigenvalues of a linear time-invariant circuit as JSON.
///
/// # Safety
/// `c` must be a live handle; `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phc_eig_json(c: *const PhcCircuit, out_json: *mut *mut c_char) -> c_int {
    guarded(|| {
        if c.is_null() || out_json.is_null() {
            set_error("null argument");
            return PHC_USAGE;
        }
        let circuit = &*c;
        match cli::eig_report(&circuit.text).and_then(|r| cli::to_sorted_json(&r)) {
            Ok(json) => emit_string(out_json, json),
            Err(e) => fail(&e),
        }
    })
}

/// Release a string produced by this library. Null is a no-op.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn phc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    const RUNNING: &str = "\
edge V V 1 3 {10*t*sin(200*pi*t)}
edge C1 C 1 4 5e-6
edge C2 C 3 4 5e-6
edge G G 1 2 1
edge R R 2 3 1
edge L1 L 4 5 0.1
edge L2 L 5 2 0.1
edge I I 1 5 {10*sin(10*t)}
";

    fn cstr(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    unsafe fn take_string(p: *mut c_char) -> String {
        let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
        phc_string_free(p);
        s
    }

    #[test]
    fn parse_analyze_free_cycle() {
        unsafe {
            let mut handle: *mut PhcCircuit = ptr::null_mut();
            let code = phc_circuit_parse(cstr(RUNNING).as_ptr(), &mut handle);
            assert_eq!(code, PHC_OK);
            let mut json: *mut c_char = ptr::null_mut();
            let tree = cstr("V,C1,R,L1");
            let code = phc_analyze_json(handle, 2, tree.as_ptr(), &mut json);
            assert_eq!(code, PHC_OK);
            let text = take_string(json);
            assert!(text.contains("\"dof\": 2"));
            assert!(text.contains("\"structural_index\": 1"));
            phc_circuit_free(handle);
        }
    }

    #[test]
    fn parse_error_reports_input_status() {
        unsafe {
            let mut handle: *mut PhcCircuit = ptr::null_mut();
            let code = phc_circuit_parse(cstr("edge X Q 1 2 5").as_ptr(), &mut handle);
            assert_eq!(code, PHC_INPUT);
            let msg = CStr::from_ptr(phc_last_error()).to_str().unwrap();
            assert!(msg.contains("unknown kind"), "{msg}");
        }
    }

    #[test]
    fn simulate_returns_csv() {
        unsafe {
            let mut handle: *mut PhcCircuit = ptr::null_mut();
            assert_eq!(phc_circuit_parse(cstr(RUNNING).as_ptr(), &mut handle), PHC_OK);
            let mut csv: *mut c_char = ptr::null_mut();
            let code =
                phc_simulate_csv(handle, 0.0, 1e-4, 1e-5, 0.0, 0.0, 2, 2, 1.0, &mut csv);
            assert_eq!(code, PHC_OK);
            let text = take_string(csv);
            assert!(text.starts_with("t,"));
            assert_eq!(text.lines().count(), 12);
            phc_circuit_free(handle);
        }
    }

    #[test]
    fn eig_of_nonlinear_is_internal_class() {
        let clipper = "\
edge V V 1 3 {(2*t/0.03)*sin(2000*pi*t)}
edge R R 1 2 1000
edge D1 G 2 3 {1e-13*(exp(v/0.025)-1)}
edge D2 G 3 2 {1e-13*(exp(v/0.025)-1)}
edge I I 2 3 0
";
        unsafe {
            let mut handle: *mut PhcCircuit = ptr::null_mut();
            assert_eq!(phc_circuit_parse(cstr(clipper).as_ptr(), &mut handle), PHC_OK);
            let mut json: *mut c_char = ptr::null_mut();
            let code = phc_eig_json(handle, &mut json);
            assert_eq!(code, PHC_INTERNAL);
            let msg = CStr::from_ptr(phc_last_error()).to_str().unwrap();
            assert!(msg.contains("linear"), "{msg}");
            phc_circuit_free(handle);
        }
    }

    #[test]
    fn null_arguments_are_usage_errors() {
        unsafe {
            assert_eq!(phc_circuit_parse(ptr::null(), ptr::null_mut()), PHC_USAGE);
            let mut json: *mut c_char = ptr::null_mut();
            assert_eq!(phc_analyze_json(ptr::null(), 2, ptr::null(), &mut json), PHC_USAGE);
            phc_circuit_free(ptr::null_mut());
            phc_string_free(ptr::null_mut());
        }
    }
}
