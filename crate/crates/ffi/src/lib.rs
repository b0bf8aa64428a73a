//! C ABI over the simulator.
//!
//! Every function returns a [`UaanetStatus`]; on failure a message is kept
//! per thread and read with [`uaanet_last_error_message`]. Engines are
//! opaque handles created by [`uaanet_engine_new`] and released with
//! [`uaanet_engine_free`]. Strings handed out by the library are
//! NUL-terminated UTF-8 JSON and must be released with [`uaanet_string_free`].
//! A handle must not be used from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use uaanet::engine::{self, Command, Engine, EngineError};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UaanetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidScenario = 3,
    InvalidCommand = 4,
    UnknownNode = 5,
    /// A contract refused the operation (no route, wrong caller, funds...).
    Rejected = 6,
    DomainError = 7,
    Panic = 8,
}

/// Opaque simulator instance.
pub struct UaanetEngine {
    inner: Engine,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(text).expect("NULs replaced")));
}

struct Failure(UaanetStatus, String);

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::UnknownNode(_) => UaanetStatus::UnknownNode,
            EngineError::InvalidCommand(_) => UaanetStatus::InvalidCommand,
            EngineError::Scenario(_) => UaanetStatus::InvalidScenario,
            _ => UaanetStatus::Rejected,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> UaanetStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => UaanetStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            UaanetStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(UaanetStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(UaanetStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn engine_mut<'a>(engine: *mut UaanetEngine) -> Result<&'a mut Engine, Failure> {
    engine
        .as_mut()
        .map(|e| &mut e.inner)
        .ok_or(Failure(UaanetStatus::NullPointer, "engine is null".into()))
}

unsafe fn write_string(out: *mut *mut c_char, text: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(UaanetStatus::NullPointer, "output pointer is null".into()));
    }
    *out = CString::new(text).expect("JSON has no NUL").into_raw();
    Ok(())
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("views always serialize")
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn uaanet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn uaanet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn uaanet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a scenario document without building an engine.
///
/// # Safety
/// `scenario_toml` must be a NUL-terminated string or null.
#[no_mangle]
pub unsafe extern "C" fn uaanet_validate_scenario(scenario_toml: *const c_char) -> UaanetStatus {
    guard(|| {
        let text = read_str(scenario_toml, "scenario")?;
        uaanet::gateway::load_scenario(text)
            .map(|_| ())
            .map_err(|e| Failure(UaanetStatus::InvalidScenario, e.to_string()))
    })
}

/// Builds an engine from scenario text and stores the handle in `out`.
///
/// # Safety
/// `scenario_toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uaanet_engine_new(scenario_toml: *const c_char, out: *mut *mut UaanetEngine) -> UaanetStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(UaanetStatus::NullPointer, "output pointer is null".into()));
        }
        let text = read_str(scenario_toml, "scenario")?;
        let inner = Engine::from_toml(text)?;
        *out = Box::into_raw(Box::new(UaanetEngine { inner }));
        Ok(())
    })
}

/// Destroys an engine. Null is ignored.
///
/// # Safety
/// `engine` must come from [`uaanet_engine_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn uaanet_engine_free(engine: *mut UaanetEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Advances `ticks` ticks of 5 ms.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn uaanet_engine_step(engine: *mut UaanetEngine, ticks: u64) -> UaanetStatus {
    guard(|| {
        let e = engine_mut(engine)?;
        for _ in 0..ticks {
            e.advance();
        }
        Ok(())
    })
}

/// Advances to `tick`, skipping idle stretches.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn uaanet_engine_run_until(engine: *mut UaanetEngine, tick: u64) -> UaanetStatus {
    guard(|| {
        engine_mut(engine)?.run_until(tick);
        Ok(())
    })
}

/// Advances to the scenario horizon.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn uaanet_engine_run_to_horizon(engine: *mut UaanetEngine) -> UaanetStatus {
    guard(|| {
        engine_mut(engine)?.run_to_horizon();
        Ok(())
    })
}

/// Current tick.
///
/// # Safety
/// `engine` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uaanet_engine_tick(engine: *mut UaanetEngine, out: *mut u64) -> UaanetStatus {
    guard(|| {
        let tick = engine_mut(engine)?.tick();
        if out.is_null() {
            return Err(Failure(UaanetStatus::NullPointer, "output pointer is null".into()));
        }
        *out = tick;
        Ok(())
    })
}

unsafe fn parse_command(command_json: *const c_char) -> Result<Command, Failure> {
    let text = read_str(command_json, "command")?;
    serde_json::from_str(text).map_err(|e| Failure(UaanetStatus::InvalidCommand, format!("malformed command: {e}")))
}

/// Validates a JSON command and queues it for the next tick boundary.
///
/// # Safety
/// `engine` must be a live handle; `command_json` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn uaanet_engine_submit_json(engine: *mut UaanetEngine, command_json: *const c_char) -> UaanetStatus {
    guard(|| {
        let e = engine_mut(engine)?;
        let command = parse_command(command_json)?;
        Ok(e.submit(command)?)
    })
}

/// Applies a JSON command immediately, between ticks.
///
/// # Safety
/// `engine` must be a live handle; `command_json` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn uaanet_engine_apply_json(engine: *mut UaanetEngine, command_json: *const c_char) -> UaanetStatus {
    guard(|| {
        let e = engine_mut(engine)?;
        let command = parse_command(command_json)?;
        Ok(e.apply(command)?)
    })
}

/// Snapshot JSON, consuming the events pending since the previous snapshot.
///
/// # Safety
/// `engine` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uaanet_engine_snapshot_json(engine: *mut UaanetEngine, out: *mut *mut c_char) -> UaanetStatus {
    guard(|| {
        let text = json(&engine_mut(engine)?.snapshot());
        write_string(out, text)
    })
}

/// Node table JSON (address, blacklist count, faulty time, penalty, balance).
///
/// # Safety
/// `engine` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uaanet_engine_node_table_json(engine: *mut UaanetEngine, out: *mut *mut c_char) -> UaanetStatus {
    guard(|| {
        let e = engine_mut(engine)?;
        let text = json(&e.registry().node_table(e.ledger()));
        write_string(out, text)
    })
}

/// Whole trace as JSON lines.
///
/// # Safety
/// `engine` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uaanet_engine_trace_jsonl(engine: *mut UaanetEngine, out: *mut *mut c_char) -> UaanetStatus {
    guard(|| {
        let text = engine::trace::to_jsonl(engine_mut(engine)?.trace());
        write_string(out, text)
    })
}

/// Metrics report JSON.
///
/// # Safety
/// `engine` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uaanet_engine_metrics_json(engine: *mut UaanetEngine, out: *mut *mut c_char) -> UaanetStatus {
    guard(|| {
        let text = json(&engine_mut(engine)?.metrics_report());
        write_string(out, text)
    })
}

/// Expected delay between a drop after `x` hops and its detection on an
/// `n`-node route: `(n - 1 - x) * per_hop_s`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uaanet_expected_detection_time(n: usize, x: usize, per_hop_s: f64, out: *mut f64) -> UaanetStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(UaanetStatus::NullPointer, "output pointer is null".into()));
        }
        let t = engine::expected_detection_time(n, x, per_hop_s)
            .map_err(|e| Failure(UaanetStatus::DomainError, e.to_string()))?;
        *out = t;
        Ok(())
    })
}
