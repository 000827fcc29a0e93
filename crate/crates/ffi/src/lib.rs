//! C ABI over `robust-tc`.
//!
//! Markets are opaque handles built from the JSON market format. Every
//! function returns an [`RtcStatus`]; on failure the message is available
//! from [`rtc_last_error_message`] on the same thread. Strings returned
//! through out-parameters are owned by the caller and released with
//! [`rtc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use robust_tc::analysis::superhedge_price;
use robust_tc::cps::find_cps;
use robust_tc::market::{is_admissible, Market};
use robust_tc::optimize::{robust_value, solve_robust, SolveOptions, Utility};
use robust_tc::spec::{parse_json, parse_market, StrategySpec};
use robust_tc::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RtcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Spec = 3,
    Io = 4,
    Domain = 5,
    InvalidPath = 6,
    Contract = 7,
    Infeasible = 8,
    Hypothesis = 9,
    NonPositiveWealth = 10,
    Lp = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RtcUtility {
    Log = 0,
    Power = 1,
}

/// Opaque market handle.
pub struct RtcMarket {
    market: Market,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RtcStatus {
    match e {
        Error::Spec { .. } => RtcStatus::Spec,
        Error::Io(_) => RtcStatus::Io,
        Error::Domain(_) => RtcStatus::Domain,
        Error::InvalidPath(_) => RtcStatus::InvalidPath,
        Error::Contract(_) => RtcStatus::Contract,
        Error::Infeasible(_) => RtcStatus::Infeasible,
        Error::Hypothesis(_) => RtcStatus::Hypothesis,
        Error::NonPositiveWealth { .. } => RtcStatus::NonPositiveWealth,
        Error::Lp(_) => RtcStatus::Lp,
    }
}

struct Failure(RtcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RtcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RtcStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RtcStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(RtcStatus::NullPointer, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RtcStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn market_arg<'a>(p: *const RtcMarket) -> Result<&'a Market, Failure> {
    p.as_ref().map(|m| &m.market).ok_or_else(|| null("market"))
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(RtcStatus::Panic, "output contains nul".into()))?;
    write(out, c.into_raw(), "out_json")
}

fn utility(kind: RtcUtility, alpha: f64) -> Result<Utility, Failure> {
    Ok(match kind {
        RtcUtility::Log => Utility::Log,
        RtcUtility::Power => Utility::power(alpha)?,
    })
}

/// Builds a market from its JSON description.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rtc_market_from_json(json: *const c_char, out: *mut *mut RtcMarket) -> RtcStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let market = parse_market(text)?;
        write(out, Box::into_raw(Box::new(RtcMarket { market })), "out")
    })
}

/// Releases a market handle; null is ignored.
///
/// # Safety
/// `market` must come from [`rtc_market_from_json`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rtc_market_free(market: *mut RtcMarket) {
    if !market.is_null() {
        drop(Box::from_raw(market));
    }
}

/// Number of models and scenarios of a market.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rtc_market_dims(
    market: *const RtcMarket,
    out_models: *mut usize,
    out_scenarios: *mut usize,
) -> RtcStatus {
    guard(|| {
        let m = market_arg(market)?;
        write(out_models, m.num_models(), "out_models")?;
        write(out_scenarios, m.num_scenarios(), "out_scenarios")
    })
}

/// Finds a consistent price system for model `theta` at cost `lambda`
/// with `Z0 >= delta`; writes the certificate as JSON.
///
/// # Safety
/// All pointers must be valid; free the output with [`rtc_string_free`].
#[no_mangle]
pub unsafe extern "C" fn rtc_find_cps(
    market: *const RtcMarket,
    theta: usize,
    lambda: f64,
    delta: f64,
    out_json: *mut *mut c_char,
) -> RtcStatus {
    guard(|| {
        let m = market_arg(market)?;
        let cps = find_cps(m, theta, lambda, delta)?;
        write_string(out_json, serde_json::to_string(&cps).expect("serialisable"))
    })
}

/// Superhedging price of a claim given as one payoff per scenario.
///
/// # Safety
/// `claim` must point to `len` doubles; all pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rtc_superhedge_price(
    market: *const RtcMarket,
    theta: usize,
    claim: *const f64,
    len: usize,
    out_price: *mut f64,
) -> RtcStatus {
    guard(|| {
        let m = market_arg(market)?;
        if claim.is_null() {
            return Err(null("claim"));
        }
        let g = std::slice::from_raw_parts(claim, len);
        let sh = superhedge_price(g, m, theta)?;
        write(out_price, sh.price, "out_price")
    })
}

/// Solves the robust problem from endowment `x`; writes the value and a
/// JSON report with the optimal strategy.
///
/// # Safety
/// All pointers must be valid; free the output with [`rtc_string_free`].
#[no_mangle]
pub unsafe extern "C" fn rtc_solve_robust(
    market: *const RtcMarket,
    kind: RtcUtility,
    alpha: f64,
    x: f64,
    tol: f64,
    out_value: *mut f64,
    out_json: *mut *mut c_char,
) -> RtcStatus {
    guard(|| {
        let m = market_arg(market)?;
        let u = utility(kind, alpha)?;
        let sol = solve_robust(m, u, x, &SolveOptions { tol, ..SolveOptions::default() })?;
        let report = serde_json::json!({
            "value": sol.value,
            "argmin_model": m.family().labels()[sol.argmin_theta],
            "certified": sol.report.certified,
            "admissible": sol.report.admissible,
            "model_values": sol.report.model_values,
            "strategy": StrategySpec::from_strategy(&sol.strategy, m),
        });
        write(out_value, sol.value, "out_value")?;
        write_string(out_json, report.to_string())
    })
}

/// Admissibility of a strategy given in the JSON strategy format.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rtc_is_admissible(
    market: *const RtcMarket,
    strategy_json: *const c_char,
    tol: f64,
    out_admissible: *mut bool,
) -> RtcStatus {
    guard(|| {
        let m = market_arg(market)?;
        let st = parse_json::<StrategySpec>(str_arg(strategy_json, "strategy_json")?)?.to_strategy(m)?;
        write(out_admissible, is_admissible(&st, m, tol).admissible, "out_admissible")
    })
}

/// Worst-case expected utility of a strategy over the model family.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rtc_robust_value(
    market: *const RtcMarket,
    strategy_json: *const c_char,
    kind: RtcUtility,
    alpha: f64,
    out_value: *mut f64,
) -> RtcStatus {
    guard(|| {
        let m = market_arg(market)?;
        let st = parse_json::<StrategySpec>(str_arg(strategy_json, "strategy_json")?)?.to_strategy(m)?;
        let (v, _) = robust_value(&st, m, utility(kind, alpha)?)?;
        write(out_value, v, "out_value")
    })
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rtc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rtc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
