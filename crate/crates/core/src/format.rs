//! Decimal rendering shared by CSV and JSON outputs.

use serde::Serializer;
use serde_json::value::RawValue;

/// Significant digits written for every floating-point output.
pub const SIG_DIGITS: usize = 12;

/// Formats `x` in plain decimal with [`SIG_DIGITS`] significant digits,
/// trailing zeros trimmed. Non-finite values render as `NaN`/`inf`.
pub fn fmt_sig12(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    // Rounding may carry into a new leading digit; one extra decimal is harmless.
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Serde adapter writing an `f64` as a JSON number via [`fmt_sig12`].
/// Non-finite values become `null`.
pub fn ser_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if !x.is_finite() {
        return s.serialize_none();
    }
    let raw = RawValue::from_string(fmt_sig12(*x)).map_err(serde::ser::Error::custom)?;
    serde::Serialize::serialize(&raw, s)
}
