//! Unit-suffixed quantities at the configuration boundary.
//!
//! Internally every quantity is SI. Config files carry values like `T1_us`
//! or `bias_G`; converting those with a floating-point multiply would not
//! round-trip, so the conversion shifts the decimal exponent of the shortest
//! round-trip representation instead. `x -> text -> x` is then exact for
//! every finite `x`.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Shift the decimal exponent of a numeric literal by `shift`.
fn shift_exponent(text: &str, shift: i32) -> Option<String> {
    let text = text.trim();
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    if mantissa.is_empty() || !mantissa.bytes().all(|b| b.is_ascii_digit() || b == b'.' || b == b'-' || b == b'+') {
        return None;
    }
    Some(format!("{mantissa}e{}", exponent + shift))
}

/// Render an SI value in units of `10^-exp` (e.g. `exp = 6` for micro).
pub fn si_to_text(value: f64, exp: i32) -> Option<String> {
    if !value.is_finite() {
        return None;
    }
    let shifted = shift_exponent(&format!("{value:e}"), exp)?;
    Some(plain_decimal(&shifted).unwrap_or(shifted))
}

/// Rewrite `d.ddde±x` without the exponent when that stays short.
fn plain_decimal(text: &str) -> Option<String> {
    let (mantissa, exponent) = text.split_once('e')?;
    let exponent: i32 = exponent.parse().ok()?;
    if !(-8..=16).contains(&exponent) {
        return None;
    }
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if digits.bytes().all(|b| b == b'0') {
        return Some(format!("{sign}0"));
    }
    // the shortest representation has exactly one digit before the point
    let point = 1 + exponent;
    let body = if point <= 0 {
        format!("0.{}{digits}", "0".repeat((-point) as usize))
    } else if point as usize >= digits.len() {
        format!("{digits}{}", "0".repeat(point as usize - digits.len()))
    } else {
        format!("{}.{}", &digits[..point as usize], &digits[point as usize..])
    };
    Some(format!("{sign}{body}"))
}

/// Parse a literal given in units of `10^-exp` back into SI.
pub fn text_to_si(text: &str, exp: i32) -> Option<f64> {
    shift_exponent(text, -exp)?.parse::<f64>().ok()
}

/// An SI value that is written to and read from config as `value * 10^E`.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub struct Scaled<const E: i32>(pub f64);

/// Microseconds or micrometres.
pub type Micro = Scaled<6>;
/// Gauss (1 G = 1e-4 T).
pub type Gauss = Scaled<4>;
/// Gauss per centimetre (1 G/cm = 1e-2 T/m).
pub type GaussPerCm = Scaled<2>;
/// Millimetres per second.
pub type Milli = Scaled<3>;

impl<const E: i32> Scaled<E> {
    pub fn si(self) -> f64 {
        self.0
    }
}

impl<const E: i32> Default for Scaled<E> {
    fn default() -> Self {
        Scaled(0.0)
    }
}

impl<const E: i32> fmt::Debug for Scaled<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}e-{E}", self.0 * 10f64.powi(E))
    }
}

impl<const E: i32> Serialize for Scaled<E> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let text = si_to_text(self.0, E).ok_or_else(|| S::Error::custom("non-finite quantity"))?;
        let number: serde_json::Number = text
            .parse()
            .map_err(|_| S::Error::custom(format!("cannot encode {text} as a JSON number")))?;
        number.serialize(serializer)
    }
}

impl<'de, const E: i32> Deserialize<'de> for Scaled<E> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let number = serde_json::Number::deserialize(deserializer)?;
        let text = number.to_string();
        text_to_si(&text, E)
            .filter(|v| v.is_finite())
            .map(Scaled)
            .ok_or_else(|| D::Error::custom(format!("invalid quantity {text}")))
    }
}
