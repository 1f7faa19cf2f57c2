//! Exact decimal handling.
//!
//! Token averages, run scores and table values are read as decimal text and
//! kept as arbitrary-precision rationals until they are formatted for output.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

pub type Rational = BigRational;

/// Parses decimal text such as `152.12`, `-3`, `.557` or `1.5e-3` exactly.
pub fn parse_decimal(text: &str) -> Option<Rational> {
    let s = text.trim();
    let (neg, s) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut numer = BigInt::from_str(&digits).ok()?;
    if neg {
        numer = -numer;
    }
    let scale = exp - frac_part.len() as i32;
    if scale.unsigned_abs() > 4096 {
        return None;
    }
    let pow = BigInt::from(10u32).pow(scale.unsigned_abs());
    Some(if scale >= 0 {
        Rational::from_integer(numer * pow)
    } else {
        Rational::new(numer, pow)
    })
}

pub fn ratio(numer: impl Into<BigInt>, denom: impl Into<BigInt>) -> Rational {
    Rational::new(numer.into(), denom.into())
}

pub fn from_u128(v: u128) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// Rounds half away from zero; for the non-negative values used here this is
/// round-half-up.
pub fn round_half_up(v: &Rational) -> BigInt {
    let half = ratio(1, 2);
    if v.is_negative() {
        -(-v + half).floor().to_integer()
    } else {
        (v + half).floor().to_integer()
    }
}

pub fn round_half_up_u64(v: &Rational) -> Option<u64> {
    round_half_up(v).to_u64()
}

/// The `index`-th share when a fractional per-call average is spread over
/// consecutive calls: the first `n` shares always sum to `round(n * avg)`.
pub fn spread(avg: &Rational, index: u64) -> u64 {
    if let (Some(p), Some(q)) = (avg.numer().to_u128(), avg.denom().to_u128()) {
        let at = |k: u64| {
            (k as u128)
                .checked_mul(2 * p)
                .and_then(|v| v.checked_add(q))
                .map(|v| v / (2 * q))
        };
        if let (Some(hi), Some(lo)) = (at(index + 1), at(index)) {
            return u64::try_from(hi - lo).unwrap_or(0);
        }
    }
    let hi = round_half_up(&(avg * Rational::from_integer((index + 1).into())));
    let lo = round_half_up(&(avg * Rational::from_integer(index.into())));
    (hi - lo).to_u64().unwrap_or(0)
}

pub fn to_f64(v: &Rational) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

pub fn from_f64(v: f64) -> Option<Rational> {
    // Shortest round-trip text keeps 0.557 as 557/1000 rather than its binary expansion.
    parse_decimal(&format!("{v}"))
}

/// Formats with a fixed number of decimals, rounding half-up.
pub fn format_fixed(v: &Rational, decimals: u32) -> String {
    let scale = BigInt::from(10u32).pow(decimals);
    let scaled = round_half_up(&(v * Rational::from_integer(scale.clone())));
    let neg = scaled.is_negative();
    let abs = scaled.abs();
    let int = &abs / &scale;
    let frac = &abs % &scale;
    let sign = if neg { "-" } else { "" };
    if decimals == 0 {
        format!("{sign}{int}")
    } else {
        format!(
            "{sign}{int}.{:0>width$}",
            frac.to_string(),
            width = decimals as usize
        )
    }
}

/// Fixed decimals with trailing zeros trimmed, keeping at least one decimal.
pub fn format_trimmed(v: &Rational, max_decimals: u32) -> String {
    let s = format_fixed(v, max_decimals);
    match s.split_once('.') {
        Some((int, frac)) => {
            let frac = frac.trim_end_matches('0');
            let frac = if frac.is_empty() { "0" } else { frac };
            format!("{int}.{frac}")
        }
        None => format!("{s}.0"),
    }
}

/// Rounds to `digits` significant digits, trimmed to at least one decimal.
pub fn format_significant(v: &Rational, digits: u32) -> String {
    if v.is_zero() {
        return "0.0".to_string();
    }
    let abs = v.abs();
    let mut magnitude: i32 = 0;
    let ten = Rational::from_integer(10.into());
    let mut probe = abs.clone();
    while probe >= ten {
        probe /= &ten;
        magnitude += 1;
    }
    while probe < Rational::one() {
        probe *= &ten;
        magnitude -= 1;
    }
    let decimals = (digits as i32 - 1 - magnitude).max(0) as u32;
    trim_to(v, decimals)
}

fn trim_to(v: &Rational, decimals: u32) -> String {
    if decimals == 0 {
        format!("{}.0", format_fixed(v, 0))
    } else {
        format_trimmed(v, decimals)
    }
}

/// A rational that deserializes from a TOML/JSON integer, float or decimal
/// string and serializes back as decimal text.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Decimal(pub Rational);

impl Decimal {
    pub fn zero() -> Self {
        Decimal(Rational::zero())
    }
}

impl From<u64> for Decimal {
    fn from(v: u64) -> Self {
        Decimal(Rational::from_integer(v.into()))
    }
}

impl FromStr for Decimal {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_decimal(s)
            .map(Decimal)
            .ok_or_else(|| format!("'{s}' is not a decimal number"))
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.to_integer())
        } else {
            // Terminating decimals print exactly; anything else falls back to 12 places.
            let mut denom = self.0.denom().clone();
            let mut places = 0u32;
            for p in [2u32, 5] {
                while (&denom % p).is_zero() {
                    denom /= p;
                }
            }
            if denom.is_one() {
                let d = self.0.denom().clone();
                while !(BigInt::from(10u32).pow(places) % &d).is_zero() {
                    places += 1;
                }
                f.write_str(&format_fixed(&self.0, places))
            } else {
                f.write_str(&format_fixed(&self.0, 12))
            }
        }
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = Decimal;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal number or decimal string")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Decimal, E> {
                Ok(Decimal::from(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Decimal, E> {
                Ok(Decimal(Rational::from_integer(v.into())))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Decimal, E> {
                from_f64(v)
                    .map(Decimal)
                    .ok_or_else(|| E::custom(format!("{v} is not finite")))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Decimal, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}
