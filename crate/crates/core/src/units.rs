//! Unit-suffixed quantities and number formatting.
//!
//! Canonical units are bits per second, seconds and bytes. Decimal prefixes
//! only (`1 KB = 1000 B`, `1 Mbps = 10^6 bit/s`).

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("cannot parse {kind} from {input:?}")]
pub struct UnitError {
    pub kind: &'static str,
    pub input: String,
}

fn split_number(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E')
                    && s[i + 1..]
                        .chars()
                        .next()
                        .is_some_and(|n| n.is_ascii_digit() || n == '-' || n == '+')))
        })
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let value: f64 = s[..end].parse().ok()?;
    Some((value, s[end..].trim()))
}

fn parse_with(kind: &'static str, s: &str, scale: impl Fn(&str) -> Option<f64>) -> Result<f64, UnitError> {
    let err = || UnitError {
        kind,
        input: s.to_string(),
    };
    let (value, suffix) = split_number(s).ok_or_else(err)?;
    let factor = scale(suffix).ok_or_else(err)?;
    let v = value * factor;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(err())
    }
}

/// Parses a rate such as `10Mbps`, `24 kbps` or `5e6` into bits per second.
pub fn parse_rate(s: &str) -> Result<f64, UnitError> {
    parse_with("rate", s, |suffix| {
        Some(match suffix.to_ascii_lowercase().as_str() {
            "" | "bps" | "b/s" | "bit/s" => 1.0,
            "k" | "kbps" | "kbit/s" => 1e3,
            "m" | "mbps" | "mbit/s" => 1e6,
            "g" | "gbps" | "gbit/s" => 1e9,
            _ => return None,
        })
    })
}

/// Parses a duration such as `20ms`, `60s` or `0.278` into seconds.
pub fn parse_duration(s: &str) -> Result<f64, UnitError> {
    parse_with("duration", s, |suffix| {
        Some(match suffix {
            "" | "s" => 1.0,
            "ms" => 1e-3,
            "us" | "µs" => 1e-6,
            "ns" => 1e-9,
            "min" => 60.0,
            _ => return None,
        })
    })
}

/// Parses a duration where a bare number means milliseconds.
pub fn parse_millis(s: &str) -> Result<f64, UnitError> {
    match split_number(s) {
        Some((v, "")) => Ok(v),
        _ => parse_duration(s).map(|secs| secs * 1e3),
    }
}

/// Parses a byte count such as `1500`, `1500B`, `32KB` or `1.25GB`.
pub fn parse_bytes(s: &str) -> Result<f64, UnitError> {
    parse_with("size", s, |suffix| {
        Some(match suffix {
            "" | "B" => 1.0,
            "KB" | "kB" => 1e3,
            "MB" => 1e6,
            "GB" => 1e9,
            _ => return None,
        })
    })
}

/// Formats a number in fixed decimal notation with six significant digits.
pub fn fmt6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can carry into a new digit (9.999995 -> 10.00000)
    let rounded: f64 = s.parse().unwrap_or(x);
    let new_mag = rounded.abs().log10().floor() as i32;
    if rounded != 0.0 && new_mag > magnitude && decimals > 0 {
        let decimals = decimals - 1;
        format!("{x:.decimals$}")
    } else {
        s
    }
}

fn sig3(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (2 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn pretty(x: f64, units: &[(f64, &str)]) -> String {
    let (scale, name) = units
        .iter()
        .rev()
        .find(|(scale, _)| x.abs() >= *scale)
        .copied()
        .unwrap_or(units[0]);
    format!("{} {}", sig3(x / scale), name)
}

/// Human-readable rate with three significant digits, e.g. `7.97 Mbps`.
pub fn pretty_rate(bits_per_sec: f64) -> String {
    pretty(
        bits_per_sec,
        &[(1.0, "bps"), (1e3, "kbps"), (1e6, "Mbps"), (1e9, "Gbps")],
    )
}

/// Human-readable size with three significant digits, e.g. `125 MB`.
pub fn pretty_bytes(bytes: f64) -> String {
    pretty(bytes, &[(1.0, "B"), (1e3, "KB"), (1e6, "MB"), (1e9, "GB")])
}

struct QuantityVisitor {
    kind: &'static str,
    parse: fn(&str) -> Result<f64, UnitError>,
}

impl Visitor<'_> for QuantityVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "a {} as a number or a string with a unit suffix", self.kind)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
        (self.parse)(v).map_err(E::custom)
    }
}

macro_rules! quantity_serde {
    ($name:ident, $kind:literal, $parse:path) => {
        pub mod $name {
            use super::*;

            pub fn serialize<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_f64(*v)
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                d.deserialize_any(QuantityVisitor {
                    kind: $kind,
                    parse: $parse,
                })
            }
        }
    };
}

quantity_serde!(rate, "rate", parse_rate);
quantity_serde!(seconds, "duration", parse_duration);

pub mod bytes {
    use super::*;

    pub fn serialize<S: serde::Serializer>(v: &u32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u32(*v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
        let v = d.deserialize_any(QuantityVisitor {
            kind: "size",
            parse: parse_bytes,
        })?;
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(de::Error::custom(format!("{v} is not a whole byte count")));
        }
        Ok(v as u32)
    }
}

pub mod opt_seconds {
    use super::*;

    pub fn serialize<S: serde::Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.serialize_some(v),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        seconds::deserialize(d).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates() {
        assert_eq!(parse_rate("10Mbps").unwrap(), 10e6);
        assert_eq!(parse_rate("24 kbps").unwrap(), 24e3);
        assert_eq!(parse_rate("40Gbps").unwrap(), 40e9);
        assert_eq!(parse_rate("3.5Mbps").unwrap(), 3.5e6);
        assert_eq!(parse_rate("5e6").unwrap(), 5e6);
        assert!(parse_rate("10 furlongs").is_err());
        assert!(parse_rate("").is_err());
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("250ms").unwrap(), 0.25);
        assert_eq!(parse_duration("60s").unwrap(), 60.0);
        assert_eq!(parse_duration("0.278").unwrap(), 0.278);
        assert_eq!(parse_millis("116").unwrap(), 116.0);
        assert_eq!(parse_millis("0.2s").unwrap(), 200.0);
    }

    #[test]
    fn sizes() {
        assert_eq!(parse_bytes("1500").unwrap(), 1500.0);
        assert_eq!(parse_bytes("1500B").unwrap(), 1500.0);
        assert_eq!(parse_bytes("32KB").unwrap(), 32_000.0);
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt6(0.0211), "0.0211000");
        assert_eq!(fmt6(3.0), "3.00000");
        assert_eq!(fmt6(125_000_000.0), "125000000");
        assert_eq!(fmt6(-5e6), "-5000000");
        assert_eq!(fmt6(9.999_999), "10.0000");
        assert_eq!(fmt6(0.0), "0.00000");
    }

    #[test]
    fn pretty_units() {
        assert_eq!(pretty_rate(7_973_404.0), "7.97 Mbps");
        assert_eq!(pretty_rate(24_000.0), "24 kbps");
        assert_eq!(pretty_bytes(1.25e9), "1.25 GB");
        assert_eq!(pretty_bytes(1.25e8), "125 MB");
    }
}
