//! Unit-suffixed physical quantities in configuration files.
//!
//! Every dimensional value is written as `"<number> <unit>"`, for example
//! `"400 nm"`, `"0.1 ns"` or `"10 MHz"`. Bare numbers are rejected except
//! for angles, which default to radians.

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantityError {
    #[error("expected \"<number> <unit>\" for a {dimension}, got {input:?}")]
    Malformed {
        dimension: &'static str,
        input: String,
    },
    #[error("unknown {dimension} unit {unit:?} (accepted: {accepted})")]
    UnknownUnit {
        dimension: &'static str,
        unit: String,
        accepted: String,
    },
    #[error("{dimension} {input:?} is not finite")]
    NotFinite {
        dimension: &'static str,
        input: String,
    },
}

/// A physical dimension together with its accepted units, scaled to the
/// internal base unit.
pub trait Dimension {
    const NAME: &'static str;
    const UNITS: &'static [(&'static str, f64)];
    const BARE_NUMBERS: bool = false;
}

pub fn parse<D: Dimension>(input: &str) -> Result<f64, QuantityError> {
    let text = input.trim();
    let malformed = || QuantityError::Malformed {
        dimension: D::NAME,
        input: input.to_string(),
    };
    let (number, unit) = match text.split_once(char::is_whitespace) {
        Some((n, u)) => (n, u.trim()),
        None if D::BARE_NUMBERS => (text, ""),
        None => return Err(malformed()),
    };
    let value: f64 = number.parse().map_err(|_| malformed())?;
    if !value.is_finite() {
        return Err(QuantityError::NotFinite {
            dimension: D::NAME,
            input: input.to_string(),
        });
    }
    if unit.is_empty() && D::BARE_NUMBERS {
        return Ok(value);
    }
    let scale = D::UNITS
        .iter()
        .find(|(name, _)| *name == unit)
        .map(|(_, s)| *s)
        .ok_or_else(|| QuantityError::UnknownUnit {
            dimension: D::NAME,
            unit: unit.to_string(),
            accepted: D::UNITS
                .iter()
                .map(|(n, _)| *n)
                .collect::<Vec<_>>()
                .join(", "),
        })?;
    Ok(value * scale)
}

macro_rules! quantity {
    ($(#[$doc:meta])* $name:ident, $label:literal, bare = $bare:literal, [$($unit:literal => $scale:expr),+ $(,)?]) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $name(pub f64);

        impl Dimension for $name {
            const NAME: &'static str = $label;
            const UNITS: &'static [(&'static str, f64)] = &[$(($unit, $scale)),+];
            const BARE_NUMBERS: bool = $bare;
        }

        impl std::str::FromStr for $name {
            type Err = QuantityError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                parse::<$name>(s).map($name)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<De: Deserializer<'de>>(d: De) -> Result<Self, De::Error> {
                d.deserialize_any(QuantityVisitor::<$name>(std::marker::PhantomData))
                    .map($name)
            }
        }
    };
}

struct QuantityVisitor<D>(std::marker::PhantomData<D>);

impl<D: Dimension> Visitor<'_> for QuantityVisitor<D> {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "a {} such as \"{} {}\"", D::NAME, 1, D::UNITS[0].0)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
        parse::<D>(v).map_err(E::custom)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
        if D::BARE_NUMBERS {
            Ok(v)
        } else {
            Err(E::custom(format!(
                "{} {v} needs a unit, e.g. \"{v} {}\"",
                D::NAME,
                D::UNITS[0].0
            )))
        }
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
        self.visit_f64(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
        self.visit_f64(v as f64)
    }
}

quantity!(
    /// Length in metres.
    Length, "length", bare = false,
    ["nm" => 1e-9, "um" => 1e-6, "µm" => 1e-6, "mm" => 1e-3, "cm" => 1e-2, "m" => 1.0, "km" => 1e3]
);

quantity!(
    /// Time in ns.
    Time, "time", bare = false,
    ["ns" => 1.0, "fs" => 1e-6, "ps" => 1e-3, "us" => 1e3, "µs" => 1e3, "ms" => 1e6, "s" => 1e9]
);

quantity!(
    /// Ordinary frequency in cycles per ns.
    Frequency, "frequency", bare = false,
    ["GHz" => 1.0, "Hz" => 1e-9, "kHz" => 1e-6, "MHz" => 1e-3, "THz" => 1e3, "/ns" => 1.0]
);

quantity!(
    /// Group-delay mismatch per crystal length in ns/mm.
    Dispersion, "group-velocity mismatch", bare = false,
    ["ns/mm" => 1.0, "ps/mm" => 1e-3, "fs/mm" => 1e-6]
);

quantity!(
    /// Phase in radians; bare numbers are radians.
    Angle, "angle", bare = true,
    ["rad" => 1.0, "mrad" => 1e-3, "deg" => PI / 180.0]
);

impl Length {
    pub fn nanometres(self) -> f64 {
        self.0 * 1e9
    }

    pub fn millimetres(self) -> f64 {
        self.0 * 1e3
    }
}
