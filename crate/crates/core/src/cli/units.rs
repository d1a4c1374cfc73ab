//! Unit-annotated quantities for configuration files.
//!
//! Every physical value is written as `"<number> <unit>"`. Bare numbers
//! are rejected. Values serialize back in the canonical SI unit, so a
//! parse/serialize cycle is a fixed point after the first pass.

use std::fmt;
use std::marker::PhantomData;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// How a unit maps to the canonical one: `value · mul / div`.
pub struct Unit {
    pub symbol: &'static str,
    mul: f64,
    div: f64,
}

const fn unit(symbol: &'static str, mul: f64, div: f64) -> Unit {
    Unit { symbol, mul, div }
}

pub trait Dimension {
    const NAME: &'static str;
    /// The first entry is canonical.
    const UNITS: &'static [Unit];
}

macro_rules! dimension {
    ($ty:ident, $name:literal, [$($u:expr),+ $(,)?]) => {
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $ty;
        impl Dimension for $ty {
            const NAME: &'static str = $name;
            const UNITS: &'static [Unit] = &[$($u),+];
        }
    };
}

dimension!(FrequencyDim, "frequency", [
    unit("Hz", 1.0, 1.0),
    unit("kHz", 1e3, 1.0),
    unit("MHz", 1e6, 1.0),
    unit("GHz", 1e9, 1.0),
    unit("mHz", 1.0, 1e3),
]);
dimension!(TimeDim, "time", [
    unit("s", 1.0, 1.0),
    unit("ms", 1.0, 1e3),
    unit("us", 1.0, 1e6),
    unit("µs", 1.0, 1e6),
    unit("μs", 1.0, 1e6),
    unit("ns", 1.0, 1e9),
]);
dimension!(AngleDim, "angle", [
    unit("rad", 1.0, 1.0),
    unit("deg", std::f64::consts::PI, 180.0),
]);
dimension!(FieldDim, "magnetic field", [unit("T", 1.0, 1.0), unit("mT", 1.0, 1e3)]);
dimension!(GyroDim, "gyromagnetic ratio", [
    unit("Hz/T", 1.0, 1.0),
    unit("kHz/T", 1e3, 1.0),
    unit("MHz/T", 1e6, 1.0),
]);
dimension!(GradientDim, "field gradient", [unit("V/m^2", 1.0, 1.0), unit("V/m2", 1.0, 1.0)]);
dimension!(AreaDim, "quadrupole moment", [
    unit("m^2", 1.0, 1.0),
    unit("m2", 1.0, 1.0),
    unit("barn", 1.0, 1e28),
    unit("b", 1.0, 1e28),
]);

/// A value stored in the canonical unit of `D`.
pub struct Quantity<D> {
    pub value: f64,
    _dim: PhantomData<D>,
}

pub type Frequency = Quantity<FrequencyDim>;
pub type Time = Quantity<TimeDim>;
pub type Angle = Quantity<AngleDim>;
pub type Field = Quantity<FieldDim>;
pub type Gyro = Quantity<GyroDim>;
pub type Gradient = Quantity<GradientDim>;
pub type Area = Quantity<AreaDim>;

impl<D> Quantity<D> {
    pub const fn new(value: f64) -> Self {
        Quantity {
            value,
            _dim: PhantomData,
        }
    }
}

impl<D> Clone for Quantity<D> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<D> Copy for Quantity<D> {}

impl<D> PartialEq for Quantity<D> {
    fn eq(&self, other: &Self) -> bool {
        self.value.to_bits() == other.value.to_bits()
    }
}

impl<D: Dimension> fmt::Debug for Quantity<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl<D: Dimension> fmt::Display for Quantity<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", format_number(self.value), D::UNITS[0].symbol)
    }
}

/// Shortest round-tripping decimal, switching to exponent form for very
/// large or small magnitudes.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn parse_quantity<D: Dimension>(text: &str) -> Result<Quantity<D>, String> {
    let s = text.trim();
    let split = s
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E' | '_')))
        .unwrap_or(s.len());
    // "1e-3 s" and "2 ms": the mantissa may contain 'e', the unit may not
    // start with it, so back off when the number ends in a dangling 'e'.
    let (num, unit) = s.split_at(split);
    let (num, unit) = match num.strip_suffix(['e', 'E']) {
        Some(n) if !unit.trim().is_empty() => (n, &s[n.len()..]),
        _ => (num, unit),
    };
    let unit = unit.trim();
    let expected = || {
        D::UNITS
            .iter()
            .map(|u| u.symbol)
            .collect::<Vec<_>>()
            .join(", ")
    };
    if unit.is_empty() {
        return Err(format!(
            "{} `{s}` is missing a unit (expected one of {})",
            D::NAME,
            expected()
        ));
    }
    let value: f64 = num
        .replace('_', "")
        .parse()
        .map_err(|_| format!("cannot read a number from `{s}`"))?;
    if !value.is_finite() {
        return Err(format!("{} `{s}` is not finite", D::NAME));
    }
    let u = D::UNITS
        .iter()
        .find(|u| u.symbol == unit)
        .ok_or_else(|| format!("unknown {} unit `{unit}` (expected one of {})", D::NAME, expected()))?;
    let mut v = value;
    if u.mul != 1.0 {
        v *= u.mul;
    }
    if u.div != 1.0 {
        v /= u.div;
    }
    Ok(Quantity::new(v))
}

impl<D: Dimension> Serialize for Quantity<D> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

struct QuantityVisitor<D>(PhantomData<D>);

impl<D: Dimension> Visitor<'_> for QuantityVisitor<D> {
    type Value = Quantity<D>;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a {} with a unit, e.g. \"{} {}\"", D::NAME, 1, D::UNITS[0].symbol)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
        parse_quantity(v).map_err(E::custom)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
        Err(E::custom(format!(
            "{} {v} is missing a unit; write it as a string such as \"{v} {}\"",
            D::NAME,
            D::UNITS[0].symbol
        )))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
        self.visit_f64(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
        self.visit_f64(v as f64)
    }
}

impl<'de, D: Dimension> Deserialize<'de> for Quantity<D> {
    fn deserialize<De: Deserializer<'de>>(d: De) -> Result<Self, De::Error> {
        d.deserialize_any(QuantityVisitor(PhantomData))
    }
}

/// Human-readable duration for timelines: picks s, ms, µs or ns.
pub fn format_duration(t: f64) -> String {
    let a = t.abs();
    let (v, u) = if a == 0.0 {
        (0.0, "s")
    } else if a >= 1.0 {
        (t, "s")
    } else if a >= 1e-3 {
        (t * 1e3, "ms")
    } else if a >= 1e-6 {
        (t * 1e6, "µs")
    } else {
        (t * 1e9, "ns")
    };
    let r = (v * 1e6).round() / 1e6;
    format!("{r} {u}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_prefixed_units() {
        assert_eq!(parse_quantity::<FrequencyDim>("10 kHz").unwrap().value, 1e4);
        assert_eq!(parse_quantity::<FrequencyDim>("2.5MHz").unwrap().value, 2.5e6);
        assert_eq!(parse_quantity::<TimeDim>("1 ms").unwrap().value, 1e-3);
        assert_eq!(parse_quantity::<TimeDim>("500 µs").unwrap().value, 5e-4);
        assert_eq!(parse_quantity::<TimeDim>("1e-3 s").unwrap().value, 1e-3);
        assert_eq!(parse_quantity::<TimeDim>("2e3 ms").unwrap().value, 2.0);
        let deg = parse_quantity::<AngleDim>("90 deg").unwrap().value;
        assert!((deg - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn missing_or_wrong_unit_rejected() {
        assert!(parse_quantity::<FrequencyDim>("45").unwrap_err().contains("missing a unit"));
        assert!(parse_quantity::<FrequencyDim>("45 ms").unwrap_err().contains("unknown"));
        assert!(parse_quantity::<TimeDim>("abc s").is_err());
    }

    #[test]
    fn display_round_trips() {
        for v in [1e-3, 0.1e-3, 2560250.0, 3.14e-29, 0.0, 7.3150e6] {
            let q = Time::new(v);
            assert_eq!(parse_quantity::<TimeDim>(&q.to_string()).unwrap(), q);
        }
    }

    #[test]
    fn durations_pick_readable_units() {
        assert_eq!(format_duration(1e-3), "1 ms");
        assert_eq!(format_duration(5e-4), "500 µs");
        assert_eq!(format_duration(1.5), "1.5 s");
    }
}
