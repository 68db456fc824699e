//! Numbers in JSON inputs: plain numbers or exact fraction strings `"p/q"`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Parses `"p/q"`, `"p"` or a decimal string.
///
/// Fractions with integer numerator and denominator are converted with a
/// single correctly rounded division, so dyadic values such as `"3/1024"`
/// are represented exactly.
pub fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::BadNumber(s.to_string());
    let value = match s.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: i64 = q.trim().parse().map_err(|_| bad())?;
            if q == 0 {
                return Err(bad());
            }
            const EXACT: i64 = 1 << 53;
            if p.abs() > EXACT || q.abs() > EXACT {
                return Err(bad());
            }
            p as f64 / q as f64
        }
        None => s.parse::<f64>().map_err(|_| bad())?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

/// A real read from JSON as a number or an exact fraction string.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Real(v)),
            Raw::Str(s) => parse_number(&s).map(Real).map_err(serde::de::Error::custom),
        }
    }
}

impl From<Real> for f64 {
    fn from(r: Real) -> f64 {
        r.0
    }
}

/// Parses an exponent: a number as in [`parse_number`] or `inf`.
pub fn parse_exponent(s: &str) -> Result<f64> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        other => parse_number(other),
    }
}

/// Serde adapter for exponents, writing `p = inf` as the string `"inf"`.
pub mod exponent {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if p.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*p)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) => super::parse_exponent(&s).map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_fractions_are_exact() {
        assert_eq!(parse_number("1/4").unwrap(), 0.25);
        assert_eq!(parse_number("-3/1024").unwrap(), -3.0 / 1024.0);
        assert_eq!(parse_number(" 65/64 ").unwrap(), 1.015625);
        assert_eq!(parse_number("7").unwrap(), 7.0);
        assert_eq!(parse_number("0.5").unwrap(), 0.5);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_number("1/0").is_err());
        assert!(parse_number("a/b").is_err());
        assert!(parse_number("inf").is_err());
        assert_eq!(parse_exponent("inf").unwrap(), f64::INFINITY);
        assert_eq!(parse_exponent("3/2").unwrap(), 1.5);
    }

    #[test]
    fn real_from_json() {
        let v: Vec<Real> = serde_json::from_str(r#"[1, "1/8", 0.5]"#).unwrap();
        assert_eq!(v, vec![Real(1.0), Real(0.125), Real(0.5)]);
    }
}
