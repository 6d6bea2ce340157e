//! C99-style hexadecimal floating point text (`0x1.8p+1`), used where a
//! persisted value must reload bit for bit.

use crate::error::{Error, Result};

pub fn format(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let mant = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 && mant == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_bits == 0 {
        (0, -1022)
    } else {
        (1, exp_bits - 1023)
    };
    let mut digits = format!("{mant:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    if digits.is_empty() {
        format!("{sign}0x{lead}p{exp:+}")
    } else {
        format!("{sign}0x{lead}.{digits}p{exp:+}")
    }
}

pub fn parse(s: &str) -> Result<f64> {
    let bad = || Error::invalid(format!("malformed hexadecimal float `{s}`"));
    let t = s.trim();
    match t {
        "nan" => return Ok(f64::NAN),
        "inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let body = body
        .strip_prefix("0x")
        .or_else(|| body.strip_prefix("0X"))
        .ok_or_else(bad)?;
    let (mantissa, exp) = body.split_once(['p', 'P']).ok_or_else(bad)?;
    let exp: i64 = exp.parse().map_err(|_| bad())?;
    let (lead, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if lead != "0" && lead != "1" || frac.len() > 13 {
        return Err(bad());
    }
    let frac_bits = if frac.is_empty() {
        0
    } else {
        u64::from_str_radix(frac, 16).map_err(|_| bad())? << (4 * (13 - frac.len()))
    };
    let sign_bit = if neg { 1u64 << 63 } else { 0 };
    let bits = match lead {
        "0" if frac_bits == 0 => 0,
        "0" if exp == -1022 => frac_bits,
        "1" if (-1022..=1023).contains(&exp) => (((exp + 1023) as u64) << 52) | frac_bits,
        _ => return Err(bad()),
    };
    Ok(f64::from_bits(sign_bit | bits))
}

/// Serde adapters: `#[serde(with = "crate::hexfloat::serde_f64")]`.
pub mod serde_f64 {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format(*x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        super::parse(&s).map_err(D::Error::custom)
    }
}

pub mod serde_vec {
    use serde::{de::Error as _, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            seq.serialize_element(&super::format(*x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| super::parse(s).map_err(D::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_strings() {
        assert_eq!(format(1.0), "0x1p+0");
        assert_eq!(format(3.0), "0x1.8p+1");
        assert_eq!(format(-0.1), "-0x1.999999999999ap-4");
        assert_eq!(format(0.0), "0x0p+0");
        assert_eq!(format(f64::MIN_POSITIVE / 4.0), "0x0.4p-1022");
        assert_eq!(parse("0x1.8p+1").unwrap(), 3.0);
        assert!(parse("1.5").is_err());
        assert!(parse("0x2p+0").is_err());
    }

    proptest! {
        #[test]
        fn bitwise_round_trip(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(!x.is_nan());
            prop_assert_eq!(parse(&format(x)).unwrap().to_bits(), bits);
        }
    }
}
