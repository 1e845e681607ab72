//! `RRGGBB` color strings, used by the config file and the CLI.

use serde::{Deserialize, Deserializer, Serializer};

use crate::error::{Error, Result};
use crate::raster::Rgb;

pub fn parse(s: &str) -> Result<Rgb> {
    let s = s.strip_prefix('#').unwrap_or(s);
    if s.len() != 6 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::Invalid(format!("color `{s}` is not RRGGBB hex")));
    }
    let channel = |i: usize| u8::from_str_radix(&s[i..i + 2], 16).expect("validated hex");
    Ok([channel(0), channel(2), channel(4)])
}

pub fn format(c: Rgb) -> String {
    format!("{:02X}{:02X}{:02X}", c[0], c[1], c[2])
}

pub fn serialize<S: Serializer>(c: &Rgb, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format(*c))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rgb, D::Error> {
    let s = String::deserialize(d)?;
    parse(&s).map_err(serde::de::Error::custom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        assert_eq!(parse("FF8000").unwrap(), [255, 128, 0]);
        assert_eq!(parse("#0a0B0c").unwrap(), [10, 11, 12]);
        assert_eq!(format([10, 11, 12]), "0A0B0C");
        assert!(parse("FFF").is_err());
        assert!(parse("GG0000").is_err());
    }
}
