//! Shared serialization helpers: JSON with full-precision floats and content
//! hashing.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::Result;

/// Formats every float with 17 significant digits (`{:.16e}`), which is
/// enough to round-trip any `f64` exactly.
pub fn format_f64(value: f64) -> String {
    if value.is_finite() {
        format!("{value:.16e}")
    } else {
        // JSON has no representation for these; callers validate earlier.
        "null".to_string()
    }
}

macro_rules! full_precision_floats {
    ($name:ident, $inner:ty) => {
        struct $name($inner);

        impl Formatter for $name {
            fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
                w.write_all(format_f64(v).as_bytes())
            }
            fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> std::io::Result<()> {
                w.write_all(format_f64(v as f64).as_bytes())
            }
            fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
                self.0.begin_array(w)
            }
            fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
                self.0.end_array(w)
            }
            fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
                self.0.begin_array_value(w, first)
            }
            fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
                self.0.end_array_value(w)
            }
            fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
                self.0.begin_object(w)
            }
            fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
                self.0.end_object(w)
            }
            fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
                self.0.begin_object_key(w, first)
            }
            fn end_object_key<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
                self.0.end_object_key(w)
            }
            fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
                self.0.begin_object_value(w)
            }
            fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
                self.0.end_object_value(w)
            }
        }
    };
}

full_precision_floats!(CompactFull, CompactFormatter);
full_precision_floats!(PrettyFull, PrettyFormatter<'static>);

/// Single-line JSON with 17-significant-digit floats.
pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, CompactFull(CompactFormatter));
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Indented JSON with 17-significant-digit floats.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PrettyFull(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, to_json_pretty(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_seventeen_digits() {
        let values: Vec<f64> = vec![0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0, -0.0];
        let line = to_json_line(&values).unwrap();
        assert!(line.contains("1.0000000000000001e-1"));
        let back: Vec<f64> = serde_json::from_str(&line).unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
