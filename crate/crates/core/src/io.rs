//! Deterministic JSON and CSV emitters.
//!
//! Every float is written with 17 significant digits in exponent form so that
//! identical inputs give byte-identical files.

use std::io::Write;

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};

use crate::error::Result;

/// JSON formatter writing floats as `{:.16e}`; non-finite values become `null`.
#[derive(Clone, Debug, Default)]
pub struct FixedPrecision {
    indent: usize,
    has_value: bool,
}

impl FixedPrecision {
    fn newline<W: ?Sized + Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(b"\n")?;
        for _ in 0..self.indent {
            w.write_all(b"  ")?;
        }
        Ok(())
    }
}

impl Formatter for FixedPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"[")
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"]")
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> std::io::Result<()> {
        self.has_value = true;
        Ok(())
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"{")
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        w.write_all(b": ")
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> std::io::Result<()> {
        self.has_value = true;
        Ok(())
    }
}

/// Serializes `value` as pretty JSON with fixed float formatting.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, FixedPrecision::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &std::path::Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

/// Formats one CSV float cell.
pub fn csv_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "nan".to_string()
    }
}

/// Writes a CSV table of floats with the given header.
pub fn write_csv(path: &std::path::Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    std::fs::write(path, csv_string(header, rows))?;
    Ok(())
}

pub fn csv_string(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| csv_float(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Sample {
        x: f64,
        v: Vec<f64>,
        name: &'static str,
        bad: f64,
    }

    #[test]
    fn floats_have_seventeen_digits() {
        let s = to_json_string(&Sample {
            x: 0.1,
            v: vec![1.0, -0.25],
            name: "a",
            bad: f64::NAN,
        })
        .unwrap();
        assert!(s.contains("1.0000000000000001e-1"));
        assert!(s.contains("-2.5000000000000000e-1"));
        assert!(s.contains("\"bad\": null"));
        let parsed: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(parsed["x"].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn csv_layout() {
        let s = csv_string(&["a", "b"], &[vec![1.0, 2.0]]);
        assert_eq!(s, "a,b\n1.0000000000000000e0,2.0000000000000000e0\n");
    }
}
