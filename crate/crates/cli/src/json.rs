//! Canonical JSON output and the `[re, im]` / row-major matrix conventions.
//!
//! Every `f64` is written with 17 significant digits in exponent form, so a
//! parsed document re-serializes to the same bytes.

use std::io;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::{json, Value};

use opkernel::{CMatrix, CVector};

/// `serde_json` formatter printing floats as `{:.16e}` and everything else compactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct CanonicalFormatter;

impl Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", format_f64(value))
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn format_f64(value: f64) -> String {
    // -0.0 prints as 0; the sign of zero carries no information here
    let v = if value == 0.0 { 0.0 } else { value };
    format!("{v:.16e}")
}

/// Serializes with [`CanonicalFormatter`] and a trailing newline.
pub fn to_canonical_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFormatter);
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    out.push(b'\n');
    out
}

/// Finite floats become numbers; anything else becomes `null`.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

pub fn complex(z: Complex64) -> Value {
    json!([num(z.re), num(z.im)])
}

pub fn matrix(m: &CMatrix) -> Value {
    let mut data = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            data.push(complex(m[(i, j)]));
        }
    }
    json!({ "rows": m.nrows(), "cols": m.ncols(), "data": data })
}

pub fn real_matrix(m: &DMatrix<f64>) -> Value {
    let mut data = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            data.push(num(m[(i, j)]));
        }
    }
    json!({ "rows": m.nrows(), "cols": m.ncols(), "data": data })
}

pub fn vector(v: &CVector) -> Value {
    Value::Array(v.iter().map(|z| complex(*z)).collect())
}

pub fn reals(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}
