//! JSON and CSV float formatting: every floating-point value this crate
//! writes is rendered as decimal with 17 significant digits, which
//! round-trips any finite `f64` exactly.

use serde::Serialize;
use std::io::{self, Write};

/// `serde_json` formatter that renders `f64` as `{:.16e}` — one leading
/// digit plus sixteen fractional digits of mantissa (17 significant
/// digits) in exponent notation, a valid JSON number.
pub struct SigDigits17;

impl serde_json::ser::Formatter for SigDigits17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes `value` as compact JSON with 17-significant-digit floats,
/// with a trailing newline. Deterministic: struct fields serialize in
/// declaration order.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits17);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("JSON serializer emits UTF-8"))
}

/// One float rendered exactly as the JSON serializer renders it, for CSV
/// cells.
pub fn f64_cell(value: f64) -> String {
    format!("{value:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_cells_round_trip_exactly() {
        for &v in &[
            0.0,
            -0.0,
            1.0,
            core::f64::consts::PI,
            -1.2345678901234567e-300,
            6.02214076e23,
            f64::MIN_POSITIVE,
            1.7976931348623157e308,
        ] {
            let cell = f64_cell(v);
            let back: f64 = cell.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "cell {cell} did not round-trip");
        }
    }

    #[test]
    fn json_floats_round_trip_exactly() {
        #[derive(serde::Serialize, serde::Deserialize)]
        struct Probe {
            a: f64,
            b: Vec<f64>,
        }
        let p = Probe { a: 0.1 + 0.2, b: vec![1.0 / 3.0, -2.718281828459045e-12] };
        let text = to_json_string(&p).unwrap();
        let back: Probe = serde_json::from_str(&text).unwrap();
        assert_eq!(back.a.to_bits(), p.a.to_bits());
        for (x, y) in back.b.iter().zip(&p.b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
