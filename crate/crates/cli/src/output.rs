//! Fixed-precision JSON and CSV output.

use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;

pub const JSON_DIGITS: usize = 12;
pub const CSV_DIGITS: usize = 9;

/// `x` rounded to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(num) if num.is_f64() => {
            if let Some(r) = num
                .as_f64()
                .and_then(|x| serde_json::Number::from_f64(round_sig(x, JSON_DIGITS)))
            {
                *num = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to 12 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

/// CSV cell for a float: 9 significant digits, empty for missing values.
pub fn csv_float(x: Option<f64>) -> String {
    match x {
        Some(x) => round_sig(x, CSV_DIGITS).to_string(),
        None => String::new(),
    }
}

pub fn write_text(output: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Writes CSV records. To a file they are appended, with the header only
/// when the file is new or empty; to stdout the header is always written.
pub fn write_csv(
    output: Option<&Path>,
    header: &[&str],
    rows: &[Vec<String>],
) -> anyhow::Result<()> {
    let mut buf = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    let fresh = match output {
        Some(path) => std::fs::metadata(path)
            .map(|m| m.len() == 0)
            .unwrap_or(true),
        None => true,
    };
    if fresh {
        buf.write_record(header)?;
    }
    for row in rows {
        buf.write_record(row)?;
    }
    let bytes = buf
        .into_inner()
        .map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
    match output {
        Some(path) => {
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .with_context(|| format!("opening {}", path.display()))?;
            file.write_all(&bytes)?;
        }
        None => io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_to_significant_digits() {
        assert_eq!(round_sig(0.1 + 0.2, 12), 0.3);
        assert_eq!(round_sig(123_456_789_012_345.0, 12), 123_456_789_012_000.0);
        assert_eq!(round_sig(-2.0 / 3.0, 9), -0.666666667);
        assert_eq!(round_sig(0.0, 9), 0.0);
    }

    #[test]
    fn json_floats_are_rounded_and_integers_kept() {
        #[derive(Serialize)]
        struct S {
            x: f64,
            n: u64,
            v: Vec<f64>,
        }
        let text = to_json(&S {
            x: 1.0 / 3.0,
            n: 40_960_000,
            v: vec![0.1 + 0.2],
        })
        .unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["x"].as_f64(), Some(0.333333333333));
        assert_eq!(v["n"].as_u64(), Some(40_960_000));
        assert_eq!(v["v"][0].as_f64(), Some(0.3));
    }

    #[test]
    fn csv_appends_header_once() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let row = vec![vec!["1".to_string(), csv_float(Some(2.0 / 3.0))]];
        write_csv(Some(&path), &["a", "b"], &row).unwrap();
        write_csv(Some(&path), &["a", "b"], &row).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n1,0.666666667\n1,0.666666667\n");
    }
}
