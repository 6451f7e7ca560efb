//! File formats: quaternion datasets as CSV (`w,x,y,z` header) or JSON
//! lines, and the 12-significant-digit number formatting used for text
//! output.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, WriterBuilder};

use crate::error::{BinghamError, Result};
use crate::quaternion::{Quaternion, UnitQuaternion};

const HEADER: [&str; 4] = ["w", "x", "y", "z"];

/// Stored quaternions may drift from unit norm by this much (text rounding)
/// before they are rejected.
pub const DATASET_NORM_TOL: f64 = 1e-6;

/// `x` with 12 significant digits, trailing zeros removed.
pub fn fmt12(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Comma-separated [`fmt12`] values.
pub fn fmt12_list<'a>(values: impl IntoIterator<Item = &'a f64>) -> String {
    values.into_iter().map(|v| fmt12(*v)).collect::<Vec<_>>().join(",")
}

/// Parses `"a,b,c"` into exactly `n` finite numbers.
pub fn parse_list(text: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .enumerate()
        .map(|(k, s)| {
            s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| BinghamError::Parse {
                record: what.into(),
                field: format!("entry {k}"),
                message: format!("`{}` is not a finite number", s.trim()),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != n {
        return Err(BinghamError::Parse {
            record: what.into(),
            field: "length".into(),
            message: format!("expected {n} comma-separated values, got {}", values.len()),
        });
    }
    Ok(values)
}

fn to_unit(components: [f64; 4], record: &str) -> Result<UnitQuaternion> {
    let q = Quaternion::from(components);
    let n = q.norm();
    if !n.is_finite() || (n - 1.0).abs() > DATASET_NORM_TOL {
        return Err(BinghamError::Parse {
            record: record.into(),
            field: "w,x,y,z".into(),
            message: format!("not a unit quaternion (norm {n})"),
        });
    }
    UnitQuaternion::coerce(q)
}

/// Reads a `w,x,y,z` CSV dataset.
pub fn read_quaternions_csv<R: Read>(reader: R) -> Result<Vec<UnitQuaternion>> {
    let mut rdr = ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| BinghamError::Parse {
        record: "header".into(),
        field: "w,x,y,z".into(),
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(BinghamError::Parse {
            record: "header".into(),
            field: header.iter().collect::<Vec<_>>().join(","),
            message: "expected columns w,x,y,z".into(),
        });
    }
    let mut out = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let record = format!("record {} (line {})", k + 1, k + 2);
        let row = row.map_err(|e| BinghamError::Parse {
            record: record.clone(),
            field: "w,x,y,z".into(),
            message: e.to_string(),
        })?;
        let mut c = [0.0; 4];
        for (i, name) in HEADER.iter().enumerate() {
            let raw = row.get(i).unwrap_or("");
            c[i] = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| BinghamError::Parse {
                    record: record.clone(),
                    field: (*name).into(),
                    message: format!("`{raw}` is not a finite number"),
                })?;
        }
        out.push(to_unit(c, &record)?);
    }
    Ok(out)
}

/// Reads one `[w, x, y, z]` JSON array per non-blank line.
pub fn read_quaternions_jsonl<R: Read>(reader: R) -> Result<Vec<UnitQuaternion>> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = format!("line {}", k + 1);
        let c: [f64; 4] = serde_json::from_str(&line).map_err(|e| BinghamError::Parse {
            record: record.clone(),
            field: "w,x,y,z".into(),
            message: e.to_string(),
        })?;
        out.push(to_unit(c, &record)?);
    }
    Ok(out)
}

/// Reads a dataset, choosing JSON lines for `.jsonl`/`.json` and CSV otherwise.
pub fn read_quaternions(path: &Path) -> Result<Vec<UnitQuaternion>> {
    let file = File::open(path).map_err(|e| BinghamError::Io(format!("{}: {e}", path.display())))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => read_quaternions_jsonl(file),
        _ => read_quaternions_csv(file),
    }
}

pub fn write_quaternions_csv<W: Write>(writer: W, qs: &[UnitQuaternion]) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(writer);
    let io = |e: csv::Error| BinghamError::Io(e.to_string());
    w.write_record(HEADER).map_err(io)?;
    for q in qs {
        w.write_record(q.to_array().iter().map(|v| fmt12(*v))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_quaternions_jsonl<W: Write>(mut writer: W, qs: &[UnitQuaternion]) -> Result<()> {
    for q in qs {
        let line = serde_json::to_string(q).expect("quaternions serialize");
        writeln!(writer, "{line}")?;
    }
    Ok(())
}
