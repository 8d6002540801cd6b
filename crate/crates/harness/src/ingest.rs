//! Dense matrix files: CSV and a raw little-endian `f64` format.
//!
//! The raw layout is a 16-byte header, the ASCII magic `SAMP`, `u32` rows,
//! `u32` cols and four zero bytes, followed by `rows * cols` row-major `f64`s.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::config::MatrixFormat;
use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 4] = b"SAMP";
pub const HEADER_BYTES: usize = 16;

fn parse_err(offset: u64, message: impl Into<String>) -> HarnessError {
    HarnessError::Parse { offset, message: message.into() }
}

pub fn ingest_matrix(path: &Path, format: MatrixFormat) -> Result<Array2<f64>> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    match format {
        MatrixFormat::Csv => parse_csv(&bytes),
        MatrixFormat::RawF64 => parse_raw(&bytes),
    }
}

pub fn parse_raw(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < HEADER_BYTES {
        return Err(parse_err(
            bytes.len() as u64,
            format!("header needs {HEADER_BYTES} bytes, file has {}", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(parse_err(0, format!("bad magic {:?}, expected \"SAMP\"", String::from_utf8_lossy(&bytes[..4]))));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (rows, cols) = (word(4) as usize, word(8) as usize);
    if word(12) != 0 {
        return Err(parse_err(12, "reserved header bytes must be zero"));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(HEADER_BYTES))
        .ok_or_else(|| parse_err(4, format!("{rows} x {cols} overflows")))?;
    if bytes.len() != expected {
        return Err(parse_err(
            bytes.len().min(expected) as u64,
            format!("{rows} x {cols} matrix needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let data = bytes[HEADER_BYTES..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}

pub fn encode_raw(m: &Array2<f64>) -> Result<Vec<u8>> {
    let (rows, cols) = m.dim();
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| HarnessError::Config(format!("{what} = {v} does not fit the raw header")))
    };
    let mut out = Vec::with_capacity(HEADER_BYTES + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&to_u32(rows, "rows")?.to_le_bytes());
    out.extend_from_slice(&to_u32(cols, "cols")?.to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn write_raw(path: &Path, m: &Array2<f64>) -> Result<()> {
    let bytes = encode_raw(m)?;
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Comma-separated rows; a first line that does not parse as numbers is a
/// header.
pub fn parse_csv(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(bytes);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    let mut record = csv::StringRecord::new();
    let mut first = true;
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let offset = e.position().map(|p| p.byte()).unwrap_or(0);
            parse_err(offset, e.to_string())
        })?;
        if !more {
            break;
        }
        let offset = record.position().map(|p| p.byte()).unwrap_or(0);
        let parsed: std::result::Result<Vec<f64>, usize> =
            record.iter().enumerate().map(|(i, f)| f.parse::<f64>().map_err(|_| i)).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if first => {
                first = false;
                continue;
            }
            Err(i) => {
                return Err(parse_err(offset, format!("record {}: field {} {:?} is not a number", rows + 1, i + 1, &record[i])));
            }
        };
        first = false;
        match cols {
            None => cols = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(parse_err(offset, format!("record {} has {} fields, expected {c}", rows + 1, values.len())));
            }
            _ => {}
        }
        data.extend(values);
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row lengths checked"))
}

/// Shortest round-trip decimal representation.
pub fn write_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?);
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(file, "{}", line.join(",")).map_err(|e| HarnessError::io(path, e))?;
    }
    file.flush().map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn small_csv() {
        assert_eq!(parse_csv(b"1,2\n3,4").unwrap(), array![[1.0, 2.0], [3.0, 4.0]]);
    }

    #[test]
    fn csv_header_is_skipped() {
        assert_eq!(parse_csv(b"a,b\n1,2\n").unwrap(), array![[1.0, 2.0]]);
    }

    #[test]
    fn csv_ragged_row_reports_offset() {
        match parse_csv(b"1,2\n3,4,5\n") {
            Err(HarnessError::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_bad_number_reports_offset() {
        match parse_csv(b"1,2\n3,x\n") {
            Err(HarnessError::Parse { offset, message }) => {
                assert_eq!(offset, 4);
                assert!(message.contains("\"x\""), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn raw_header_layout() {
        let b = encode_raw(&array![[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(&b[..16], b"SAMP\x01\x00\x00\x00\x03\x00\x00\x00\x00\x00\x00\x00");
        assert_eq!(b.len(), 16 + 24);
        assert_eq!(&b[16..24], &1.0f64.to_le_bytes());
    }

    #[test]
    fn raw_truncated_names_byte_counts() {
        let b = encode_raw(&array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        match parse_raw(&b[..40]) {
            Err(HarnessError::Parse { offset, message }) => {
                assert_eq!(offset, 40);
                assert!(message.contains("48") && message.contains("40"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_raw(b"SAM"), Err(HarnessError::Parse { offset: 3, .. })));
        assert!(matches!(parse_raw(b"XAMP\0\0\0\0\0\0\0\0\0\0\0\0"), Err(HarnessError::Parse { offset: 0, .. })));
    }
}
