//! The `RMX1` binary matrix container.
//!
//! ```text
//! offset  size  field
//!      0     4  magic   b"RMX1"
//!      4     4  version u32 LE (= 1)
//!      8     1  dtype   u8 (1 = f64)
//!      9     8  rows    u64 LE
//!     17     8  cols    u64 LE
//!     25   r*c*8 payload, row-major f64 LE
//! ```
//!
//! The same byte layout is embedded in worker frames.

use std::fs;
use std::path::Path;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"RMX1";
pub const VERSION: u32 = 1;
pub const DTYPE_F64: u8 = 1;
pub const HEADER_LEN: usize = 25;

pub fn encoded_len(m: MatRef<'_, f64>) -> usize {
    HEADER_LEN + m.nrows() * m.ncols() * 8
}

pub fn encode_matrix(m: MatRef<'_, f64>, out: &mut Vec<u8>) {
    out.reserve(encoded_len(m));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F64);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

fn u64_at(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

/// Parses the header, returning `(rows, cols, payload_len)`.
fn parse_header(bytes: &[u8]) -> Result<(usize, usize, usize)> {
    if bytes.len() < 4 {
        return Err(Error::Format {
            field: "magic",
            detail: format!("input is {} bytes, too short for the magic number", bytes.len()),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format { field: "magic", detail: format!("expected RMX1, found {:?}", &bytes[..4]) });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format {
            field: "header",
            detail: format!("input is {} bytes, header needs {HEADER_LEN}", bytes.len()),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format { field: "version", detail: format!("unsupported version {version}") });
    }
    if bytes[8] != DTYPE_F64 {
        return Err(Error::Format { field: "dtype", detail: format!("unsupported dtype code {}", bytes[8]) });
    }
    let rows = u64_at(bytes, 9);
    let cols = u64_at(bytes, 17);
    let payload = rows
        .checked_mul(cols)
        .and_then(|v| v.checked_mul(8))
        .filter(|&v| v <= usize::MAX as u64)
        .ok_or_else(|| Error::Format {
            field: "rows",
            detail: format!("{rows}x{cols} overflows the addressable payload size"),
        })?;
    Ok((rows as usize, cols as usize, payload as usize))
}

/// Decodes one matrix from the front of `bytes`, returning it with the number
/// of bytes consumed. Trailing bytes are left for the caller.
pub fn decode_matrix_prefix(bytes: &[u8]) -> Result<(Mat<f64>, usize)> {
    let (rows, cols, payload) = parse_header(bytes)?;
    let available = bytes.len() - HEADER_LEN;
    if available < payload {
        return Err(Error::Size { expected: payload as u64, actual: available as u64 });
    }
    let body = &bytes[HEADER_LEN..HEADER_LEN + payload];
    let m = Mat::from_fn(rows, cols, |i, j| {
        let at = (i * cols + j) * 8;
        f64::from_le_bytes(body[at..at + 8].try_into().unwrap())
    });
    Ok((m, HEADER_LEN + payload))
}

/// Decodes a buffer holding exactly one matrix.
pub fn decode_matrix(bytes: &[u8]) -> Result<Mat<f64>> {
    let (rows, cols, payload) = parse_header(bytes)?;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if actual != payload as u64 {
        return Err(Error::Size { expected: payload as u64, actual });
    }
    let (m, _) = decode_matrix_prefix(bytes)?;
    debug_assert_eq!((m.nrows(), m.ncols()), (rows, cols));
    Ok(m)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Mat<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}

pub fn write_matrix(path: impl AsRef<Path>, m: MatRef<'_, f64>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    encode_matrix(m, &mut bytes);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encoded(m: MatRef<'_, f64>) -> Vec<u8> {
        let mut v = Vec::new();
        encode_matrix(m, &mut v);
        v
    }

    #[test]
    fn header_layout() {
        let m = Mat::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
        let b = encoded(m.as_ref());
        assert_eq!(&b[..4], b"RMX1");
        assert_eq!(b[4..8], 1u32.to_le_bytes());
        assert_eq!(b[8], 1);
        assert_eq!(b[9..17], 2u64.to_le_bytes());
        assert_eq!(b[17..25], 3u64.to_le_bytes());
        // row-major: element (0, 1) is the second value
        assert_eq!(b[33..41], 1.0f64.to_le_bytes());
        assert_eq!(b.len(), 25 + 48);
    }

    #[test]
    fn empty_input_is_a_format_error() {
        assert!(matches!(decode_matrix(&[]), Err(Error::Format { field: "magic", .. })));
    }

    #[test]
    fn truncated_payload_reports_expected_bytes() {
        let m = Mat::from_fn(10, 10, |i, j| (i + j) as f64);
        let mut b = encoded(m.as_ref());
        b.truncate(b.len() - 8);
        match decode_matrix(&b) {
            Err(Error::Size { expected, actual }) => assert_eq!((expected, actual), (800, 792)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_fields_are_named() {
        let m = Mat::from_fn(1, 1, |_, _| 1.0);
        let good = encoded(m.as_ref());
        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(decode_matrix(&b), Err(Error::Format { field: "magic", .. })));
        let mut b = good.clone();
        b[4] = 2;
        assert!(matches!(decode_matrix(&b), Err(Error::Format { field: "version", .. })));
        let mut b = good.clone();
        b[8] = 2;
        assert!(matches!(decode_matrix(&b), Err(Error::Format { field: "dtype", .. })));
        let mut b = good;
        b.push(0);
        assert!(matches!(decode_matrix(&b), Err(Error::Size { expected: 8, actual: 9 })));
    }
}
