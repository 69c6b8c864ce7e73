use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};

/// Parses a headerless rectangular numeric CSV. Row and column numbers in
/// errors are 1-based.
pub fn parse_csv_matrix(input: impl Read) -> Result<Mat<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse { row, col: None, detail: e.to_string() })?;
        if let Some(first) = rows.first() {
            if record.len() != first.len() {
                return Err(Error::Parse {
                    row,
                    col: None,
                    detail: format!("ragged row: expected {} fields, found {}", first.len(), record.len()),
                });
            }
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    col: Some(j + 1),
                    detail: format!("`{cell}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(Error::Parse { row: 1, col: None, detail: "no data".into() });
    }
    Ok(Mat::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<Mat<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_matrix(file)
}

/// Writes shortest round-trip decimal representations, so values survive a
/// CSV round trip exactly.
pub fn write_csv_matrix(mut out: impl Write, m: MatRef<'_, f64>) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let m = parse_csv_matrix("1,2\n3,4".as_bytes()).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (2, 2));
        assert_eq!(m[(1, 0)], 3.0);
    }

    #[test]
    fn ragged_row_reports_row_two() {
        match parse_csv_matrix("1,2\n3".as_bytes()) {
            Err(Error::Parse { row: 2, col: None, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_coordinates() {
        match parse_csv_matrix("1,2\n3,x".as_bytes()) {
            Err(Error::Parse { row: 2, col: Some(2), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_is_rejected() {
        assert!(parse_csv_matrix("".as_bytes()).is_err());
    }
}
