//! Plain-text file formats: numeric CSV data sets and full-precision numbers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Seventeen significant digits: exact round trip for `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // Avoid "-0" vs "0" noise in diffs.
        return "0.0000000000000000e0".to_string();
    }
    format!("{v:.16e}")
}

pub fn parse_f64(cell: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        row,
        col,
        msg: format!("non-numeric cell {cell:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse { row, col, msg: format!("non-finite cell {cell:?}") });
    }
    Ok(v)
}

/// Predictors with an optional response read from a CSV file.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Option<Array1<f64>>,
    /// Predictor names in column order.
    pub names: Vec<String>,
}

/// Reads a CSV with a header row. A column named `y` is the response; every
/// other column is a numeric predictor. Rows and columns in errors are
/// 1-based file coordinates (the header is row 1).
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse { row: 1, col: 1, msg: format!("{other:?}") },
        })?;
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 1, col: 1, msg: e.to_string() })?
        .clone();
    let width = header.len();
    let y_col = header.iter().position(|h| h.trim() == "y");
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(c, _)| Some(*c) != y_col)
        .map(|(_, h)| h.trim().to_string())
        .collect();
    if names.is_empty() {
        return Err(Error::Parse { row: 1, col: 1, msg: "no predictor columns".into() });
    }
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse { row, col: 1, msg: e.to_string() })?;
        if rec.len() != width {
            return Err(Error::Parse {
                row,
                col: rec.len().min(width) + 1,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v = parse_f64(cell, row, c + 1)?;
            if Some(c) == y_col {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Parse { row: 2, col: 1, msg: "no data rows".into() });
    }
    let x = Array2::from_shape_vec((n, names.len()), xs).expect("row-major shape");
    Ok(Dataset { x, y: y_col.map(|_| Array1::from(ys)), names })
}

/// Writes `y` first, then predictors `x1..xp` (or the given names).
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut head: Vec<String> = Vec::new();
    if data.y.is_some() {
        head.push("y".into());
    }
    head.extend(data.names.iter().cloned());
    writeln!(w, "{}", head.join(","))?;
    for (i, row) in data.x.rows().into_iter().enumerate() {
        let mut cells: Vec<String> = Vec::with_capacity(row.len() + 1);
        if let Some(y) = &data.y {
            cells.push(fmt_f64(y[i]));
        }
        cells.extend(row.iter().map(|v| fmt_f64(*v)));
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rows of preformatted cells under a header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        writeln!(w, "{}", r.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_with_seventeen_digits() {
        let v = 0.1 + 0.2;
        let s = fmt_f64(v);
        assert_eq!(s.parse::<f64>().unwrap(), v);
        assert_eq!(s.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    }

    #[test]
    fn reports_location_of_bad_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "a,y,b\n1,2,3\n4,oops,6\n").unwrap();
        match read_dataset(&p) {
            Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&p, "a,y,b\n1,2,3\n4,5\n").unwrap();
        match read_dataset(&p) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn response_column_anywhere() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "a,y,b\n1,2,3\n4,5,6\n").unwrap();
        let d = read_dataset(&p).unwrap();
        assert_eq!(d.names, vec!["a", "b"]);
        assert_eq!(d.y.unwrap().to_vec(), vec![2.0, 5.0]);
        assert_eq!(d.x.row(1).to_vec(), vec![4.0, 6.0]);
    }
}
