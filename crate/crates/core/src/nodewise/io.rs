use std::path::Path;

use ndarray::{Array1, Array2};

use super::NodewisePrecision;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, write_table};

const FIXED: [&str; 7] = ["row", "lambda", "tau_sq", "tau_tilde_sq", "kkt_bound", "diag_gap", "offdiag_max"];

impl NodewisePrecision {
    /// One line per row: diagnostics followed by the full row `Θ̂_j`.
    /// `tau_tilde_sq` is left empty for matrix-input fits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let p = self.p();
        let theta_names: Vec<String> = (0..p).map(|k| format!("theta_{k}")).collect();
        let mut header: Vec<&str> = FIXED.to_vec();
        header.extend(theta_names.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = (0..p)
            .map(|j| {
                let mut r = vec![
                    j.to_string(),
                    fmt_f64(self.lambdas[j]),
                    fmt_f64(self.tau_sq[j]),
                    self.tau_tilde_sq.as_ref().map_or(String::new(), |t| fmt_f64(t[j])),
                    fmt_f64(self.kkt_bounds[j]),
                    fmt_f64(self.diag_gap[j]),
                    fmt_f64(self.offdiag_max[j]),
                ];
                r.extend(self.theta.row(j).iter().map(|v| fmt_f64(*v)));
                r
            })
            .collect();
        write_table(path, &header, &rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse { row: 1, col: 1, msg: "empty file".into() })?;
        let width = header.split(',').count();
        if width <= FIXED.len() {
            return Err(Error::Parse { row: 1, col: 1, msg: "missing theta columns".into() });
        }
        let p = width - FIXED.len();
        let mut theta = Array2::zeros((p, p));
        let mut cols: Vec<Array1<f64>> = (0..6).map(|_| Array1::zeros(p)).collect();
        let mut has_tilde = true;
        let mut count = 0;
        for (i, line) in lines.enumerate() {
            let row = i + 2;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width {
                return Err(Error::Parse { row, col: cells.len().min(width) + 1, msg: format!("expected {width} fields") });
            }
            if i >= p {
                return Err(Error::Parse { row, col: 1, msg: "more rows than columns".into() });
            }
            for (c, col) in cols.iter_mut().enumerate() {
                let cell = cells[c + 1];
                if c == 2 && cell.is_empty() {
                    has_tilde = false;
                    continue;
                }
                col[i] = parse_f64(cell, row, c + 2)?;
            }
            for k in 0..p {
                theta[[i, k]] = parse_f64(cells[FIXED.len() + k], row, FIXED.len() + k + 1)?;
            }
            count += 1;
        }
        if count != p {
            return Err(Error::Parse { row: count + 2, col: 1, msg: format!("expected {p} rows, found {count}") });
        }
        let [lambdas, tau_sq, tilde, kkt_bounds, diag_gap, offdiag_max]: [Array1<f64>; 6] =
            cols.try_into().expect("six diagnostic columns");
        Ok(Self {
            theta,
            tau_sq,
            tau_tilde_sq: has_tilde.then_some(tilde),
            lambdas,
            kkt_bounds,
            diag_gap,
            offdiag_max,
        })
    }
}
