use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub fn check_finite<'a, I>(values: I, what: &str) -> Result<()>
where
    I: IntoIterator<Item = &'a f64>,
{
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Fails with the first pair of entries whose asymmetry exceeds `tol`.
pub fn check_symmetric(s: ArrayView2<f64>, tol: f64) -> Result<()> {
    let (r, c) = s.dim();
    if r != c {
        return Err(Error::DimensionMismatch(format!("expected a square matrix, got {r}x{c}")));
    }
    for i in 0..r {
        for j in (i + 1)..r {
            let gap = (s[[i, j]] - s[[j, i]]).abs();
            if !(gap <= tol) {
                return Err(Error::NotSymmetric { row: i, col: j, gap });
            }
        }
    }
    Ok(())
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = S`.
pub fn cholesky(s: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_finite(s.iter(), "cholesky input")?;
    check_symmetric(s, 1e-10)?;
    let d = s.nrows();
    let mut l = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        let mut diag = s[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..d {
            let mut acc = s[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = acc / ljj;
        }
    }
    Ok(l)
}

/// `XᵀX / n` for an `n × p` matrix.
pub fn gram(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    x.t().dot(&x) / n
}

pub fn mat_vec(a: ArrayView2<f64>, v: ArrayView1<f64>) -> Result<Array1<f64>> {
    if a.ncols() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, vector has length {}",
            a.ncols(),
            v.len()
        )));
    }
    Ok(a.dot(&v))
}

/// `Σ_{jk} = rho^{|j-k|}`.
pub fn toeplitz(p: usize, rho: f64) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(j, k)| rho.powi(j.abs_diff(k) as i32))
}

/// Unit diagonal, constant off-diagonal `rho`.
pub fn equicorrelation(p: usize, rho: f64) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(j, k)| if j == k { 1.0 } else { rho })
}
