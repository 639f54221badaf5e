//! Familywise error control: Holm step-down and a Monte-Carlo max-statistic
//! test for groups that uses the estimated covariance `Ω̂`.

use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::DesparsifiedFit;
use crate::io::{fmt_f64, write_table};
use crate::numerics::{cholesky, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdjustMethod {
    Holm,
    Bonferroni,
}

impl AdjustMethod {
    pub fn name(self) -> &'static str {
        match self {
            AdjustMethod::Holm => "holm",
            AdjustMethod::Bonferroni => "bonferroni",
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdjustedPvalues {
    pub raw: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub method: AdjustMethod,
}

impl AdjustedPvalues {
    pub fn rejections(&self, alpha: f64) -> Vec<bool> {
        self.adjusted.iter().map(|p| *p <= alpha).collect()
    }

    /// `raw_p,adjusted_p,reject` per hypothesis.
    pub fn write_csv(&self, path: &Path, alpha: f64) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .raw
            .iter()
            .zip(&self.adjusted)
            .enumerate()
            .map(|(j, (r, a))| vec![j.to_string(), fmt_f64(*r), fmt_f64(*a), u8::from(*a <= alpha).to_string()])
            .collect();
        write_table(path, &["index", "raw_p", "adjusted_p", "reject"], &rows)
    }
}

fn check_pvalues(p: &[f64]) -> Result<()> {
    match p.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(Error::Domain(format!("p-value {i} is {} (outside [0, 1])", p[i]))),
        None => Ok(()),
    }
}

/// Holm step-down: with `p_(1) ≤ … ≤ p_(m)`,
/// `adj_(k) = max_{i≤k} min(1, (m − i + 1) p_(i))`.
pub fn holm_adjust(p: &[f64]) -> Result<AdjustedPvalues> {
    check_pvalues(p)?;
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    // Stable sort keeps ties in index order.
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (i, &j) in order.iter().enumerate() {
        running = running.max(((m - i) as f64 * p[j]).min(1.0));
        adjusted[j] = running;
    }
    Ok(AdjustedPvalues { raw: p.to_vec(), adjusted, method: AdjustMethod::Holm })
}

/// `min(1, m p_j)`.
pub fn bonferroni_adjust(p: &[f64]) -> Result<AdjustedPvalues> {
    check_pvalues(p)?;
    let m = p.len() as f64;
    Ok(AdjustedPvalues {
        raw: p.to_vec(),
        adjusted: p.iter().map(|v| (m * v).min(1.0)).collect(),
        method: AdjustMethod::Bonferroni,
    })
}

/// Result of the group test of `H_0: β⁰_j = 0 for all j ∈ G`.
#[derive(Clone, Debug)]
pub struct MaxStatTest {
    pub group: Vec<usize>,
    /// `max_{j∈G} n b̂_j² / (σ_ε² Ω̂_jj)`.
    pub observed: f64,
    pub mc_draws: usize,
    /// Draws at least as large as `observed`.
    pub exceed: usize,
    pub pvalue: f64,
    /// Diagonal jitter (relative to the largest diagonal entry) that made
    /// `Ω̂_GG` factorizable.
    pub jitter: f64,
}

pub const DEFAULT_MC_DRAWS: usize = 10_000;
const JITTERS: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];
const BLOCK: usize = 1000;

/// Null distribution of `max_{j∈G} Z_j²/Ω_jj` with `Z ~ N(0, Ω_GG)`,
/// simulated and compared with `observed`.
pub fn max_stat_pvalue(
    omega_gg: ArrayView2<f64>,
    observed: f64,
    mc_draws: usize,
    rng: &RngStream,
) -> Result<(usize, f64, f64)> {
    let g = omega_gg.nrows();
    if g == 0 || omega_gg.ncols() != g {
        return Err(Error::DimensionMismatch("group covariance must be square and non-empty".into()));
    }
    if mc_draws == 0 {
        return Err(Error::Config("need at least one Monte-Carlo draw".into()));
    }
    let scale = omega_gg.diag().iter().fold(0.0f64, |m, v| m.max(*v));
    if !(scale > 0.0) {
        return Err(Error::Domain("group covariance has no positive diagonal entry".into()));
    }
    let mut last = None;
    let mut factor = None;
    for &j in &JITTERS {
        let mut s = omega_gg.to_owned();
        for k in 0..g {
            s[[k, k]] += j * scale;
        }
        match cholesky(s.view()) {
            Ok(l) => {
                factor = Some((l, j));
                break;
            }
            Err(e) => last = Some(e),
        }
    }
    let (l, jitter) = match factor {
        Some(f) => f,
        None => return Err(last.expect("at least one factorization attempted")),
    };
    let diag: Vec<f64> = (0..g).map(|k| omega_gg[[k, k]]).collect();
    let blocks = mc_draws.div_ceil(BLOCK);
    let exceed: usize = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = rng.substream(b as u64);
            let count = BLOCK.min(mc_draws - b * BLOCK);
            let mut hits = 0usize;
            let mut z = vec![0.0; g];
            for _ in 0..count {
                for v in z.iter_mut() {
                    *v = r.standard_normal();
                }
                let mut stat = 0.0f64;
                for i in 0..g {
                    let w: f64 = (0..=i).map(|k| l[[i, k]] * z[k]).sum();
                    stat = stat.max(w * w / diag[i]);
                }
                if stat >= observed {
                    hits += 1;
                }
            }
            hits
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok((exceed, (1 + exceed) as f64 / (1 + mc_draws) as f64, jitter))
}

/// Max-statistic test for the group `G` from a de-sparsified fit and the
/// full `Ω̂` (or any matrix whose `G × G` block is `Ω̂_GG`).
pub fn max_stat_group_test(
    fit: &DesparsifiedFit,
    omega: ArrayView2<f64>,
    group: &[usize],
    mc_draws: usize,
    rng: &RngStream,
) -> Result<MaxStatTest> {
    let p = fit.b.len();
    if omega.dim() != (p, p) {
        return Err(Error::DimensionMismatch(format!("omega is {:?}, expected {p}x{p}", omega.dim())));
    }
    if group.is_empty() {
        return Err(Error::Config("group is empty".into()));
    }
    if let Some(j) = group.iter().find(|&&j| j >= p) {
        return Err(Error::DimensionMismatch(format!("group index {j} out of range for p = {p}")));
    }
    let block = Array2::from_shape_fn((group.len(), group.len()), |(a, b)| omega[[group[a], group[b]]]);
    let observed = max_statistic(fit.b.view(), &fit.omega_diag.to_vec(), fit.sigma_eps, fit.n, group);
    let (exceed, pvalue, jitter) = max_stat_pvalue(block.view(), observed, mc_draws, rng)?;
    Ok(MaxStatTest { group: group.to_vec(), observed, mc_draws, exceed, pvalue, jitter })
}

/// `max_{j∈G} n b_j² / (σ² Ω_jj)`.
pub fn max_statistic(b: ArrayView1<f64>, omega_diag: &[f64], sigma: f64, n: usize, group: &[usize]) -> f64 {
    group
        .iter()
        .map(|&j| n as f64 * b[j] * b[j] / (sigma * sigma * omega_diag[j]))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn holm_hand_example() {
        let a = holm_adjust(&[0.01, 0.04, 0.03]).unwrap();
        let want = [0.03, 0.06, 0.06];
        for (x, w) in a.adjusted.iter().zip(want) {
            assert!((x - w).abs() < 1e-15);
        }
        assert_eq!(holm_adjust(&[1.0, 1.0]).unwrap().adjusted, vec![1.0, 1.0]);
        assert_eq!(holm_adjust(&[0.2]).unwrap().adjusted, vec![0.2]);
        assert!(holm_adjust(&[1.2]).is_err());
    }

    #[test]
    fn zero_statistic_has_unit_pvalue() {
        let (exceed, p, _) = max_stat_pvalue(array![[1.0, 0.3], [0.3, 1.0]].view(), 0.0, 500, &RngStream::new(1)).unwrap();
        assert_eq!(exceed, 500);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn singular_block_is_jittered() {
        let (_, _, jitter) = max_stat_pvalue(array![[1.0, 1.0], [1.0, 1.0]].view(), 1.0, 10, &RngStream::new(2)).unwrap();
        assert!(jitter > 0.0);
    }

    #[test]
    fn rejections_and_csv() {
        let a = holm_adjust(&[0.001, 0.5]).unwrap();
        assert_eq!(a.rejections(0.05), vec![true, false]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("adj.csv");
        a.write_csv(&path, 0.05).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("index,raw_p,adjusted_p,reject\n0,"));
        assert!(text.lines().nth(1).unwrap().ends_with(",1"));
    }
}
