//! Sample distance covariance and marginal screening.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// The pieces of the sample distance covariance between two series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcovParts {
    pub s_n1: f64,
    pub s_n2: f64,
    pub s_n3: f64,
    /// Mean pairwise |v_j - v_k| over all ordered pairs.
    pub s_n21: f64,
    /// Mean pairwise |z_j - z_k| over all ordered pairs.
    pub s_n22: f64,
    pub vn2: f64,
}

fn check_pair(v: &[f64], z: &[f64]) -> Result<()> {
    if v.len() != z.len() {
        return Err(Error::DimensionMismatch(format!(
            "v has {} entries, z has {}",
            v.len(),
            z.len()
        )));
    }
    if v.len() < 2 {
        return Err(Error::TooFewRows(v.len()));
    }
    if v.iter().chain(z).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("distance covariance input".into()));
    }
    Ok(())
}

/// O(n^2) time, O(n) memory: one pass over unordered pairs accumulates the
/// cross term and both sets of distance row sums; the triple sum S_n3 is the
/// inner product of the row sums.
pub fn dcov_parts(v: &[f64], z: &[f64]) -> Result<DcovParts> {
    check_pair(v, z)?;
    let n = v.len();
    let mut row_a = vec![0.0; n];
    let mut row_b = vec![0.0; n];
    let mut cross = 0.0;
    for j in 0..n {
        let (vj, zj) = (v[j], z[j]);
        let mut c = 0.0;
        for k in (j + 1)..n {
            let a = (vj - v[k]).abs();
            let b = (zj - z[k]).abs();
            c += a * b;
            row_a[j] += a;
            row_a[k] += a;
            row_b[j] += b;
            row_b[k] += b;
        }
        cross += c;
    }
    let nf = n as f64;
    let n2 = nf * nf;
    let s_n1 = 2.0 * cross / n2;
    let s_n21 = row_a.iter().sum::<f64>() / n2;
    let s_n22 = row_b.iter().sum::<f64>() / n2;
    let s_n2 = s_n21 * s_n22;
    let s_n3 = row_a.iter().zip(&row_b).map(|(a, b)| a * b).sum::<f64>() / (n2 * nf);
    let vn2 = (s_n1 + s_n2 - 2.0 * s_n3).max(0.0);
    Ok(DcovParts {
        s_n1,
        s_n2,
        s_n3,
        s_n21,
        s_n22,
        vn2,
    })
}

/// sqrt(n) * V_n^2 / S_n2, or 0 when either series is constant.
pub fn dc_stat(v: &[f64], z: &[f64]) -> Result<f64> {
    let p = dcov_parts(v, z)?;
    Ok(stat_from_parts(&p, v.len()))
}

fn stat_from_parts(p: &DcovParts, n: usize) -> f64 {
    if p.s_n2 > 0.0 {
        (n as f64).sqrt() * p.vn2 / p.s_n2
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScreenRule {
    TopK(usize),
    /// Stores the threshold actually applied, c (log n)^{3/4}.
    Threshold { c: f64, threshold: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenReport {
    /// (column index, statistic), sorted by decreasing statistic, ties by index.
    pub stats: Vec<(usize, f64)>,
    /// Selected column indices in increasing order.
    pub selected: Vec<usize>,
    /// Columns with zero spread; never selected.
    pub degenerate: Vec<usize>,
    pub rule: ScreenRule,
    pub n: usize,
}

impl ScreenReport {
    /// Selected indices in rank order (strongest first).
    pub fn ranked_selection(&self) -> Vec<usize> {
        self.stats
            .iter()
            .map(|&(j, _)| j)
            .filter(|j| self.selected.contains(j))
            .collect()
    }
}

struct ColumnStats {
    ranked: Vec<(usize, f64)>,
    degenerate: Vec<usize>,
}

fn column_stats(v: &[f64], z: &DMatrix<f64>) -> Result<ColumnStats> {
    if z.nrows() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "Z has {} rows, v has {}",
            z.nrows(),
            v.len()
        )));
    }
    let n = v.len();
    let parts: Vec<DcovParts> = (0..z.ncols())
        .into_par_iter()
        .map(|l| dcov_parts(v, z.column(l).as_slice()))
        .collect::<Result<_>>()?;
    let mut ranked: Vec<(usize, f64)> = parts
        .iter()
        .enumerate()
        .map(|(l, p)| (l, stat_from_parts(p, n)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let degenerate = parts
        .iter()
        .enumerate()
        .filter(|(_, p)| p.s_n2 <= 0.0)
        .map(|(l, _)| l)
        .collect();
    Ok(ColumnStats { ranked, degenerate })
}

/// Keeps the `p_tilde` columns of `z` with the largest statistic.
pub fn screen_topk(v: &[f64], z: &DMatrix<f64>, p_tilde: usize) -> Result<ScreenReport> {
    if p_tilde < 1 {
        return Err(Error::InvalidInput("p_tilde must be at least 1".into()));
    }
    let cs = column_stats(v, z)?;
    let mut selected: Vec<usize> = cs
        .ranked
        .iter()
        .map(|&(l, _)| l)
        .filter(|l| !cs.degenerate.contains(l))
        .take(p_tilde)
        .collect();
    selected.sort_unstable();
    Ok(ScreenReport {
        stats: cs.ranked,
        selected,
        degenerate: cs.degenerate,
        rule: ScreenRule::TopK(p_tilde),
        n: v.len(),
    })
}

/// Keeps every column whose statistic reaches c (log n)^{3/4}.
pub fn screen_threshold(v: &[f64], z: &DMatrix<f64>, c: f64) -> Result<ScreenReport> {
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("threshold constant must be > 0, got {c}")));
    }
    if v.len() < 3 {
        return Err(Error::InsufficientSample("threshold screening needs n >= 3".into()));
    }
    let threshold = c * (v.len() as f64).ln().powf(0.75);
    let cs = column_stats(v, z)?;
    let mut selected: Vec<usize> = cs
        .ranked
        .iter()
        .filter(|&&(l, t)| t >= threshold && !cs.degenerate.contains(&l))
        .map(|&(l, _)| l)
        .collect();
    selected.sort_unstable();
    Ok(ScreenReport {
        stats: cs.ranked,
        selected,
        degenerate: cs.degenerate,
        rule: ScreenRule::Threshold { c, threshold },
        n: v.len(),
    })
}

/// True positive rate and false discovery rate (with the +1 guard in the
/// FDR denominator).
pub fn tpr_fdr(selected: &[usize], truth: &[usize], p_n: usize) -> Result<(f64, f64)> {
    if let Some(&bad) = selected.iter().chain(truth).find(|&&j| j >= p_n) {
        return Err(Error::InvalidInput(format!("index {bad} out of range for p_n={p_n}")));
    }
    let mut sel = selected.to_vec();
    sel.sort_unstable();
    sel.dedup();
    let mut tru = truth.to_vec();
    tru.sort_unstable();
    tru.dedup();
    let hits = sel.iter().filter(|j| tru.binary_search(j).is_ok()).count();
    let tpr = if tru.is_empty() {
        1.0
    } else {
        hits as f64 / tru.len() as f64
    };
    let fdr = (sel.len() - hits) as f64 / (sel.len() as f64 + 1.0);
    Ok((tpr, fdr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_pair() {
        let p = dcov_parts(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!((p.s_n1 - 0.5).abs() < 1e-15);
        assert!((p.s_n2 - 0.25).abs() < 1e-15);
        assert!((p.s_n3 - 0.25).abs() < 1e-15);
        assert!((p.vn2 - 0.25).abs() < 1e-15);
        let t = dc_stat(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!((t - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn constant_series() {
        let v = [3.0; 5];
        let z = [0.1, -2.0, 4.0, 0.0, 1.0];
        let p = dcov_parts(&v, &z).unwrap();
        assert_eq!(p.s_n1, 0.0);
        assert_eq!(p.s_n21, 0.0);
        assert_eq!(p.s_n2, 0.0);
        assert_eq!(p.s_n3, 0.0);
        assert_eq!(p.vn2, 0.0);
        assert_eq!(dc_stat(&v, &z).unwrap(), 0.0);
    }

    #[test]
    fn input_errors() {
        assert!(dcov_parts(&[1.0, 2.0], &[1.0]).is_err());
        assert!(dcov_parts(&[1.0], &[1.0]).is_err());
        assert!(dcov_parts(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn tpr_fdr_examples() {
        assert_eq!(tpr_fdr(&[0, 1], &[0, 1], 3).unwrap(), (1.0, 0.0));
        assert_eq!(tpr_fdr(&[], &[0], 3).unwrap(), (0.0, 0.0));
        let (t, f) = tpr_fdr(&[0, 2], &[0, 1], 3).unwrap();
        assert_eq!(t, 0.5);
        assert!((f - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(tpr_fdr(&[1], &[], 3).unwrap().0, 1.0);
        assert!(tpr_fdr(&[3], &[0], 3).is_err());
    }

    #[test]
    fn topk_rules() {
        let v: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut z = DMatrix::zeros(20, 3);
        for i in 0..20 {
            z[(i, 0)] = 1.0;
            z[(i, 1)] = v[i] * 2.0;
            z[(i, 2)] = ((i * 7) % 5) as f64;
        }
        let r = screen_topk(&v, &z, 5).unwrap();
        assert_eq!(r.degenerate, vec![0]);
        assert_eq!(r.selected, vec![1, 2]);
        assert_eq!(r.stats[0].0, 1);
        assert_eq!(screen_topk(&v, &z, 1).unwrap().selected, vec![1]);
        assert!(screen_topk(&v, &z, 0).is_err());
        assert!(screen_threshold(&v, &z, 1e12).unwrap().selected.is_empty());
        assert_eq!(screen_threshold(&v, &z, 1e-12).unwrap().selected, vec![1, 2]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let v = [0.0, 1.0, 3.0, 2.0];
        let z = DMatrix::from_fn(4, 3, |i, _| v[i]);
        let r = screen_topk(&v, &z, 2).unwrap();
        assert_eq!(r.selected, vec![0, 1]);
        assert_eq!(r.ranked_selection(), vec![0, 1]);
    }
}
