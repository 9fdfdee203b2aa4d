//! Aggregation of replication records into the A/B/C table layouts.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::data::format_real;
use crate::error::{Error, Result};
use crate::mc::design::{DesignSpec, Truth};
use crate::mc::replicate::{Estimator, RepRecord};

/// Which median absolute deviation to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MadVariant {
    /// median_r |β̂_r − median_r(β̂_r)|
    #[default]
    AboutMedian,
    /// median_r |β̂_r − β*|
    AboutTruth,
}

impl FromStr for MadVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(Self::AboutMedian),
            "truth" => Ok(Self::AboutTruth),
            _ => Err(Error::InvalidInput(format!("MAD variant must be median or truth, got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub total_seconds: f64,
    pub per_rep_seconds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct McReport {
    pub design: DesignSpec,
    pub estimators: Vec<Estimator>,
    pub replications: usize,
    pub seed: u64,
    pub truth: Truth,
    /// Sorted by replication index.
    pub records: Vec<RepRecord>,
    pub kkt_tol: f64,
    pub timing: Timing,
}

/// Equality ignores wall-clock timing.
impl PartialEq for McReport {
    fn eq(&self, other: &Self) -> bool {
        self.design == other.design
            && self.estimators == other.estimators
            && self.replications == other.replications
            && self.seed == other.seed
            && self.truth == other.truth
            && self.records == other.records
            && self.kkt_tol == other.kkt_tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefMetrics {
    pub meanb: f64,
    pub rmse: f64,
    pub medb: f64,
    pub mad: f64,
    pub count: usize,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl CoefMetrics {
    pub fn from_estimates(est: &[f64], truth: f64, mad: MadVariant) -> Result<Self> {
        if est.is_empty() {
            return Err(Error::NothingToSummarize);
        }
        let n = est.len() as f64;
        let bias: Vec<f64> = est.iter().map(|e| e - truth).collect();
        let center = match mad {
            MadVariant::AboutMedian => median(est),
            MadVariant::AboutTruth => truth,
        };
        let dev: Vec<f64> = est.iter().map(|e| (e - center).abs()).collect();
        Ok(Self {
            meanb: bias.iter().sum::<f64>() / n,
            rmse: (bias.iter().map(|b| b * b).sum::<f64>() / n).sqrt(),
            medb: median(&bias),
            mad: median(&dev),
            count: est.len(),
        })
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Result<f64> {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        Err(Error::NothingToSummarize)
    } else {
        Ok(s / c as f64)
    }
}

fn frac(xs: impl Iterator<Item = bool>) -> Result<f64> {
    mean(xs.map(|b| if b { 1.0 } else { 0.0 }))
}

impl McReport {
    pub fn failures(&self, est: Estimator) -> usize {
        self.records
            .iter()
            .map(|r| r.failures.iter().filter(|(e, _)| *e == est).count())
            .sum()
    }

    pub fn total_failures(&self) -> usize {
        self.records.iter().map(|r| r.failures.len()).sum()
    }

    /// Per-replication estimates of coefficient `j` (intercept = 0); for
    /// Probit these are the ratios β_j/γ.
    pub fn estimates(&self, est: Estimator, j: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match est {
                Estimator::ScadLs => r.ls.as_ref().map(|f| f.beta[j]),
                Estimator::ScadGmm => r.gmm.as_ref().map(|f| f.beta[j]),
                Estimator::Probit => r.probit.as_ref().map(|f| f.ratios[j]),
            })
            .collect()
    }

    pub fn coef_metrics(&self, est: Estimator, j: usize, mad: MadVariant) -> Result<CoefMetrics> {
        if !self.estimators.contains(&est) {
            return Err(Error::NothingToSummarize);
        }
        CoefMetrics::from_estimates(&self.estimates(est, j), self.truth.beta[j], mad)
    }

    /// Pr(conditioning column j survives screening).
    pub fn pr_screened(&self, j: usize) -> Result<f64> {
        frac(self.records.iter().filter_map(|r| r.screened.as_ref().map(|s| s.contains(&j))))
    }

    /// Pr(every column in `set` survives screening).
    pub fn pr_screened_all(&self, set: &[usize]) -> Result<f64> {
        frac(
            self.records
                .iter()
                .filter_map(|r| r.screened.as_ref().map(|s| set.iter().all(|j| s.contains(j)))),
        )
    }

    pub fn mean_gamma(&self) -> Result<f64> {
        mean(self.records.iter().filter_map(|r| r.probit.as_ref().map(|p| p.gamma)))
    }

    /// Pr(β̂_j = 0) for SCAD-LS.
    pub fn pr_ls_zero(&self, j: usize) -> Result<f64> {
        frac(self.records.iter().filter_map(|r| r.ls.as_ref().map(|f| f.beta[j] == 0.0)))
    }

    /// E‖β̂‖₀ for SCAD-LS, intercept included.
    pub fn mean_ls_l0(&self) -> Result<f64> {
        mean(
            self.records
                .iter()
                .filter_map(|r| r.ls.as_ref().map(|f| f.beta.iter().filter(|b| **b != 0.0).count() as f64)),
        )
    }

    /// Pr(no invalid candidate is classified valid).
    pub fn pr_all_invalid_detected(&self) -> Result<f64> {
        let inv = &self.truth.invalid;
        frac(
            self.records
                .iter()
                .filter_map(|r| r.gmm.as_ref().map(|g| !g.classified_valid.iter().any(|j| inv.contains(j)))),
        )
    }

    /// Mean number of valid candidates classified valid.
    pub fn mean_valid_kept(&self) -> Result<f64> {
        let val = &self.truth.valid;
        mean(self.records.iter().filter_map(|r| {
            r.gmm
                .as_ref()
                .map(|g| g.classified_valid.iter().filter(|j| val.contains(j)).count() as f64)
        }))
    }

    /// Converged SCAD-LS fits whose KKT residual exceeds the tolerance.
    pub fn ls_kkt_violations(&self) -> usize {
        self.records
            .iter()
            .filter_map(|r| r.ls.as_ref())
            .filter(|f| f.converged && !(f.kkt_max <= self.kkt_tol))
            .count()
    }

    pub fn gmm_kkt_violations(&self) -> usize {
        self.records
            .iter()
            .filter_map(|r| r.gmm.as_ref())
            .filter(|f| f.converged && !f.kkt_pass)
            .count()
    }

    pub fn monotone_violations(&self) -> usize {
        self.records
            .iter()
            .map(|r| {
                usize::from(r.ls.as_ref().is_some_and(|f| !f.monotone))
                    + usize::from(r.gmm.as_ref().is_some_and(|f| !f.monotone))
            })
            .sum()
    }

    pub fn unconverged(&self) -> usize {
        self.records
            .iter()
            .map(|r| {
                usize::from(r.ls.as_ref().is_some_and(|f| !f.converged))
                    + usize::from(r.gmm.as_ref().is_some_and(|f| !f.converged))
            })
            .sum()
    }

    /// Long-format CSV: section,estimator,quantity,value.
    pub fn to_csv(&self, mad: MadVariant) -> String {
        let mut s = String::from("section,estimator,quantity,value\n");
        let d = &self.design;
        let mut row = |sec: &str, est: &str, q: &str, v: String| {
            let _ = writeln!(s, "{sec},{est},{q},{v}");
        };
        row("design", "", "id", d.id.to_string());
        row("design", "", "n", d.n.to_string());
        row("design", "", "p_n", d.p_n.to_string());
        row("design", "", "replications", self.replications.to_string());
        row("design", "", "seed", self.seed.to_string());
        for &e in &self.estimators {
            let name = e.to_string();
            row("failures", &name, "count", self.failures(e).to_string());
            for j in 0..self.truth.beta.len() {
                if let Ok(m) = self.coef_metrics(e, j, mad) {
                    let b = &self.truth.beta_names[j];
                    row("estimate", &name, &format!("{b}.meanb"), format_real(m.meanb));
                    row("estimate", &name, &format!("{b}.rmse"), format_real(m.rmse));
                    row("estimate", &name, &format!("{b}.medb"), format_real(m.medb));
                    row("estimate", &name, &format!("{b}.mad"), format_real(m.mad));
                }
            }
        }
        for (q, v) in self.selection_rows() {
            row("selection", "", &q, format_real(v));
        }
        if let Ok(g) = self.mean_gamma() {
            row("estimate", "probit", "gamma.mean", format_real(g));
        }
        row("diagnostics", "", "ls_kkt_violations", self.ls_kkt_violations().to_string());
        row("diagnostics", "", "gmm_kkt_violations", self.gmm_kkt_violations().to_string());
        row("diagnostics", "", "monotone_violations", self.monotone_violations().to_string());
        row("diagnostics", "", "unconverged", self.unconverged().to_string());
        row("timing", "", "total_seconds", format!("{:.3}", self.timing.total_seconds));
        let per = &self.timing.per_rep_seconds;
        if !per.is_empty() {
            let m = per.iter().sum::<f64>() / per.len() as f64;
            let mx = per.iter().copied().fold(0.0, f64::max);
            row("timing", "", "mean_rep_seconds", format!("{m:.3}"));
            row("timing", "", "max_rep_seconds", format!("{mx:.3}"));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, mad: MadVariant) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv(mad)).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// One line per replication with every estimate and the failure notes.
    pub fn replications_csv(&self) -> String {
        let p = self.truth.beta.len();
        let names = &self.truth.beta_names;
        let mut s = String::from("rep,screened");
        for e in &self.estimators {
            for n in names {
                let _ = write!(s, ",{e}.{n}");
            }
        }
        s.push_str(",failures\n");
        for r in &self.records {
            let scr = r
                .screened
                .as_ref()
                .map(|v| v.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(" "))
                .unwrap_or_default();
            let _ = write!(s, "{},{scr}", r.index);
            for e in &self.estimators {
                let vals: Option<&[f64]> = match e {
                    Estimator::ScadLs => r.ls.as_ref().map(|f| f.beta.as_slice()),
                    Estimator::ScadGmm => r.gmm.as_ref().map(|f| f.beta.as_slice()),
                    Estimator::Probit => r.probit.as_ref().map(|f| f.ratios.as_slice()),
                };
                for j in 0..p {
                    let _ = write!(s, ",{}", vals.map(|v| format_real(v[j])).unwrap_or_default());
                }
            }
            let notes: Vec<String> = r
                .failures
                .iter()
                .map(|(e, m)| format!("{e}: {}", m.replace([',', '\n'], ";")))
                .collect();
            let _ = writeln!(s, ",{}", notes.join(" | "));
        }
        s
    }

    fn selection_rows(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut push = |q: &str, v: Result<f64>| {
            if let Ok(v) = v {
                out.push((q.to_string(), v));
            }
        };
        if self.design.is_iv() {
            push("pr_zstar_z1_screened", self.pr_screened_all(&[0, 1]));
            if self.estimators.contains(&Estimator::ScadGmm) {
                push("pr_all_invalid_detected", self.pr_all_invalid_detected());
                push("mean_valid_kept", self.mean_valid_kept());
            }
        } else {
            push("pr_x1_screened", self.pr_screened(0));
            push("pr_x2_screened", self.pr_screened(1));
            if self.estimators.contains(&Estimator::ScadLs) {
                push("pr_b1_zero", self.pr_ls_zero(1));
                push("mean_l0", self.mean_ls_l0());
            }
        }
        out
    }
}

/// The A (estimator), B (selection) and C (Probit) table layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableLayout {
    Estimates,
    Selection,
    Probit,
}

impl FromStr for TableLayout {
    type Err = Error;

    /// Accepts "A", "B", "C", optionally prefixed by a design number
    /// ("1A", "4B").
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches(|c: char| c.is_ascii_digit());
        match t.to_ascii_uppercase().as_str() {
            "A" => Ok(Self::Estimates),
            "B" => Ok(Self::Selection),
            "C" => Ok(Self::Probit),
            _ => Err(Error::InvalidInput(format!("unknown table layout '{s}'"))),
        }
    }
}

fn cell(x: f64) -> String {
    format!("{x:.3}")
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

/// Rows for one table (header first).
pub fn summarize(report: &McReport, layout: TableLayout, mad: MadVariant) -> Result<Vec<Vec<String>>> {
    if report.estimators.is_empty() {
        return Err(Error::NothingToSummarize);
    }
    let d = &report.design;
    let lead = vec![d.n.to_string(), d.p_n.to_string()];
    let head = |cols: &[&str]| -> Vec<String> {
        ["n", "p_n"].iter().chain(cols).map(|s| s.to_string()).collect()
    };
    let coef_table = |est: Estimator, coefs: &[usize], label: &dyn Fn(&str) -> String| -> Result<Vec<Vec<String>>> {
        if !report.estimators.contains(&est) {
            return Err(Error::NothingToSummarize);
        }
        let mut cols = Vec::new();
        let mut row = lead.clone();
        for &j in coefs {
            let name = label(&report.truth.beta_names[j]);
            let m = report.coef_metrics(est, j, mad)?;
            for (k, v) in [("MEANB", m.meanb), ("RMSE", m.rmse), ("MEDB", m.medb), ("MAD", m.mad)] {
                cols.push(format!("{name} {k}"));
                row.push(cell(v));
            }
        }
        let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
        Ok(vec![head(&cols), row])
    };
    match (layout, d.is_iv()) {
        (TableLayout::Estimates, false) => coef_table(Estimator::ScadLs, &[2, 3], &|b| b.to_string()),
        (TableLayout::Estimates, true) => coef_table(Estimator::ScadGmm, &[0, 1], &|b| b.to_string()),
        (TableLayout::Probit, false) => coef_table(Estimator::Probit, &[2, 3], &|b| format!("{b}/gamma")),
        (TableLayout::Probit, true) => Err(Error::NothingToSummarize),
        (TableLayout::Selection, false) => {
            if !report.estimators.contains(&Estimator::ScadLs) {
                return Err(Error::NothingToSummarize);
            }
            let mut row = lead;
            row.push(pct(report.pr_screened(0)?));
            row.push(pct(report.pr_screened(1)?));
            row.push(pct(report.pr_ls_zero(1)?));
            row.push(format!("{:.1}", report.mean_ls_l0()?));
            Ok(vec![
                head(&["Pr({1} in A~)", "Pr({2} in A~)", "Pr(b1 = 0)", "E||b||_0"]),
                row,
            ])
        }
        (TableLayout::Selection, true) => {
            if !report.estimators.contains(&Estimator::ScadGmm) {
                return Err(Error::NothingToSummarize);
            }
            let mut row = lead;
            row.push(pct(report.pr_screened_all(&[0, 1])?));
            row.push(pct(report.pr_all_invalid_detected()?));
            row.push(format!("{:.1}", report.mean_valid_kept()?));
            Ok(vec![
                head(&["Pr((Z*,Z1) in Z~)", "Pr(Z_B and Z^ empty)", "E|Z_A and Z^|"]),
                row,
            ])
        }
    }
}

/// Aligned plain-text rendering of [`summarize`] output.
pub fn render(rows: &[Vec<String>]) -> String {
    let ncol = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..ncol)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:>w$}", w = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
