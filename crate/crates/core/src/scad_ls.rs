//! SCAD-penalized least squares.
//!
//! The non-convex objective (1/2n)‖y − Xβ‖² + Σ J_λ(|β_j|) is minimized by
//! local linear approximation: each outer step replaces the penalty by its
//! tangent line in |β_j| at the current iterate and solves the resulting
//! weighted ℓ1 problem by cyclic coordinate descent, warm-started at the
//! current iterate. The tangent majorizes the concave penalty, so every
//! outer step can only lower the objective.
//!
//! LLA contracts only linearly (by 1/(a − 1) per step in the middle SCAD
//! branch), so once the outer loop stops, a few sweeps of exact coordinate
//! minimization of the SCAD objective itself finish the job.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::make_folds;
use crate::error::{Error, Result};
use crate::linalg::{ols, select_entries, select_rows};
use crate::rng::SeedSpec;
use crate::scad::{deriv, scad_penalty, ScadParams};

/// Coefficients below this magnitude are reported as exact zeros.
pub const ZERO_TOL: f64 = 1e-10;

/// Slack used when checking the KKT conditions of a converged fit.
pub const KKT_TOL: f64 = 1e-6;

pub const DEFAULT_A_GRID: [f64; 3] = [2.1, 3.0, 3.7];

#[derive(Debug, Clone, PartialEq)]
pub struct LsOptions {
    /// Columns left out of the penalty (e.g. an intercept).
    pub unpenalized: Vec<usize>,
    pub max_outer: usize,
    /// Outer stopping rule on the largest coordinate change.
    pub tol: f64,
    pub inner_tol: f64,
    pub max_inner: usize,
}

impl Default for LsOptions {
    fn default() -> Self {
        Self {
            unpenalized: Vec::new(),
            max_outer: 200,
            tol: 1e-7,
            inner_tol: 1e-13,
            max_inner: 20_000,
        }
    }
}

/// Per-coordinate first-order residuals at a candidate solution.
///
/// With g_j = n⁻¹ Σ x_ij (y_i − x_i'β): zero penalized coordinates report
/// max(0, |g_j| − λ); nonzero ones report |g_j − sign(β_j) J'(|β_j|)|;
/// unpenalized ones report |g_j|.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

impl KktReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScadFit {
    pub beta: Vec<f64>,
    pub active: Vec<usize>,
    pub params: ScadParams,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    /// Objective after each outer step, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub kkt: KktReport,
}

impl ScadFit {
    /// Whether the outer loop never raised the objective by more than
    /// `tol` (relative to max(1, |objective|)).
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.objective_trace
            .windows(2)
            .all(|w| w[1] <= w[0] + tol * w[0].abs().max(1.0))
    }
}

fn check_xy(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows, y has {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::TooFewRows(x.nrows()));
    }
    Ok(())
}

fn is_penalized(j: usize, unpenalized: &[usize]) -> bool {
    !unpenalized.contains(&j)
}

/// (1/2n)‖y − Xβ‖² + Σ_{penalized j} J_λ(|β_j|).
pub fn ls_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &[f64],
    params: ScadParams,
    unpenalized: &[usize],
) -> f64 {
    let b = DVector::from_column_slice(beta);
    let r = y - x * b;
    let pen: f64 = beta
        .iter()
        .enumerate()
        .filter(|(j, _)| is_penalized(*j, unpenalized))
        .map(|(_, &bj)| scad_penalty(bj, params))
        .sum();
    0.5 * r.norm_squared() / x.nrows() as f64 + pen
}

pub fn kkt_residuals(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &[f64],
    params: ScadParams,
    unpenalized: &[usize],
) -> KktReport {
    let b = DVector::from_column_slice(beta);
    let r = y - x * b;
    let g = x.tr_mul(&r) / x.nrows() as f64;
    let residuals: Vec<f64> = (0..beta.len())
        .map(|j| {
            if !is_penalized(j, unpenalized) {
                g[j].abs()
            } else if beta[j] == 0.0 {
                (g[j].abs() - params.lambda).max(0.0)
            } else {
                (g[j] - beta[j].signum() * deriv(beta[j].abs(), params)).abs()
            }
        })
        .collect();
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    KktReport {
        residuals,
        max_residual,
    }
}

/// OLS when p < n/2 (falling back to ridge if that fails), otherwise ridge
/// with penalty 1e-3·tr(X'X/n)/p.
pub fn default_init(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<f64>> {
    check_xy(x, y)?;
    let (n, p) = x.shape();
    if 2 * p < n {
        if let Ok(b) = ols(x, y) {
            return Ok(b.iter().copied().collect());
        }
    }
    let mut g = x.tr_mul(x) / n as f64;
    let c = x.tr_mul(y) / n as f64;
    let ridge = 1e-3 * g.trace() / p as f64;
    for j in 0..p {
        g[(j, j)] += ridge.max(1e-12);
    }
    let b = g
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("ridge initializer".into()))?
        .solve(&c);
    Ok(b.iter().copied().collect())
}

struct Gram {
    g: DMatrix<f64>,
    c: DVector<f64>,
}

impl Gram {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let n = x.nrows() as f64;
        Self {
            g: x.tr_mul(x) / n,
            c: x.tr_mul(y) / n,
        }
    }

    /// Cyclic coordinate descent on (1/2n)‖y − Xβ‖² + Σ w_j|β_j|,
    /// updating `beta` in place.
    fn weighted_l1(&self, beta: &mut [f64], w: &[f64], opts: &LsOptions) {
        let p = beta.len();
        let mut gb: Vec<f64> = (0..p)
            .map(|j| (0..p).map(|k| self.g[(j, k)] * beta[k]).sum())
            .collect();
        for _ in 0..opts.max_inner {
            let mut max_change: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for j in 0..p {
                let gjj = self.g[(j, j)];
                let new = if gjj <= 0.0 {
                    0.0
                } else {
                    let r = self.c[j] - gb[j] + gjj * beta[j];
                    let t = (r.abs() - w[j]).max(0.0);
                    r.signum() * t / gjj
                };
                let d = new - beta[j];
                if d != 0.0 {
                    for (k, gk) in gb.iter_mut().enumerate() {
                        *gk += self.g[(k, j)] * d;
                    }
                    beta[j] = new;
                }
                max_change = max_change.max(d.abs());
                scale = scale.max(new.abs());
            }
            if max_change <= opts.inner_tol * scale.max(1.0) {
                break;
            }
        }
    }
}

/// Global minimizer over b of ½g b² − r b + J_λ(|b|). On each penalty
/// branch the function is quadratic, so its stationary point and the branch
/// endpoints are the only candidates.
pub(crate) fn scad_coordinate_min(g: f64, r: f64, params: ScadParams) -> f64 {
    let (l, a) = (params.lambda, params.a);
    let s = r.signum();
    let t = r.abs();
    let f = |b: f64| 0.5 * g * b * b - t * b + scad_penalty(b, params);
    let mut cands = vec![0.0, l, a * l, ((t - l) / g).clamp(0.0, l), (t / g).max(a * l)];
    let curv = g * (a - 1.0) - 1.0;
    if curv != 0.0 {
        cands.push(((t * (a - 1.0) - a * l) / curv).clamp(l, a * l));
    }
    let mut best = 0.0;
    let mut fbest = 0.0;
    for b in cands {
        let fb = f(b);
        if fb < fbest || (fb == fbest && b < best) {
            best = b;
            fbest = fb;
        }
    }
    s * best
}

impl Gram {
    /// Cyclic coordinate descent with exact one-dimensional SCAD steps.
    fn scad_polish(&self, beta: &mut [f64], params: ScadParams, penalized: &[bool], opts: &LsOptions) {
        let p = beta.len();
        let mut gb: Vec<f64> = (0..p)
            .map(|j| (0..p).map(|k| self.g[(j, k)] * beta[k]).sum())
            .collect();
        for _ in 0..opts.max_inner {
            let mut max_change: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for j in 0..p {
                let gjj = self.g[(j, j)];
                if gjj <= 0.0 {
                    continue;
                }
                let r = self.c[j] - gb[j] + gjj * beta[j];
                let new = if penalized[j] {
                    scad_coordinate_min(gjj, r, params)
                } else {
                    r / gjj
                };
                let d = new - beta[j];
                if d != 0.0 {
                    for (k, gk) in gb.iter_mut().enumerate() {
                        *gk += self.g[(k, j)] * d;
                    }
                    beta[j] = new;
                }
                max_change = max_change.max(d.abs());
                scale = scale.max(new.abs());
            }
            if max_change <= opts.inner_tol * scale.max(1.0) {
                break;
            }
        }
    }
}

pub fn fit_scad_ls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    params: ScadParams,
    init: Option<&[f64]>,
    opts: &LsOptions,
) -> Result<ScadFit> {
    check_xy(x, y)?;
    params.validate()?;
    let p = x.ncols();
    if let Some(&j) = opts.unpenalized.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidInput(format!("unpenalized column {j} out of range")));
    }
    let mut beta = match init {
        Some(b) if b.len() != p => {
            return Err(Error::DimensionMismatch(format!(
                "init has {} entries for {p} columns",
                b.len()
            )))
        }
        Some(b) => b.to_vec(),
        None => default_init(x, y)?,
    };
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("initial coefficients".into()));
    }
    let gram = Gram::new(x, y);
    let objective = |b: &[f64]| ls_objective(x, y, b, params, &opts.unpenalized);
    let mut trace = vec![objective(&beta)];
    let mut converged = false;
    let mut iterations = 0;
    let mut weights = vec![0.0; p];
    while iterations < opts.max_outer {
        iterations += 1;
        for j in 0..p {
            weights[j] = if is_penalized(j, &opts.unpenalized) {
                deriv(beta[j].abs(), params)
            } else {
                0.0
            };
        }
        let old = beta.clone();
        gram.weighted_l1(&mut beta, &weights, opts);
        let obj = objective(&beta);
        if !obj.is_finite() {
            return Err(Error::NonFinite("SCAD least-squares objective".into()));
        }
        trace.push(obj);
        let change = beta
            .iter()
            .zip(&old)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    let penalized: Vec<bool> = (0..p).map(|j| is_penalized(j, &opts.unpenalized)).collect();
    let before = beta.clone();
    gram.scad_polish(&mut beta, params, &penalized, opts);
    let polished = objective(&beta);
    if polished <= *trace.last().unwrap() {
        trace.push(polished);
    } else {
        beta = before;
    }
    for b in beta.iter_mut() {
        if b.abs() < ZERO_TOL {
            *b = 0.0;
        }
    }
    let active = (0..p).filter(|&j| beta[j] != 0.0).collect();
    let obj = objective(&beta);
    let kkt = kkt_residuals(x, y, &beta, params, &opts.unpenalized);
    Ok(ScadFit {
        beta,
        active,
        params,
        iterations,
        converged,
        objective: obj,
        objective_trace: trace,
        kkt,
    })
}

/// `points` log-spaced values between lo and hi inclusive, increasing.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

fn sd(y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let m = y.mean();
    (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// 30 log-spaced points in [0.01, 2]·sd(y)·√(log p / n).
pub fn default_lambda_grid(y: &DVector<f64>, p: usize) -> Vec<f64> {
    let n = y.len() as f64;
    let scale = sd(y) * ((p.max(2) as f64).ln() / n).sqrt();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    log_grid(0.01 * scale, 2.0 * scale, 30)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub lambda: f64,
    pub a: f64,
    pub cv_error: f64,
    pub fold_errors: Vec<f64>,
}

/// Picks the row with the smallest error; near-ties (relative 1e-12) go
/// to the larger λ, then the smaller a.
pub(crate) fn pick_best(rows: &[CvRow]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if !r.cv_error.is_finite() {
            continue;
        }
        best = Some(match best {
            None => i,
            Some(b) => {
                let rb = &rows[b];
                let tie = (r.cv_error - rb.cv_error).abs() <= 1e-12 * rb.cv_error.abs().max(1e-300);
                if tie {
                    if r.lambda > rb.lambda || (r.lambda == rb.lambda && r.a < rb.a) {
                        i
                    } else {
                        b
                    }
                } else if r.cv_error < rb.cv_error {
                    i
                } else {
                    b
                }
            }
        });
    }
    best.ok_or_else(|| Error::OptimizerFailed("no finite cross-validation error".into()))
}

/// k-fold cross-validation over the (λ, a) grid by held-out mean squared
/// prediction error.
pub fn cv_select_tuning(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda_grid: &[f64],
    a_grid: &[f64],
    k: usize,
    seed: SeedSpec,
    opts: &LsOptions,
) -> Result<(ScadParams, Vec<CvRow>)> {
    check_xy(x, y)?;
    if lambda_grid.is_empty() || a_grid.is_empty() {
        return Err(Error::InvalidInput("tuning grids must be nonempty".into()));
    }
    let pairs: Vec<ScadParams> = lambda_grid
        .iter()
        .flat_map(|&l| a_grid.iter().map(move |&a| ScadParams::new(l, a)))
        .collect::<Result<_>>()?;
    let folds = make_folds(x.nrows(), k, seed)?;
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let (train, test) = folds.split(f);
            let (xtr, ytr) = (select_rows(x, &train), select_entries(y, &train));
            let (xte, yte) = (select_rows(x, &test), select_entries(y, &test));
            let init = default_init(&xtr, &ytr)?;
            pairs
                .iter()
                .map(|&p| {
                    let fit = fit_scad_ls(&xtr, &ytr, p, Some(&init), opts)?;
                    let b = DVector::from_column_slice(&fit.beta);
                    Ok((&yte - &xte * b).norm_squared() / test.len() as f64)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<CvRow> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let fold_errors: Vec<f64> = per_fold.iter().map(|e| e[i]).collect();
            CvRow {
                lambda: p.lambda,
                a: p.a,
                cv_error: fold_errors.iter().sum::<f64>() / k as f64,
                fold_errors,
            }
        })
        .collect();
    let best = pick_best(&rows)?;
    Ok((pairs[best], rows))
}

/// OLS on the `support` columns, zeros elsewhere.
pub fn oracle_fit(x: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> Result<Vec<f64>> {
    check_xy(x, y)?;
    if support.is_empty() {
        return Err(Error::InvalidInput("oracle support must be nonempty".into()));
    }
    if let Some(&j) = support.iter().find(|&&j| j >= x.ncols()) {
        return Err(Error::InvalidInput(format!("support index {j} out of range")));
    }
    let xs = crate::linalg::select_cols(x, support);
    let bs = ols(&xs, y)?;
    let mut beta = vec![0.0; x.ncols()];
    for (k, &j) in support.iter().enumerate() {
        beta[j] = bs[k];
    }
    Ok(beta)
}
