//! SCAD-penalized GMM with auxiliary invalidity parameters.
//!
//! Instruments are split into a known-valid block Z* and candidates Z_D.
//! With b = n⁻¹Σ z ỹ, G = n⁻¹Σ z x' and E = [0; I] selecting the candidate
//! rows, the moment vector is m̄(β, η) = b − Gβ − Eη and the estimator
//! minimizes m̄'Wm̄ + Σ_j J_λ(|η_j|). The objective is quadratic in β, so β
//! is profiled out in closed form and the penalized search runs over η
//! alone: with P = W − WG(G'WG)⁻¹G'W, the profiled quadratic is
//! η'Aη − 2c'η + const where A = E'PE and c = E'Pb.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{make_folds, DataTable};
use crate::error::{Error, Result};
use crate::linalg::{inverse_checked, numerical_rank, select_entries, select_rows, solve_spd};
use crate::rng::SeedSpec;
use crate::scad::{deriv, scad_penalty, ScadParams};
use crate::scad_ls::{log_grid, pick_best, scad_coordinate_min, CvRow, KKT_TOL, ZERO_TOL};

/// Which table columns play which part. Indices refer to
/// [`DataTable::columns`]; `intercept` appends a column of ones to both the
/// regressors and the known-valid instruments.
#[derive(Debug, Clone, PartialEq)]
pub struct IvLayout {
    pub known_valid: Vec<usize>,
    pub candidates: Vec<usize>,
    pub regressors: Vec<usize>,
    pub intercept: bool,
}

impl IvLayout {
    pub fn from_names(
        data: &DataTable,
        known_valid: &[&str],
        candidates: &[&str],
        regressors: &[&str],
        intercept: bool,
    ) -> Result<Self> {
        let idx = |names: &[&str]| -> Result<Vec<usize>> {
            names.iter().map(|n| data.column_index(n)).collect()
        };
        Ok(Self {
            known_valid: idx(known_valid)?,
            candidates: idx(candidates)?,
            regressors: idx(regressors)?,
            intercept,
        })
    }
}

/// Numeric pieces of a GMM problem: transformed outcome, regressors,
/// known-valid instruments and candidate instruments (row-aligned).
#[derive(Debug, Clone, PartialEq)]
pub struct GmmData {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub z_known: DMatrix<f64>,
    pub z_cand: DMatrix<f64>,
}

fn ones_first(cols: &[&[f64]], n: usize, intercept: bool) -> DMatrix<f64> {
    let off = usize::from(intercept);
    DMatrix::from_fn(n, cols.len() + off, |i, j| {
        if intercept && j == 0 {
            1.0
        } else {
            cols[j - off][i]
        }
    })
}

impl GmmData {
    pub fn new(
        y: DVector<f64>,
        x: DMatrix<f64>,
        z_known: DMatrix<f64>,
        z_cand: DMatrix<f64>,
    ) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || z_known.nrows() != n || z_cand.nrows() != n {
            return Err(Error::DimensionMismatch("GMM blocks have different row counts".into()));
        }
        if n < 2 {
            return Err(Error::TooFewRows(n));
        }
        if z_known.ncols() < x.ncols() {
            return Err(Error::InvalidInput(format!(
                "{} known-valid instruments for {} regressors",
                z_known.ncols(),
                x.ncols()
            )));
        }
        Ok(Self {
            y,
            x,
            z_known,
            z_cand,
        })
    }

    pub fn from_table(data: &DataTable, y_tilde: &[f64], layout: &IvLayout) -> Result<Self> {
        let n = data.n_rows();
        if y_tilde.len() != n {
            return Err(Error::DimensionMismatch("transformed outcome length".into()));
        }
        if layout.known_valid.iter().any(|j| layout.candidates.contains(j)) {
            return Err(Error::InvalidInput(
                "known-valid and candidate instrument lists overlap".into(),
            ));
        }
        let cols = data.columns();
        let get = |idx: &[usize]| -> Result<Vec<&[f64]>> {
            idx.iter()
                .map(|&j| {
                    cols.get(j)
                        .map(|c| c.values.as_slice())
                        .ok_or_else(|| Error::InvalidInput(format!("column index {j} out of range")))
                })
                .collect()
        };
        let x = ones_first(&get(&layout.regressors)?, n, layout.intercept);
        let zk = ones_first(&get(&layout.known_valid)?, n, layout.intercept);
        let zc = ones_first(&get(&layout.candidates)?, n, false);
        Self::new(DVector::from_column_slice(y_tilde), x, zk, zc)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn s(&self) -> usize {
        self.x.ncols()
    }

    pub fn k_star(&self) -> usize {
        self.z_known.ncols()
    }

    pub fn d(&self) -> usize {
        self.z_cand.ncols()
    }

    pub fn p_n(&self) -> usize {
        self.k_star() + self.d()
    }

    /// All instruments, known-valid first.
    pub fn z(&self) -> DMatrix<f64> {
        let (n, k) = (self.n(), self.k_star());
        DMatrix::from_fn(n, self.p_n(), |i, j| {
            if j < k {
                self.z_known[(i, j)]
            } else {
                self.z_cand[(i, j - k)]
            }
        })
    }

    fn rows(&self, idx: &[usize]) -> Self {
        Self {
            y: select_entries(&self.y, idx),
            x: select_rows(&self.x, idx),
            z_known: select_rows(&self.z_known, idx),
            z_cand: select_rows(&self.z_cand, idx),
        }
    }

    fn moments_parts(&self) -> (DVector<f64>, DMatrix<f64>) {
        let z = self.z();
        let n = self.n() as f64;
        (z.tr_mul(&self.y) / n, z.tr_mul(&self.x) / n)
    }
}

fn check_theta(data: &GmmData, beta: &[f64], eta: &[f64]) -> Result<()> {
    if beta.len() != data.s() || eta.len() != data.d() {
        return Err(Error::DimensionMismatch(format!(
            "theta has ({}, {}) entries, expected ({}, {})",
            beta.len(),
            eta.len(),
            data.s(),
            data.d()
        )));
    }
    Ok(())
}

fn moments_from(b: &DVector<f64>, g: &DMatrix<f64>, k: usize, beta: &[f64], eta: &[f64]) -> DVector<f64> {
    let mut m = b - g * DVector::from_column_slice(beta);
    for (j, e) in eta.iter().enumerate() {
        m[k + j] -= e;
    }
    m
}

/// m̄(θ): stacked n⁻¹Σ z*(ỹ − x'β) and n⁻¹Σ z_D(ỹ − x'β) − η.
pub fn sample_moments(data: &GmmData, beta: &[f64], eta: &[f64]) -> Result<DVector<f64>> {
    check_theta(data, beta, eta)?;
    let (b, g) = data.moments_parts();
    Ok(moments_from(&b, &g, data.k_star(), beta, eta))
}

fn check_weight(w: &DMatrix<f64>, p: usize) -> Result<()> {
    if w.shape() != (p, p) {
        return Err(Error::DimensionMismatch(format!(
            "weight matrix is {:?}, expected {p}x{p}",
            w.shape()
        )));
    }
    if !crate::linalg::is_symmetric(w, 1e-12 * w.amax().max(1.0)) {
        return Err(Error::NotPositiveDefinite("weight matrix is not symmetric".into()));
    }
    if w.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("weight matrix".into()));
    }
    Ok(())
}

/// m̄'Wm̄ + Σ_j J_λ(|η_j|).
pub fn gmm_objective(
    data: &GmmData,
    beta: &[f64],
    eta: &[f64],
    w: &DMatrix<f64>,
    params: ScadParams,
) -> Result<f64> {
    check_weight(w, data.p_n())?;
    let m = sample_moments(data, beta, eta)?;
    Ok(quad(&m, w) + eta.iter().map(|&e| scad_penalty(e, params)).sum::<f64>())
}

fn quad(m: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    m.dot(&(w * m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmOptions {
    pub max_outer: usize,
    pub tol: f64,
    pub inner_tol: f64,
    pub max_inner: usize,
    pub compute_sigma: bool,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            max_outer: 200,
            tol: 1e-7,
            inner_tol: 1e-13,
            max_inner: 20_000,
            compute_sigma: true,
        }
    }
}

/// Diagnostics for one candidate instrument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktCandidate {
    pub eta: f64,
    /// e_j'W m̄(θ̂) for the candidate's moment row.
    pub score: f64,
    /// For η̂ = 0: |score| ≤ λ/2 (+ slack). For η̂ ≠ 0: not applicable (true).
    pub zero_side_ok: bool,
    /// For η̂ ≠ 0: |score − sign(η̂) J'(|η̂|)/2|. Zero for η̂ = 0.
    pub stationarity: f64,
    /// |η̂| > aλ, where the penalty is flat.
    pub beyond_flat: bool,
    pub passes: bool,
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
    /// Candidate positions (0-based within the candidate block) with η̂ = 0.
    pub classified_valid: Vec<usize>,
    pub params: ScadParams,
    pub weight: DMatrix<f64>,
    /// Covariance of √n(β̂, η̂_B̂) when computable.
    pub sigma_hat: Option<DMatrix<f64>>,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt: Vec<KktCandidate>,
}

impl GmmFit {
    pub fn detected_invalid(&self) -> Vec<usize> {
        (0..self.eta.len()).filter(|&j| self.eta[j] != 0.0).collect()
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        self.objective_trace
            .windows(2)
            .all(|w| w[1] <= w[0] + tol * w[0].abs().max(1.0))
    }

    pub fn kkt_passes(&self) -> bool {
        self.kkt.iter().all(|k| k.passes)
    }

    /// Standard errors sqrt(diag(Σ̂)/n) for (β̂, η̂_B̂).
    pub fn std_errors(&self, n: usize) -> Option<Vec<f64>> {
        self.sigma_hat
            .as_ref()
            .map(|s| (0..s.nrows()).map(|i| (s[(i, i)].max(0.0) / n as f64).sqrt()).collect())
    }
}

/// Profiled problem for fixed moments (b, G) and weight W.
struct Profile {
    /// (G'WG)⁻¹G'W, maps b − Eη to β̂(η).
    beta_map: DMatrix<f64>,
    a: DMatrix<f64>,
    c: DVector<f64>,
    k: usize,
}

impl Profile {
    fn new(b: &DVector<f64>, g: &DMatrix<f64>, w: &DMatrix<f64>, k: usize) -> Result<Self> {
        let s = g.ncols();
        if numerical_rank(&g.rows(0, k).into_owned()) < s {
            return Err(Error::RankDeficient(
                "known-valid instruments do not identify the regressors".into(),
            ));
        }
        let wg = w * g;
        let gwg = g.tr_mul(&wg);
        let beta_map = solve_spd(&gwg, &wg.transpose(), "G'WG")?;
        let p = w - &wg * &beta_map;
        let d = g.nrows() - k;
        let a = p.view((k, k), (d, d)).into_owned();
        let c = (p.rows(k, d) * b).into_owned();
        Ok(Self { beta_map, a, c, k })
    }

    fn beta(&self, b: &DVector<f64>, eta: &[f64]) -> Vec<f64> {
        let mut r = b.clone();
        for (j, e) in eta.iter().enumerate() {
            r[self.k + j] -= e;
        }
        (&self.beta_map * r).iter().copied().collect()
    }

    fn r(&self, eta: &[f64], ae: &[f64], j: usize) -> f64 {
        self.c[j] - ae[j] + self.a[(j, j)] * eta[j]
    }

    fn a_eta(&self, eta: &[f64]) -> Vec<f64> {
        let d = eta.len();
        (0..d)
            .map(|j| (0..d).map(|k| self.a[(j, k)] * eta[k]).sum())
            .collect()
    }

    /// Coordinate descent on η'Aη − 2c'η + Σ w_j|η_j|, or, with `exact`,
    /// on η'Aη − 2c'η + Σ J_λ(|η_j|) by exact coordinate minimization.
    fn descend(&self, eta: &mut [f64], w: &[f64], exact: Option<ScadParams>, opts: &GmmOptions) {
        let d = eta.len();
        let mut ae = self.a_eta(eta);
        for _ in 0..opts.max_inner {
            let mut max_change: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for j in 0..d {
                let ajj = self.a[(j, j)];
                let new = if ajj <= 0.0 {
                    0.0
                } else {
                    let r = self.r(eta, &ae, j);
                    match exact {
                        Some(p) => scad_coordinate_min(2.0 * ajj, 2.0 * r, p),
                        None => r.signum() * (r.abs() - 0.5 * w[j]).max(0.0) / ajj,
                    }
                };
                let delta = new - eta[j];
                if delta != 0.0 {
                    for (k, x) in ae.iter_mut().enumerate() {
                        *x += self.a[(k, j)] * delta;
                    }
                    eta[j] = new;
                }
                max_change = max_change.max(delta.abs());
                scale = scale.max(new.abs());
            }
            if max_change <= opts.inner_tol * scale.max(1.0) {
                break;
            }
        }
    }
}

/// Starting η: residual cross-moments of the candidates at the GMM
/// estimate that uses only the known-valid block (identity weight there).
pub fn pilot_eta(data: &GmmData) -> Result<Vec<f64>> {
    let (b, g) = data.moments_parts();
    let k = data.k_star();
    let gk = g.rows(0, k).into_owned();
    let bk = b.rows(0, k).into_owned();
    if numerical_rank(&gk) < data.s() {
        return Err(Error::RankDeficient(
            "known-valid instruments do not identify the regressors".into(),
        ));
    }
    let beta0 = solve_spd(&gk.tr_mul(&gk), &DMatrix::from_column_slice(data.s(), 1, gk.tr_mul(&bk).as_slice()), "pilot G'G")?;
    let resid = &b - &g * beta0.column(0);
    Ok(resid.rows(k, data.d()).iter().copied().collect())
}

pub fn fit_scad_gmm(
    data: &GmmData,
    w: &DMatrix<f64>,
    params: ScadParams,
    init: Option<&[f64]>,
    opts: &GmmOptions,
) -> Result<GmmFit> {
    params.validate()?;
    check_weight(w, data.p_n())?;
    let (b, g) = data.moments_parts();
    let k = data.k_star();
    let prof = Profile::new(&b, &g, w, k)?;
    let d = data.d();
    let mut eta = match init {
        Some(e) if e.len() != d => {
            return Err(Error::DimensionMismatch(format!("init has {} entries for {d} candidates", e.len())))
        }
        Some(e) => e.to_vec(),
        None => pilot_eta(data)?,
    };
    let objective = |eta: &[f64]| -> f64 {
        let beta = prof.beta(&b, eta);
        let m = moments_from(&b, &g, k, &beta, eta);
        quad(&m, w) + eta.iter().map(|&e| scad_penalty(e, params)).sum::<f64>()
    };
    let mut trace = vec![objective(&eta)];
    let mut converged = d == 0;
    let mut iterations = 0;
    let mut weights = vec![0.0; d];
    while d > 0 && iterations < opts.max_outer {
        iterations += 1;
        for j in 0..d {
            weights[j] = deriv(eta[j].abs(), params);
        }
        let old = eta.clone();
        prof.descend(&mut eta, &weights, None, opts);
        let obj = objective(&eta);
        if !obj.is_finite() {
            return Err(Error::NonFinite("SCAD-GMM objective".into()));
        }
        trace.push(obj);
        let change = eta.iter().zip(&old).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if d > 0 {
        let before = eta.clone();
        prof.descend(&mut eta, &weights, Some(params), opts);
        let polished = objective(&eta);
        if polished <= *trace.last().unwrap() {
            trace.push(polished);
        } else {
            eta = before;
        }
    }
    for e in eta.iter_mut() {
        if e.abs() < ZERO_TOL {
            *e = 0.0;
        }
    }
    let beta = prof.beta(&b, &eta);
    let obj = gmm_objective(data, &beta, &eta, w, params)?;
    let classified_valid = (0..d).filter(|&j| eta[j] == 0.0).collect();
    let mut fit = GmmFit {
        beta,
        eta,
        classified_valid,
        params,
        weight: w.clone(),
        sigma_hat: None,
        objective: obj,
        objective_trace: trace,
        iterations,
        converged,
        kkt: Vec::new(),
    };
    fit.kkt = kkt_validity_check(data, &fit, params, KKT_TOL)?;
    if opts.compute_sigma {
        fit.sigma_hat = sigma_hat(data, &fit, w).ok();
    }
    Ok(fit)
}

/// First-order checks for every candidate: a zero η̂_j is certified when
/// |e_j'W m̄(θ̂)| ≤ λ/2; a nonzero one must satisfy e_j'W m̄ = sign(η̂_j)·J'(|η̂_j|)/2.
pub fn kkt_validity_check(
    data: &GmmData,
    fit: &GmmFit,
    params: ScadParams,
    slack: f64,
) -> Result<Vec<KktCandidate>> {
    let m = sample_moments(data, &fit.beta, &fit.eta)?;
    let wm = &fit.weight * m;
    let k = data.k_star();
    Ok(fit
        .eta
        .iter()
        .enumerate()
        .map(|(j, &eta)| {
            let score = wm[k + j];
            if eta == 0.0 {
                let ok = score.abs() <= 0.5 * params.lambda + slack;
                KktCandidate {
                    eta,
                    score,
                    zero_side_ok: ok,
                    stationarity: 0.0,
                    beyond_flat: false,
                    passes: ok,
                }
            } else {
                let st = (score - 0.5 * eta.signum() * deriv(eta.abs(), params)).abs();
                KktCandidate {
                    eta,
                    score,
                    zero_side_ok: true,
                    stationarity: st,
                    beyond_flat: eta.abs() > params.a * params.lambda,
                    passes: st <= slack,
                }
            }
        })
        .collect())
}

/// Γ = [n⁻¹Σ z x', −E_B̂]: the regressor cross-moment block next to minus the
/// identity columns of the detected-invalid candidates.
pub fn gamma_theta(data: &GmmData, detected: &[usize]) -> Result<DMatrix<f64>> {
    if let Some(&j) = detected.iter().find(|&&j| j >= data.d()) {
        return Err(Error::InvalidInput(format!("detected index {j} is not a candidate")));
    }
    let (_, g) = data.moments_parts();
    let (p, s, k) = (data.p_n(), data.s(), data.k_star());
    let mut gamma = DMatrix::zeros(p, s + detected.len());
    gamma.columns_mut(0, s).copy_from(&g);
    for (c, &j) in detected.iter().enumerate() {
        gamma[(k + j, s + c)] = -1.0;
    }
    Ok(gamma)
}

/// Ω̂ = n⁻¹Σ g_i g_i' with g_i = z_i(ỹ_i − x_i'β̂) − Eη̂.
pub fn omega_hat(data: &GmmData, beta: &[f64], eta: &[f64]) -> Result<DMatrix<f64>> {
    check_theta(data, beta, eta)?;
    let z = data.z();
    let (n, p, k) = (data.n(), data.p_n(), data.k_star());
    let resid = &data.y - &data.x * DVector::from_column_slice(beta);
    let mut gi = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            gi[(i, j)] = z[(i, j)] * resid[i] - if j >= k { eta[j - k] } else { 0.0 };
        }
    }
    Ok(gi.tr_mul(&gi) / n as f64)
}

/// Sandwich (Γ'WΓ)⁻¹Γ'WΩ̂WΓ(Γ'WΓ)⁻¹ over (β, η_B̂).
pub fn sigma_hat(data: &GmmData, fit: &GmmFit, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gamma = gamma_theta(data, &fit.detected_invalid())?;
    let omega = omega_hat(data, &fit.beta, &fit.eta)?;
    let wg = w * &gamma;
    let bread = inverse_checked(&gamma.tr_mul(&wg), "Γ'WΓ")?;
    let meat = wg.tr_mul(&(&omega * &wg));
    let s = &bread * meat * &bread;
    Ok((&s + s.transpose()) * 0.5)
}

/// Two-step weight Ω̂⁻¹ evaluated at a first-step fit.
pub fn two_step_weight(data: &GmmData, first: &GmmFit) -> Result<DMatrix<f64>> {
    let omega = omega_hat(data, &first.beta, &first.eta)?;
    let inv = inverse_checked(&omega, "Ω̂")?;
    Ok((&inv + inv.transpose()) * 0.5)
}

/// 30 log-spaced points in [0.01, 2]·sd(ỹ)·√(p_n/n).
pub fn default_gmm_lambda_grid(data: &GmmData) -> Vec<f64> {
    let y = &data.y;
    let n = y.len() as f64;
    let m = y.mean();
    let sd = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let scale = sd * (data.p_n() as f64 / n).sqrt();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    log_grid(0.01 * scale, 2.0 * scale, 30)
}

/// k-fold cross-validation of (λ, a): each pair is fitted on the training
/// folds and scored by the unpenalized criterion m̄'Wm̄ on the held-out fold.
pub fn cv_select_gmm(
    data: &GmmData,
    w: &DMatrix<f64>,
    lambda_grid: &[f64],
    a_grid: &[f64],
    k: usize,
    seed: SeedSpec,
    opts: &GmmOptions,
) -> Result<(ScadParams, Vec<CvRow>)> {
    if lambda_grid.is_empty() || a_grid.is_empty() {
        return Err(Error::InvalidInput("tuning grids must be nonempty".into()));
    }
    check_weight(w, data.p_n())?;
    let pairs: Vec<ScadParams> = lambda_grid
        .iter()
        .flat_map(|&l| a_grid.iter().map(move |&a| ScadParams::new(l, a)))
        .collect::<Result<_>>()?;
    let folds = make_folds(data.n(), k, seed)?;
    let fold_opts = GmmOptions {
        compute_sigma: false,
        ..opts.clone()
    };
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let (train, test) = folds.split(f);
            let tr = data.rows(&train);
            let te = data.rows(&test);
            let (bt, gt) = te.moments_parts();
            let init = pilot_eta(&tr)?;
            pairs
                .iter()
                .map(|&p| {
                    let fit = fit_scad_gmm(&tr, w, p, Some(&init), &fold_opts)?;
                    let m = moments_from(&bt, &gt, te.k_star(), &fit.beta, &fit.eta);
                    Ok(quad(&m, w))
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

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn toy(n: usize, d_valid: usize, d_invalid: usize, seed: u64) -> GmmData {
        let mut rng = SeedSpec::new(seed, 0).rng();
        let mut nrm = || -> f64 { StandardNormal.sample(&mut rng) };
        let mut y = DVector::zeros(n);
        let mut x = DMatrix::zeros(n, 2);
        let mut zk = DMatrix::zeros(n, 2);
        let d = d_valid + d_invalid;
        let mut zc = DMatrix::zeros(n, d);
        for i in 0..n {
            let (e1, e2, u) = (nrm(), nrm(), nrm());
            let zs = nrm();
            let eps = e1 + 0.5 * u;
            let xi = zs + 0.5 * e2 + 0.3 * e1;
            x[(i, 0)] = 1.0;
            x[(i, 1)] = xi;
            zk[(i, 0)] = 1.0;
            zk[(i, 1)] = zs;
            for j in 0..d {
                let base = if j < d_valid { e2 } else { e1 };
                zc[(i, j)] = 0.6 * base + nrm();
            }
            y[i] = 0.5 + xi + eps;
        }
        GmmData::new(y, x, zk, zc).unwrap()
    }

    #[test]
    fn just_identified_is_ols_when_z_is_x() {
        let t = toy(200, 0, 0, 1);
        let data = GmmData::new(t.y.clone(), t.x.clone(), t.x.clone(), DMatrix::zeros(200, 0)).unwrap();
        let fit = fit_scad_gmm(&data, &DMatrix::identity(2, 2), ScadParams::new(0.1, 3.7).unwrap(), None, &GmmOptions::default()).unwrap();
        let ols = crate::linalg::ols(&data.x, &data.y).unwrap();
        for j in 0..2 {
            assert!((fit.beta[j] - ols[j]).abs() < 1e-8);
        }
        let m = sample_moments(&data, &fit.beta, &[]).unwrap();
        assert!(m.amax() < 1e-12);
    }

    #[test]
    fn zero_theta_gives_raw_cross_products() {
        let t = toy(30, 1, 1, 2);
        let m = sample_moments(&t, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        let z = t.z();
        for j in 0..4 {
            let direct: f64 = (0..30).map(|i| z[(i, j)] * t.y[i]).sum::<f64>() / 30.0;
            assert!((m[j] - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn detects_invalid_and_passes_kkt() {
        let t = toy(3000, 3, 2, 3);
        let w = DMatrix::identity(t.p_n(), t.p_n());
        let fit = fit_scad_gmm(&t, &w, ScadParams::new(0.08, 3.7).unwrap(), None, &GmmOptions::default()).unwrap();
        assert_eq!(fit.detected_invalid(), vec![3, 4], "{:?}", fit.eta);
        assert!(fit.kkt_passes(), "{:?}", fit.kkt);
        assert!(fit.is_monotone(1e-12));
        assert!((fit.beta[1] - 1.0).abs() < 0.1);
        let s = fit.sigma_hat.as_ref().unwrap();
        assert_eq!(s.shape(), (4, 4));
    }

    #[test]
    fn huge_lambda_zeroes_everything() {
        let t = toy(500, 2, 2, 4);
        let w = DMatrix::identity(t.p_n(), t.p_n());
        let eta0 = pilot_eta(&t).unwrap();
        let big = 10.0 * 3.7 * eta0.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let fit = fit_scad_gmm(&t, &w, ScadParams::new(big, 3.7).unwrap(), None, &GmmOptions::default()).unwrap();
        assert!(fit.eta.iter().all(|&e| e == 0.0));
        assert_eq!(fit.classified_valid, vec![0, 1, 2, 3]);
        assert!(fit.kkt.iter().all(|k| k.zero_side_ok));
        // plain GMM using every instrument as valid
        let z = t.z();
        let g = z.tr_mul(&t.x) / 500.0;
        let b = z.tr_mul(&t.y) / 500.0;
        let beta = (g.tr_mul(&g)).try_inverse().unwrap() * g.tr_mul(&b);
        for j in 0..2 {
            assert!((fit.beta[j] - beta[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn kkt_flags_violation() {
        let t = toy(200, 1, 1, 5);
        let w = DMatrix::identity(t.p_n(), t.p_n());
        let p = ScadParams::new(0.05, 3.7).unwrap();
        let mut fit = fit_scad_gmm(&t, &w, p, None, &GmmOptions::default()).unwrap();
        let m = sample_moments(&t, &fit.beta, &[0.0, 0.0]).unwrap();
        let score = m[3];
        fit.eta = vec![0.0, 0.0];
        let lam = score.abs() / 0.6;
        let q = ScadParams::new(lam, 3.7).unwrap();
        let k = kkt_validity_check(&t, &fit, q, 0.0).unwrap();
        assert!(!k[1].zero_side_ok);
    }

    #[test]
    fn gamma_blocks() {
        let t = toy(40, 2, 2, 6);
        let g0 = gamma_theta(&t, &[]).unwrap();
        assert_eq!(g0.shape(), (6, 2));
        let g1 = gamma_theta(&t, &[1, 3]).unwrap();
        assert_eq!(g1.shape(), (6, 4));
        assert_eq!(g1[(3, 2)], -1.0);
        assert_eq!(g1[(5, 3)], -1.0);
        assert_eq!(g1.columns(0, 2), g0.columns(0, 2));
        assert!(gamma_theta(&t, &[4]).is_err());
    }

    #[test]
    fn sigma_invariant_to_weight_scale() {
        let t = toy(400, 2, 1, 7);
        let w = DMatrix::identity(t.p_n(), t.p_n());
        let p = ScadParams::new(0.05, 3.7).unwrap();
        let fit = fit_scad_gmm(&t, &w, p, None, &GmmOptions::default()).unwrap();
        let s1 = sigma_hat(&t, &fit, &w).unwrap();
        let s2 = sigma_hat(&t, &fit, &(w * 7.0)).unwrap();
        assert!((&s1 - &s2).amax() < 1e-10 * s1.amax());
        let ev = s1.symmetric_eigenvalues();
        assert!(ev.min() > -1e-10);
    }

    #[test]
    fn rejects_bad_weight() {
        let t = toy(40, 1, 1, 8);
        let mut w = DMatrix::identity(4, 4);
        w[(0, 0)] = -1.0;
        assert!(fit_scad_gmm(&t, &w, ScadParams::new(0.1, 3.7).unwrap(), None, &GmmOptions::default()).is_err());
    }
}
