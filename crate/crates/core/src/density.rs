//! Product-kernel conditional density estimation with least-squares
//! cross-validated bandwidths.
//!
//! All z-kernel weights are handled row by row: for a fixed evaluation point
//! the leave-one-out criterion terms are ratios of sums of the same weights,
//! so each row may be rescaled freely. Rows are rescaled so that the
//! largest Gaussian exponent is zero, which keeps tiny bandwidths from
//! underflowing to an all-zero row.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{kernel_eval, kernel_selfconv, KernelSpec};
use crate::optim::{nelder_mead, NmSettings};
use crate::rng::SeedSpec;

/// Special regressor `v` and the conditioning columns `z` (column-major).
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySample {
    v: Vec<f64>,
    z: Vec<Vec<f64>>,
}

impl DensitySample {
    pub fn new(v: Vec<f64>, z: Vec<Vec<f64>>) -> Result<Self> {
        let n = v.len();
        if n < 1 {
            return Err(Error::InsufficientSample("empty density sample".into()));
        }
        if z.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch(
                "conditioning columns must match the length of v".into(),
            ));
        }
        if v.iter().chain(z.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("density sample".into()));
        }
        Ok(Self { v, z })
    }

    pub fn from_matrix(v: &[f64], z: &DMatrix<f64>) -> Result<Self> {
        let cols = (0..z.ncols()).map(|l| z.column(l).iter().copied().collect()).collect();
        Self::new(v.to_vec(), cols)
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn d(&self) -> usize {
        self.z.len()
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn z(&self, l: usize) -> &[f64] {
        &self.z[l]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidths {
    pub h_v: f64,
    pub h_z: Vec<f64>,
}

impl Bandwidths {
    pub fn new(h_v: f64, h_z: Vec<f64>) -> Result<Self> {
        let b = Self { h_v, h_z };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if std::iter::once(&self.h_v)
            .chain(&self.h_z)
            .all(|h| h.is_finite() && *h > 0.0)
        {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("bandwidths must be positive and finite: {self:?}")))
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if self.h_z.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "{} z-bandwidths for {d} conditioning variables",
                self.h_z.len()
            )));
        }
        Ok(())
    }
}

/// A kernel density estimate of v given z at fixed bandwidths.
#[derive(Debug, Clone)]
pub struct DensityModel {
    pub kernel: KernelSpec,
    pub bandwidths: Bandwidths,
    pub sample: Arc<DensitySample>,
    /// Criterion value at the selected bandwidths (absent for fixed ones).
    pub cv_value: Option<f64>,
    /// Per z-coordinate: bandwidth at least a tenth of its upper search bound.
    pub smoothed_out: Vec<bool>,
    pub evaluations: usize,
    pub converged: bool,
}

impl DensityModel {
    pub fn with_bandwidths(
        kernel: KernelSpec,
        bandwidths: Bandwidths,
        sample: Arc<DensitySample>,
    ) -> Result<Self> {
        bandwidths.validate()?;
        bandwidths.check_dim(sample.d())?;
        let d = sample.d();
        Ok(Self {
            kernel,
            bandwidths,
            sample,
            cv_value: None,
            smoothed_out: vec![false; d],
            evaluations: 0,
            converged: true,
        })
    }

    /// Same sample and bandwidths, different kernel.
    pub fn with_kernel(&self, kernel: KernelSpec) -> Self {
        Self {
            kernel,
            ..self.clone()
        }
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.sample.d() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} coordinates, model has {}",
                z.len(),
                self.sample.d()
            )));
        }
        Ok(())
    }

    fn z_weight(&self, i: usize, z: &[f64]) -> f64 {
        let s = &self.sample;
        self.bandwidths
            .h_z
            .iter()
            .enumerate()
            .map(|(l, &h)| kernel_eval(self.kernel, (s.z[l][i] - z[l]) / h) / h)
            .product()
    }

    /// f̂(v, z).
    pub fn joint_density(&self, v: f64, z: &[f64]) -> Result<f64> {
        self.check_point(z)?;
        let s = &self.sample;
        let hv = self.bandwidths.h_v;
        let sum: f64 = (0..s.n())
            .map(|i| self.z_weight(i, z) * kernel_eval(self.kernel, (s.v[i] - v) / hv) / hv)
            .sum();
        Ok(sum / s.n() as f64)
    }

    /// f̂(z).
    pub fn marginal_density(&self, z: &[f64]) -> Result<f64> {
        self.check_point(z)?;
        let s = &self.sample;
        let sum: f64 = (0..s.n()).map(|i| self.z_weight(i, z)).sum();
        Ok(sum / s.n() as f64)
    }

    /// f̂(v | z) = f̂(v, z) / f̂(z), computed with per-point rescaling so that
    /// far-away evaluation points do not produce 0/0.
    pub fn cond_density(&self, v: f64, z: &[f64]) -> Result<f64> {
        self.check_point(z)?;
        let s = &self.sample;
        let h = &self.bandwidths;
        let expo: Vec<f64> = (0..s.n())
            .map(|i| {
                -0.5 * (0..s.d())
                    .map(|l| ((s.z[l][i] - z[l]) / h.h_z[l]).powi(2))
                    .sum::<f64>()
            })
            .collect();
        let m = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (i, e) in expo.iter().enumerate() {
            let poly: f64 = (0..s.d())
                .map(|l| self.kernel.poly(((s.z[l][i] - z[l]) / h.h_z[l]).powi(2)))
                .product();
            let w = poly * (e - m).exp();
            num += w * kernel_eval(self.kernel, (s.v[i] - v) / h.h_v) / h.h_v;
            den += w;
        }
        Ok(num / den)
    }

    /// f̂(v_i | z_i) at every training observation (full-sample estimate).
    pub fn cond_density_at_sample(&self) -> Vec<f64> {
        self.at_sample(false)
    }

    /// f̂_{−i}(v_i | z_i): observation i is left out of both sums.
    pub fn cond_density_loo(&self) -> Vec<f64> {
        self.at_sample(true)
    }

    fn at_sample(&self, loo: bool) -> Vec<f64> {
        let s = &self.sample;
        let n = s.n();
        let e = exponent_matrix(s, &self.bandwidths.h_z);
        let hv = self.bandwidths.h_v;
        (0..n)
            .map(|i| {
                let col = e.column(i);
                let m = (0..n)
                    .filter(|&j| !loo || j != i)
                    .map(|j| col[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                let (mut num, mut den) = (0.0, 0.0);
                for j in 0..n {
                    if loo && j == i {
                        continue;
                    }
                    let w = self.poly_factor(i, j) * (col[j] - m).exp();
                    num += w * kernel_eval(self.kernel, (s.v[i] - s.v[j]) / hv) / hv;
                    den += w;
                }
                num / den
            })
            .collect()
    }

    fn poly_factor(&self, i: usize, j: usize) -> f64 {
        match self.kernel {
            KernelSpec::Second => 1.0,
            KernelSpec::Fourth => pair_poly(&self.sample, &self.bandwidths.h_z, i, j),
        }
    }
}

impl fmt::Display for DensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kernel_order = {}", self.kernel)?;
        writeln!(f, "n = {}", self.sample.n())?;
        writeln!(f, "h_v = {:?}", self.bandwidths.h_v)?;
        for (l, h) in self.bandwidths.h_z.iter().enumerate() {
            let tag = if self.smoothed_out[l] { " (smoothed out)" } else { "" };
            writeln!(f, "h_z[{l}] = {h:?}{tag}")?;
        }
        if let Some(cv) = self.cv_value {
            writeln!(f, "cv = {cv:?}")?;
        }
        writeln!(f, "evaluations = {}", self.evaluations)?;
        write!(f, "converged = {}", self.converged)
    }
}

fn pair_poly(s: &DensitySample, h_z: &[f64], i: usize, j: usize) -> f64 {
    (0..s.d())
        .map(|l| 0.5 * (3.0 - ((s.z[l][i] - s.z[l][j]) / h_z[l]).powi(2)))
        .product()
}

/// E_ij = −½ Σ_l ((z_li − z_lj)/h_l)², symmetric with zero diagonal.
fn exponent_matrix(s: &DensitySample, h_z: &[f64]) -> DMatrix<f64> {
    let n = s.n();
    let mut e = DMatrix::zeros(n, n);
    for (col, &h) in s.z.iter().zip(h_z) {
        let scaled: Vec<f64> = col.iter().map(|x| x / h).collect();
        for (j, mut ej) in e.column_iter_mut().enumerate() {
            let zj = scaled[j];
            for (x, zi) in ej.iter_mut().zip(&scaled) {
                let u = zi - zj;
                *x -= 0.5 * u * u;
            }
        }
    }
    e
}

/// How the v-integral ∫K_h(v_j − t)K_h(v_k − t)dt inside the first
/// criterion term is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvolutionMethod {
    /// Closed-form self-convolution, n×n matrix.
    Exact,
    /// Trapezoid rule on an equispaced grid, which factorizes the double sum.
    /// The integrand is a Gaussian-type function of width h/√2 sampled at
    /// spacing h/2.5, so the quadrature error sits below double precision.
    Grid,
    /// Grid when it has fewer nodes than observations, exact otherwise.
    #[default]
    Auto,
}

/// The two criterion terms and CV = I1 − 2 I2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvTerms {
    pub i1: f64,
    pub i2: f64,
    pub cv: f64,
}

const GRID_STEPS_PER_H: f64 = 2.5;
const GRID_TAIL_H: f64 = 7.0;

fn grid_nodes(v: &[f64], h: f64) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min) - GRID_TAIL_H * h;
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + GRID_TAIL_H * h;
    let step = h / GRID_STEPS_PER_H;
    let g = ((hi - lo) / step).ceil() as usize + 1;
    (0..g).map(|k| lo + k as f64 * step).collect()
}

fn grid_size(v: &[f64], h: f64) -> usize {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ((hi - lo + 2.0 * GRID_TAIL_H * h) * GRID_STEPS_PER_H / h).ceil() as usize + 1
}

/// Least-squares cross-validation criterion with leave-one-out estimators.
pub fn cv_criterion(sample: &DensitySample, h: &Bandwidths, spec: KernelSpec) -> Result<f64> {
    Ok(cv_terms(sample, h, spec, ConvolutionMethod::Auto)?.cv)
}

pub fn cv_terms(
    sample: &DensitySample,
    h: &Bandwidths,
    spec: KernelSpec,
    method: ConvolutionMethod,
) -> Result<CvTerms> {
    h.validate()?;
    h.check_dim(sample.d())?;
    let n = sample.n();
    if n < 3 {
        return Err(Error::InsufficientSample("cross-validation needs n >= 3".into()));
    }
    let v = &sample.v;
    let hv = h.h_v;

    // Leave-one-out z-weights. Column i of `wt` holds the weights used at
    // observation i, rescaled by that column's largest exponent.
    let mut wt = exponent_matrix(sample, &h.h_z);
    for i in 0..n {
        let mut col = wt.column_mut(i);
        col[i] = f64::NEG_INFINITY;
        let m = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (j, x) in col.iter_mut().enumerate() {
            *x = if j == i {
                0.0
            } else {
                let poly = match spec {
                    KernelSpec::Second => 1.0,
                    KernelSpec::Fourth => pair_poly(sample, &h.h_z, i, j),
                };
                poly * (*x - m).exp()
            };
        }
    }

    let col_sums: Vec<f64> = (0..n).map(|i| wt.column(i).sum()).collect();
    if let Some(i) = col_sums.iter().position(|s| !(s.abs() > 1e-300) || !s.is_finite()) {
        return Err(Error::DegenerateDenominator(format!(
            "leave-one-out marginal density vanishes at observation {i}"
        )));
    }

    let use_grid = match method {
        ConvolutionMethod::Exact => false,
        ConvolutionMethod::Grid => true,
        ConvolutionMethod::Auto => grid_size(v, hv) < n,
    };
    let q: Vec<f64> = if use_grid {
        let nodes = grid_nodes(v, hv);
        let sq = (hv / GRID_STEPS_PER_H).sqrt();
        let at = DMatrix::from_fn(nodes.len(), n, |g, j| {
            sq * kernel_eval(spec, (v[j] - nodes[g]) / hv) / hv
        });
        // column i is row i of W·A
        let b = &at * &wt;
        (0..n).map(|i| b.column(i).norm_squared()).collect()
    } else {
        let c = DMatrix::from_fn(n, n, |j, k| kernel_selfconv(spec, (v[j] - v[k]) / hv) / hv);
        let m = &c * &wt;
        (0..n).map(|i| wt.column(i).dot(&m.column(i))).collect()
    };

    let mut i1 = 0.0;
    let mut i2 = 0.0;
    for i in 0..n {
        let s = col_sums[i];
        let r: f64 = wt
            .column(i)
            .iter()
            .zip(v)
            .map(|(w, vj)| w * kernel_eval(spec, (v[i] - vj) / hv))
            .sum::<f64>()
            / hv;
        i1 += q[i] / (s * s);
        i2 += r / s;
    }
    i1 /= n as f64;
    i2 /= n as f64;
    let cv = i1 - 2.0 * i2;
    if !cv.is_finite() {
        return Err(Error::NonFinite("cross-validation criterion".into()));
    }
    Ok(CvTerms { i1, i2, cv })
}

/// Settings for the multi-start simplex search over log-bandwidths.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub restarts: usize,
    /// Evaluation budget per start; `None` means 500·(d+1).
    pub max_evals: Option<usize>,
    pub ftol: f64,
    /// Initial simplex edge in log-bandwidth units.
    pub step: f64,
    pub seed: SeedSpec,
    pub method: ConvolutionMethod,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 3,
            max_evals: None,
            ftol: 1e-8,
            step: 0.7,
            seed: SeedSpec::default(),
            method: ConvolutionMethod::Auto,
        }
    }
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Search box per coordinate, v first: [1e-3·sd, 1e3·sd].
pub fn bandwidth_bounds(sample: &DensitySample) -> Result<(Vec<f64>, Vec<f64>)> {
    let sds: Vec<f64> = std::iter::once(sample.v())
        .chain(sample.z.iter().map(Vec::as_slice))
        .map(sample_sd)
        .collect();
    if let Some(k) = sds.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "density coordinate {k} has zero spread"
        )));
    }
    Ok((
        sds.iter().map(|s| 1e-3 * s).collect(),
        sds.iter().map(|s| 1e3 * s).collect(),
    ))
}

/// Normal-reference starting bandwidths 1.06·sd·n^(−1/(4+d)).
pub fn rule_of_thumb(sample: &DensitySample) -> Vec<f64> {
    let rate = (sample.n() as f64).powf(-1.0 / (4.0 + sample.d() as f64));
    std::iter::once(sample.v())
        .chain(sample.z.iter().map(Vec::as_slice))
        .map(|x| 1.06 * sample_sd(x) * rate)
        .collect()
}

/// Minimizes the cross-validation criterion over (h_v, h_1, …, h_d).
pub fn select_bandwidths(
    sample: Arc<DensitySample>,
    spec: KernelSpec,
    opt: &OptimizerConfig,
) -> Result<DensityModel> {
    let n = sample.n();
    let d = sample.d();
    if n < 10 {
        return Err(Error::InsufficientSample(format!(
            "bandwidth selection needs n >= 10, got {n}"
        )));
    }
    if !(1..=8).contains(&d) {
        return Err(Error::InvalidInput(format!(
            "bandwidth selection supports 1..=8 conditioning variables, got {d}"
        )));
    }
    if opt.restarts < 1 {
        return Err(Error::InvalidInput("at least one optimizer start is required".into()));
    }
    let (lower, upper) = bandwidth_bounds(&sample)?;
    let log_lo: Vec<f64> = lower.iter().map(|x| x.ln()).collect();
    let log_hi: Vec<f64> = upper.iter().map(|x| x.ln()).collect();
    let h0 = rule_of_thumb(&sample);
    let settings = NmSettings {
        max_evals: opt.max_evals.unwrap_or(500 * (d + 1)),
        ftol: opt.ftol,
        step: opt.step,
    };

    let objective = |x: &[f64]| -> f64 {
        let h = Bandwidths {
            h_v: x[0].exp(),
            h_z: x[1..].iter().map(|t| t.exp()).collect(),
        };
        cv_terms(&sample, &h, spec, opt.method).map_or(f64::INFINITY, |t| t.cv)
    };

    let mut rng = opt.seed.rng();
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut evaluations = 0;
    for r in 0..opt.restarts {
        let mult: f64 = match r {
            0 => 1.0,
            1 => 0.5,
            2 => 2.0,
            _ => (rng.random_range(-1.0..1.0) * 4f64.ln()).exp(),
        };
        let x0: Vec<f64> = h0.iter().map(|h| (mult * h).ln()).collect();
        let res = nelder_mead(objective, &x0, &log_lo, &log_hi, settings);
        evaluations += res.evals;
        if best.as_ref().is_none_or(|b| res.f < b.1) {
            best = Some((res.x, res.f, res.converged));
        }
    }
    let (x, f, converged) = best.expect("at least one start");
    if !f.is_finite() {
        return Err(Error::OptimizerFailed(format!(
            "no finite cross-validation value after {evaluations} evaluations"
        )));
    }
    let h: Vec<f64> = x
        .iter()
        .zip(lower.iter().zip(&upper))
        .map(|(t, (lo, hi))| t.exp().clamp(*lo, *hi))
        .collect();
    let smoothed_out = h[1..]
        .iter()
        .zip(&upper[1..])
        .map(|(h, hi)| *h >= 0.1 * hi)
        .collect();
    Ok(DensityModel {
        kernel: spec,
        bandwidths: Bandwidths {
            h_v: h[0],
            h_z: h[1..].to_vec(),
        },
        sample,
        cv_value: Some(f),
        smoothed_out,
        evaluations,
        converged,
    })
}
