//! Probit maximum likelihood by Newton–Raphson, used as the parametric
//! benchmark. The index is γV + β'X with unit error variance, so the
//! comparable quantities are the ratios β_l/γ.

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use crate::data::DataTable;
use crate::error::{Error, Result};
use crate::linalg::numerical_rank;

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;

/// Φ(t) and φ(t)/Φ(t), accurate far into the lower tail.
fn log_cdf_and_mills(t: f64) -> (f64, f64) {
    if t > -30.0 {
        let cdf = 0.5 * erfc(-t / std::f64::consts::SQRT_2);
        let pdf = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        (cdf.ln(), pdf / cdf)
    } else {
        // asymptotic Mills series
        let t2 = t * t;
        let s = 1.0 - 1.0 / t2 + 3.0 / (t2 * t2);
        let log_pdf = -0.5 * t2 - 0.5 * (2.0 * std::f64::consts::PI).ln();
        (log_pdf - (-t).ln() + s.ln(), -t / s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbitMle {
    pub coef: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub max_gradient: f64,
}

fn loglik_grad_info(
    y: &[f64],
    x: &DMatrix<f64>,
    b: &DVector<f64>,
    with_derivs: bool,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let (n, p) = x.shape();
    let idx = x * b;
    let mut ll = 0.0;
    let mut grad = DVector::zeros(p);
    let mut wx = DMatrix::zeros(n, p);
    for i in 0..n {
        let (s, t) = if y[i] > 0.5 { (1.0, idx[i]) } else { (-1.0, -idx[i]) };
        let (lc, m) = log_cdf_and_mills(t);
        ll += lc;
        if with_derivs {
            let w = m * (m + t);
            let sw = w.max(0.0).sqrt();
            for j in 0..p {
                grad[j] += s * m * x[(i, j)];
                wx[(i, j)] = sw * x[(i, j)];
            }
        }
    }
    let info = if with_derivs { wx.tr_mul(&wx) } else { DMatrix::zeros(0, 0) };
    (ll, grad, info)
}

/// Newton–Raphson with step halving. Stops when the ∞-norm of the
/// log-likelihood gradient is below 1e−8 or after 100 iterations.
pub fn probit_mle(y: &[f64], x: &DMatrix<f64>) -> Result<ProbitMle> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("{} outcomes for {n} rows", y.len())));
    }
    if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::NonBinaryOutcome { row: i, value: y[i] });
    }
    if numerical_rank(x) < p {
        return Err(Error::RankDeficient("probit design is not of full column rank".into()));
    }
    let mut b = DVector::zeros(p);
    let (mut ll, mut grad, mut info) = loglik_grad_info(y, x, &b, true);
    for it in 0..MAX_ITER {
        let gmax = grad.amax();
        if gmax < GRAD_TOL {
            return Ok(ProbitMle {
                coef: b.iter().copied().collect(),
                loglik: ll,
                iterations: it,
                max_gradient: gmax,
            });
        }
        let step = info
            .clone()
            .cholesky()
            .ok_or_else(|| Error::RankDeficient("singular probit Hessian".into()))?
            .solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &b + &step * t;
            let (cl, _, _) = loglik_grad_info(y, x, &cand, false);
            if cl.is_finite() && cl >= ll - 1e-12 * ll.abs() {
                b = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::OptimizerFailed("probit line search stalled".into()));
        }
        (ll, grad, info) = loglik_grad_info(y, x, &b, true);
        if ll > -1e-6 || b.amax() > 1e6 {
            return Err(Error::Separation(format!(
                "log-likelihood {ll:.3e} with coefficients up to {:.3e}",
                b.amax()
            )));
        }
    }
    let gmax = grad.amax();
    if gmax < GRAD_TOL {
        return Ok(ProbitMle {
            coef: b.iter().copied().collect(),
            loglik: ll,
            iterations: MAX_ITER,
            max_gradient: gmax,
        });
    }
    if b.amax() > 20.0 {
        return Err(Error::Separation(format!(
            "no convergence; coefficients up to {:.3e}",
            b.amax()
        )));
    }
    Err(Error::OptimizerFailed(format!(
        "probit gradient {gmax:.3e} after {MAX_ITER} iterations"
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbitFit {
    /// Coefficient on V.
    pub gamma: f64,
    /// Coefficients on the regressors (intercept first when present).
    pub beta: Vec<f64>,
    /// β_l / γ.
    pub ratios: Vec<f64>,
    pub names: Vec<String>,
    pub mle: ProbitMle,
}

/// Probit of y on (V, [1], X) from raw arrays.
pub fn probit_arrays(y: &[f64], v: &[f64], x: &DMatrix<f64>, intercept: bool) -> Result<ProbitFit> {
    let n = y.len();
    if v.len() != n || x.nrows() != n {
        return Err(Error::DimensionMismatch("y, v and x row counts differ".into()));
    }
    let off = 1 + usize::from(intercept);
    let design = DMatrix::from_fn(n, off + x.ncols(), |i, j| match j {
        0 => v[i],
        1 if intercept => 1.0,
        _ => x[(i, j - off)],
    });
    let mle = probit_mle(y, &design)?;
    let gamma = mle.coef[0];
    if gamma == 0.0 {
        return Err(Error::DegenerateDenominator("estimated coefficient on V is zero".into()));
    }
    let beta = mle.coef[1..].to_vec();
    let ratios = beta.iter().map(|b| b / gamma).collect();
    let mut names = Vec::new();
    if intercept {
        names.push("(intercept)".to_string());
    }
    names.extend((0..x.ncols()).map(|j| format!("x{}", j + 1)));
    Ok(ProbitFit {
        gamma,
        beta,
        ratios,
        names,
        mle,
    })
}

/// Probit of the outcome on the special regressor, an intercept and every
/// regressor-tagged column.
pub fn probit_fit(data: &DataTable) -> Result<ProbitFit> {
    let y = data.outcome()?;
    let v = data.special_regressor()?;
    let names: Vec<String> = data
        .names_with_role(crate::data::Role::Regressor)
        .into_iter()
        .map(str::to_string)
        .collect();
    let cols: Vec<&[f64]> = names.iter().map(|c| data.column(c)).collect::<Result<_>>()?;
    let x = DMatrix::from_fn(data.n_rows(), cols.len(), |i, j| cols[j][i]);
    let mut fit = probit_arrays(y, v, &x, true)?;
    fit.names = std::iter::once("(intercept)".to_string()).chain(names).collect();
    Ok(fit)
}
