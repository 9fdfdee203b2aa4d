//! Data-generating processes for the six simulation designs.
//!
//! Designs 1–3: Y = 1(V + β'(1, X) + ε > 0) with β₂ = β₃ = 1 and every
//! other coefficient zero, V = X₁ + X₁X₂ + 1(X₂ > 0) + e_v.
//! Designs 4–6: Y = 1(V + β₀ + β₁X + ε > 0), β = (0, 1), X endogenous,
//! instruments Z*, Z_A = (Z₁..Z_{d_A}) valid and Z_B invalid.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Column, DataTable, Role};
use crate::error::{Error, Result};
use crate::rng::SeedSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DesignSpec {
    pub id: u8,
    pub n: usize,
    pub p_n: usize,
}

impl DesignSpec {
    pub fn new(id: u8, n: usize, p_n: usize) -> Result<Self> {
        let s = Self { id, n, p_n };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=6).contains(&self.id) {
            return Err(Error::InvalidInput(format!("design id must be 1..6, got {}", self.id)));
        }
        if ![15, 30, 50].contains(&self.p_n) {
            return Err(Error::InvalidInput(format!(
                "p_n must be one of 15, 30, 50, got {}",
                self.p_n
            )));
        }
        if self.n < 20 {
            return Err(Error::InsufficientSample(format!("n = {} is below 20", self.n)));
        }
        Ok(())
    }

    /// Designs 4–6 are instrumental-variable designs.
    pub fn is_iv(&self) -> bool {
        self.id >= 4
    }

    /// Number of non-intercept regressors in Designs 1–3.
    pub fn p(&self) -> usize {
        self.p_n - 1
    }

    /// (d_A, d_B) for Designs 4–6.
    pub fn d_ab(&self) -> (usize, usize) {
        match self.p_n {
            15 => (6, 7),
            30 => (14, 14),
            _ => (24, 24),
        }
    }
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "design {} (n = {}, p_n = {})", self.id, self.n, self.p_n)
    }
}

/// What the estimators should recover.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    /// Coefficients, intercept first.
    pub beta: Vec<f64>,
    pub beta_names: Vec<String>,
    /// Indices into `beta` of the nonzero coefficients.
    pub support: Vec<usize>,
    /// Indices into the conditioning columns of the variables V depends on.
    pub relevant_to_v: Vec<usize>,
    /// Candidate-instrument positions that are valid / invalid (IV designs).
    pub valid: Vec<usize>,
    pub invalid: Vec<usize>,
}

fn nrm(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Logistic with location 0 and scale 2.
fn logistic2(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return 2.0 * (u / (1.0 - u)).ln();
        }
    }
}

fn special(a: f64, b: f64, ev: f64) -> f64 {
    a + a * b + if b > 0.0 { 1.0 } else { 0.0 } + ev
}

fn binary(index: f64) -> f64 {
    if index > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// One draw of the design. Observations are generated sequentially from
/// the stream of `seed`.
pub fn gen_design(spec: DesignSpec, seed: SeedSpec) -> Result<(DataTable, Truth)> {
    gen_design_with_errors(spec, seed).map(|(t, truth, _)| (t, truth))
}

/// [`gen_design`] plus the latent index errors ε, row by row.
pub fn gen_design_with_errors(spec: DesignSpec, seed: SeedSpec) -> Result<(DataTable, Truth, Vec<f64>)> {
    spec.validate()?;
    let mut rng = seed.rng();
    if spec.is_iv() {
        gen_iv(spec, &mut rng)
    } else {
        gen_ls(spec, &mut rng)
    }
}

fn gen_ls(spec: DesignSpec, rng: &mut ChaCha8Rng) -> Result<(DataTable, Truth, Vec<f64>)> {
    let (n, p) = (spec.n, spec.p());
    let mut y = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut errs = Vec::with_capacity(n);
    let mut x = vec![Vec::with_capacity(n); p];
    let sd_eps = std::f64::consts::PI / 3f64.sqrt();
    let mut row = vec![0.0; p];
    for _ in 0..n {
        if spec.id == 3 {
            let common = nrm(rng);
            for r in row.iter_mut() {
                *r = 0.75f64.sqrt() * nrm(rng) + 0.5 * common;
            }
        } else {
            for r in row.iter_mut() {
                *r = nrm(rng);
            }
        }
        let ev = logistic2(rng);
        let eps = if spec.id == 1 {
            sd_eps * nrm(rng)
        } else {
            nrm(rng) * (row[2].abs() / 1.8).exp()
        };
        let vi = special(row[0], row[1], ev);
        y.push(binary(vi + row[1] + row[2] + eps));
        errs.push(eps);
        v.push(vi);
        for (col, &r) in x.iter_mut().zip(&row) {
            col.push(r);
        }
    }
    let mut cols = vec![
        Column::new("y", Some(Role::Outcome), y),
        Column::new("v", Some(Role::SpecialRegressor), v),
    ];
    cols.extend(
        x.into_iter()
            .enumerate()
            .map(|(j, c)| Column::new(format!("x{}", j + 1), Some(Role::Regressor), c)),
    );
    let mut beta = vec![0.0; p + 1];
    beta[2] = 1.0;
    beta[3] = 1.0;
    let truth = Truth {
        beta,
        beta_names: std::iter::once("b0".to_string())
            .chain((1..=p).map(|j| format!("b{j}")))
            .collect(),
        support: vec![2, 3],
        relevant_to_v: vec![0, 1],
        valid: Vec::new(),
        invalid: Vec::new(),
    };
    Ok((DataTable::new(cols)?, truth, errs))
}

fn gen_iv(spec: DesignSpec, rng: &mut ChaCha8Rng) -> Result<(DataTable, Truth, Vec<f64>)> {
    let n = spec.n;
    let (da, db) = spec.d_ab();
    let d = da + db;
    let h = 0.75f64.sqrt();
    let mut y = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut errs = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    let mut zstar = Vec::with_capacity(n);
    let mut z = vec![Vec::with_capacity(n); d];
    let mut u = vec![0.0; d + 1];
    for _ in 0..n {
        let e: [f64; 4] = [nrm(rng), nrm(rng), nrm(rng), nrm(rng)];
        for ui in u.iter_mut() {
            *ui = nrm(rng);
        }
        let ev = logistic2(rng);
        let x = (e[0] + e[1] + e[2]) / 3f64.sqrt();
        let eps = (e[0] + e[3]) / 2f64.sqrt();
        let zs = (e[1] + u[0]) / 2f64.sqrt();
        // z[j - 1] holds Z_j, built from u_{j+1} = u[j]
        for j in 1..=d {
            let val = if j == 1 {
                (e[1] + u[1]) / 2f64.sqrt()
            } else if j <= da {
                let common = if spec.id == 4 { e[2] } else { e[1] };
                0.5 * common + h * u[j]
            } else if spec.id == 6 {
                (e[0] + u[j]) / 2f64.sqrt()
            } else {
                0.5 * e[0] + h * u[j]
            };
            z[j - 1].push(val);
        }
        let vi = special(zs, z[0][z[0].len() - 1], ev);
        y.push(binary(vi + x + eps));
        errs.push(eps);
        v.push(vi);
        xs.push(x);
        zstar.push(zs);
    }
    let mut cols = vec![
        Column::new("y", Some(Role::Outcome), y),
        Column::new("v", Some(Role::SpecialRegressor), v),
        Column::new("x", Some(Role::Regressor), xs),
        Column::new("zstar", Some(Role::Instrument), zstar),
    ];
    cols.extend(
        z.into_iter()
            .enumerate()
            .map(|(j, c)| Column::new(format!("z{}", j + 1), Some(Role::Instrument), c)),
    );
    let truth = Truth {
        beta: vec![0.0, 1.0],
        beta_names: vec!["b0".into(), "b1".into()],
        support: vec![1],
        relevant_to_v: vec![0, 1],
        valid: (0..da).collect(),
        invalid: (da..d).collect(),
    };
    Ok((DataTable::new(cols)?, truth, errs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(DesignSpec::new(0, 100, 15).is_err());
        assert!(DesignSpec::new(7, 100, 15).is_err());
        assert!(DesignSpec::new(1, 100, 20).is_err());
        assert_eq!(DesignSpec::new(5, 100, 30).unwrap().d_ab(), (14, 14));
        assert_eq!(DesignSpec::new(2, 100, 50).unwrap().p(), 49);
    }

    #[test]
    fn shapes_and_roles() {
        let (t, truth) = gen_design(DesignSpec::new(1, 50, 15).unwrap(), SeedSpec::new(1, 0)).unwrap();
        assert_eq!(t.columns().len(), 2 + 14);
        assert_eq!(truth.beta.len(), 15);
        assert_eq!(t.names_with_role(Role::Regressor).len(), 14);
        let (t, truth) = gen_design(DesignSpec::new(4, 50, 15).unwrap(), SeedSpec::new(1, 0)).unwrap();
        assert_eq!(t.names_with_role(Role::Instrument).len(), 14);
        assert_eq!(truth.valid.len(), 6);
        assert_eq!(truth.invalid, (6..13).collect::<Vec<_>>());
    }

    #[test]
    fn streams_are_reproducible() {
        let s = DesignSpec::new(2, 40, 15).unwrap();
        let a = gen_design(s, SeedSpec::new(9, 3)).unwrap().0;
        let b = gen_design(s, SeedSpec::new(9, 3)).unwrap().0;
        let c = gen_design(s, SeedSpec::new(9, 4)).unwrap().0;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn logistic_scale() {
        let mut rng = SeedSpec::new(5, 0).rng();
        let draws: Vec<f64> = (0..200_000).map(|_| logistic2(&mut rng)).collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / draws.len() as f64;
        let target = 4.0 * std::f64::consts::PI.powi(2) / 3.0;
        assert!(m.abs() < 0.03);
        assert!((var / target - 1.0).abs() < 0.02, "{var} vs {target}");
    }
}
