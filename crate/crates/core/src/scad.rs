//! The SCAD penalty and its derivative.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScadParams {
    pub lambda: f64,
    pub a: f64,
}

impl ScadParams {
    pub fn new(lambda: f64, a: f64) -> Result<Self> {
        let p = Self { lambda, a };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.a > 2.0 && self.a.is_finite()) {
            return Err(Error::InvalidInput(format!("a must exceed 2, got {}", self.a)));
        }
        Ok(())
    }
}

/// J_λ(|b|).
pub fn scad_penalty(b: f64, p: ScadParams) -> f64 {
    let (l, a) = (p.lambda, p.a);
    let t = b.abs();
    if t < l {
        l * t
    } else if t < a * l {
        (a * l * (t - l) - 0.5 * (t * t - l * l)) / (a - 1.0) + l * l
    } else {
        0.5 * (a - 1.0) * l * l + l * l
    }
}

/// J'_λ(b) for b ≥ 0.
pub fn scad_deriv(b: f64, p: ScadParams) -> Result<f64> {
    if !(b >= 0.0) {
        return Err(Error::InvalidInput(format!("derivative argument must be >= 0, got {b}")));
    }
    Ok(deriv(b, p))
}

#[inline]
pub(crate) fn deriv(b: f64, p: ScadParams) -> f64 {
    let (l, a) = (p.lambda, p.a);
    if b < l {
        l
    } else if b < a * l {
        (a * l - b) / (a - 1.0)
    } else {
        0.0
    }
}

/// Minimizer of ½(b − z)² + J_λ(|b|), valid for a > 2.
pub fn scad_threshold(z: f64, p: ScadParams) -> f64 {
    let (l, a) = (p.lambda, p.a);
    let t = z.abs();
    if t <= 2.0 * l {
        z.signum() * (t - l).max(0.0)
    } else if t <= a * l {
        ((a - 1.0) * z - z.signum() * a * l) / (a - 2.0)
    } else {
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_values() {
        let p = ScadParams::new(0.7, 3.7).unwrap();
        assert_eq!(scad_penalty(0.0, p), 0.0);
        assert!((scad_penalty(0.7, p) - 0.49).abs() < 1e-15);
        let top = (p.a + 1.0) * 0.49 / 2.0;
        for b in [p.a * 0.7, 3.0, -10.0, 1e6] {
            assert!((scad_penalty(b, p) - top).abs() < 1e-14);
        }
        assert_eq!(scad_deriv(0.0, p).unwrap(), 0.7);
        assert_eq!(scad_deriv(p.a * 0.7, p).unwrap(), 0.0);
        assert!(scad_deriv(-1.0, p).is_err());
        assert!(ScadParams::new(1.0, 2.0).is_err());
        assert!(ScadParams::new(-1.0, 3.0).is_err());
    }

    #[test]
    fn threshold_minimizes_on_grid() {
        let p = ScadParams::new(0.5, 3.0).unwrap();
        for &z in &[-2.0, -1.2, -0.7, -0.3, 0.0, 0.2, 0.6, 0.9, 1.1, 1.4, 1.6, 3.0] {
            let b = scad_threshold(z, p);
            let f = |x: f64| 0.5 * (x - z).powi(2) + scad_penalty(x, p);
            let grid_best = (-40000..=40000)
                .map(|k| k as f64 * 1e-4)
                .min_by(|a, b| f(*a).total_cmp(&f(*b)))
                .unwrap();
            assert!((b - grid_best).abs() < 2e-4, "z={z} b={b} grid={grid_best}");
        }
    }
}
