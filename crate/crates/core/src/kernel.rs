//! Gaussian-based kernels of order two and four.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum KernelSpec {
    /// The standard normal density.
    #[default]
    Second,
    /// ½(3 − u²)φ(u).
    Fourth,
}

impl KernelSpec {
    pub fn from_order(order: u32) -> Result<Self> {
        match order {
            2 => Ok(KernelSpec::Second),
            4 => Ok(KernelSpec::Fourth),
            o => Err(Error::InvalidInput(format!("kernel order must be 2 or 4, got {o}"))),
        }
    }

    pub fn order(self) -> u32 {
        match self {
            KernelSpec::Second => 2,
            KernelSpec::Fourth => 4,
        }
    }

    /// Polynomial factor multiplying φ(u).
    #[inline]
    pub(crate) fn poly(self, u2: f64) -> f64 {
        match self {
            KernelSpec::Second => 1.0,
            KernelSpec::Fourth => 0.5 * (3.0 - u2),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.order())
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let o: u32 = s
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad kernel order '{s}'")))?;
        Self::from_order(o)
    }
}

#[inline]
pub fn std_normal_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

#[inline]
pub fn kernel_eval(spec: KernelSpec, u: f64) -> f64 {
    let u2 = u * u;
    spec.poly(u2) * INV_SQRT_2PI * (-0.5 * u2).exp()
}

/// K_h(x) = K(x/h)/h.
#[inline]
pub fn scaled_kernel(spec: KernelSpec, x: f64, h: f64) -> f64 {
    kernel_eval(spec, x / h) / h
}

/// (K * K)(u) = ∫ K(t) K(u − t) dt in closed form.
///
/// For the order-four kernel the convolution of two polynomial-times-normal
/// factors collapses to φ(u/√2)/√2 · (27/16 − 7u²/16 + u⁴/64).
#[inline]
pub fn kernel_selfconv(spec: KernelSpec, u: f64) -> f64 {
    let u2 = u * u;
    let base = (-0.25 * u2).exp() / (2.0 * PI.sqrt());
    match spec {
        KernelSpec::Second => base,
        KernelSpec::Fourth => base * (27.0 / 16.0 - 7.0 * u2 / 16.0 + u2 * u2 / 64.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_values() {
        assert!((kernel_eval(KernelSpec::Second, 0.0) - 0.398_942_3).abs() < 1e-7);
        assert!((kernel_eval(KernelSpec::Fourth, 0.0) - 0.598_413_4).abs() < 1e-7);
        assert!(kernel_eval(KernelSpec::Fourth, 3f64.sqrt()).abs() < 1e-15);
        assert!((kernel_selfconv(KernelSpec::Second, 0.0) - 0.282_094_8).abs() < 1e-7);
        assert!((kernel_selfconv(KernelSpec::Fourth, 0.0) - 0.476_034_961_118_419).abs() < 1e-14);
    }

    #[test]
    fn symmetric() {
        for spec in [KernelSpec::Second, KernelSpec::Fourth] {
            for &u in &[0.3, 1.7, 2.9, 5.0] {
                assert_eq!(kernel_eval(spec, u), kernel_eval(spec, -u));
                assert_eq!(kernel_selfconv(spec, u), kernel_selfconv(spec, -u));
            }
        }
    }

    #[test]
    fn parse_order() {
        assert_eq!("4".parse::<KernelSpec>().unwrap(), KernelSpec::Fourth);
        assert!("3".parse::<KernelSpec>().is_err());
        assert_eq!(KernelSpec::Second.to_string(), "2");
    }
}
