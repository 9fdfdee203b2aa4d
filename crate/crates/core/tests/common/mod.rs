//! Independent reference computations shared by the integration tests and
//! the acceptance binary.
#![allow(dead_code)]

use specreg::density::{Bandwidths, DensitySample};
use specreg::kernel::{kernel_eval, KernelSpec};
use specreg::scad::ScadParams;

/// Composite Simpson rule on [lo, hi] with `m` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, m: usize) -> f64 {
    assert!(m.is_multiple_of(2));
    let h = (hi - lo) / m as f64;
    let mut s = f(lo) + f(hi);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + k as f64 * h);
    }
    s * h / 3.0
}

/// V_n² from the definition: S1 + S2 − 2 S3 with the triple sum written out.
pub fn dcov_naive(v: &[f64], z: &[f64]) -> (f64, f64, f64, f64) {
    let n = v.len();
    let nf = n as f64;
    let (mut s1, mut a, mut b, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for j in 0..n {
        for k in 0..n {
            s1 += (v[j] - v[k]).abs() * (z[j] - z[k]).abs();
            a += (v[j] - v[k]).abs();
            b += (z[j] - z[k]).abs();
            for l in 0..n {
                s3 += (v[j] - v[l]).abs() * (z[k] - z[l]).abs();
            }
        }
    }
    let s1 = s1 / (nf * nf);
    let s2 = (a / (nf * nf)) * (b / (nf * nf));
    let s3 = s3 / (nf * nf * nf);
    (s1, s2, s3, s1 + s2 - 2.0 * s3)
}

fn zweight(spec: KernelSpec, z: &[Vec<f64>], hz: &[f64], i: usize, j: usize) -> f64 {
    z.iter()
        .zip(hz)
        .map(|(col, &h)| kernel_eval(spec, (col[j] - col[i]) / h) / h)
        .product()
}

/// Least-squares CV recomputed observation by observation: the density
/// f̂₋ᵢ(·|zᵢ) is rebuilt from the other n − 1 points and its square is
/// integrated in closed form via ∫K_h(a − t)K_h(b − t)dt = (K*K)((a − b)/h)/h.
pub fn cv_naive(v: &[f64], z: &[Vec<f64>], h_v: f64, h_z: &[f64], spec: KernelSpec, selfconv: impl Fn(f64) -> f64) -> f64 {
    let n = v.len();
    let (mut i1, mut i2) = (0.0, 0.0);
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let w: Vec<f64> = others.iter().map(|&j| zweight(spec, z, h_z, i, j)).collect();
        let den: f64 = w.iter().sum();
        let mut sq = 0.0;
        for (a, &j) in others.iter().enumerate() {
            for (b, &k) in others.iter().enumerate() {
                sq += w[a] * w[b] * selfconv((v[j] - v[k]) / h_v) / h_v;
            }
        }
        i1 += sq / (den * den);
        let num: f64 = others
            .iter()
            .zip(&w)
            .map(|(&j, wj)| wj * kernel_eval(spec, (v[i] - v[j]) / h_v) / h_v)
            .sum();
        i2 += num / den;
    }
    (i1 - 2.0 * i2) / n as f64
}

/// K*K by quadrature.
pub fn selfconv_quad(spec: KernelSpec, u: f64) -> f64 {
    simpson(|t| kernel_eval(spec, t) * kernel_eval(spec, u - t), -14.0 + u.min(0.0), 14.0 + u.max(0.0), 8000)
}

pub fn make_sample(v: Vec<f64>, z: Vec<Vec<f64>>) -> DensitySample {
    DensitySample::new(v, z).unwrap()
}

pub fn bandwidths(h_v: f64, h_z: Vec<f64>) -> Bandwidths {
    Bandwidths::new(h_v, h_z).unwrap()
}

/// Minimizer of ½(b − z)² + J_λ(|b|) from first principles: the objective is
/// strictly convex for a > 2, so it is the stationary point in whichever
/// SCAD branch is self-consistent.
pub fn scad_prox_oracle(z: f64, p: ScadParams) -> f64 {
    let (l, a) = (p.lambda, p.a);
    let s = z.signum();
    let t = z.abs();
    // branch |b| ≤ λ: b − z + λ s = 0
    let b1 = (t - l).max(0.0);
    if b1 <= l {
        return s * b1;
    }
    // branch λ < |b| ≤ aλ: b − t + (aλ − b)/(a − 1) = 0
    let b2 = (t * (a - 1.0) - a * l) / (a - 2.0);
    if b2 > l && b2 <= a * l {
        return s * b2;
    }
    s * t
}

/// Largest |β̂ − oracle| over `instances` SCAD-LS fits on designs with
/// X'X/n = I, where the penalized problem separates into scalar ones.
pub fn orthonormal_max_error(instances: usize, seed: u64) -> f64 {
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};
    use specreg::scad_ls::{fit_scad_ls, LsOptions};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (n, p) = (60, 8);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let g = DMatrix::from_fn(n, p, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let x = g.qr().q() * (n as f64).sqrt();
        let beta: Vec<f64> = (0..p).map(|j| if j < 3 { rng.random_range(-3.0..3.0) } else { 0.0 }).collect();
        let noise = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let y = &x * DVector::from_vec(beta) + noise;
        let params = ScadParams::new(rng.random_range(0.05..1.0), rng.random_range(2.1..5.0)).unwrap();
        let zhat = x.transpose() * &y / n as f64;
        let fit = fit_scad_ls(&x, &y, params, None, &LsOptions::default()).unwrap();
        for j in 0..p {
            worst = worst.max((fit.beta[j] - scad_prox_oracle(zhat[j], params)).abs());
        }
    }
    worst
}
