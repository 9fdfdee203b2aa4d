mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use specreg::dcov::{dc_stat, dcov_parts, screen_topk};
use specreg::density::{cv_terms, ConvolutionMethod};
use specreg::kernel::{kernel_eval, kernel_selfconv, KernelSpec};
use specreg::scad::{scad_deriv, scad_penalty, scad_threshold, ScadParams};

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

#[test]
fn dcov_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(2..=8);
        let v = normals(&mut rng, n);
        let z: Vec<f64> = normals(&mut rng, n).iter().zip(&v).map(|(e, v)| e + 0.5 * v * v).collect();
        let p = dcov_parts(&v, &z).unwrap();
        let (s1, s2, s3, vn2) = dcov_naive(&v, &z);
        for (got, want) in [(p.s_n1, s1), (p.s_n2, s2), (p.s_n3, s3)] {
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-300), "{got} vs {want}");
        }
        assert!((p.vn2 - vn2.max(0.0)).abs() <= 1e-12 * s1.max(s2));
    }
}

#[test]
fn dcov_two_point_example() {
    let p = dcov_parts(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
    assert!((p.vn2 - 0.25).abs() < 1e-15);
    assert_eq!(dcov_naive(&[0.0, 1.0], &[0.0, 1.0]).3, 0.25);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn dc_stat_affine_and_order_invariant(
        seed in any::<u64>(),
        n in 5usize..40,
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = normals(&mut rng, n);
        let z: Vec<f64> = normals(&mut rng, n).iter().zip(&v).map(|(e, v)| e + v.abs()).collect();
        let t = dc_stat(&v, &z).unwrap();
        let z2: Vec<f64> = z.iter().map(|x| scale * x + shift).collect();
        let v2: Vec<f64> = v.iter().map(|x| -scale * x + shift).collect();
        prop_assert!((dc_stat(&v2, &z2).unwrap() - t).abs() <= 1e-10 * t.abs().max(1e-12));
        prop_assert!((dc_stat(&z, &v).unwrap() - t).abs() <= 1e-10 * t.abs().max(1e-12));
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let vp: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
        let zp: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
        prop_assert!((dc_stat(&vp, &zp).unwrap() - t).abs() <= 1e-10 * t.abs().max(1e-12));
    }
}

#[test]
fn screening_finds_dependent_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 300;
    let z = DMatrix::from_fn(n, 6, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    let v: Vec<f64> = (0..n).map(|i| z[(i, 4)].powi(2) + z[(i, 1)]).collect();
    let r = screen_topk(&v, &z, 2).unwrap();
    assert_eq!(r.selected, vec![1, 4]);
}

#[test]
fn kernel_moments_by_quadrature() {
    let m = |spec, k: i32| simpson(|u| u.powi(k) * kernel_eval(spec, u), -14.0, 14.0, 20_000);
    for spec in [KernelSpec::Second, KernelSpec::Fourth] {
        assert!((m(spec, 0) - 1.0).abs() < 1e-9);
        assert!(m(spec, 1).abs() < 1e-9);
        assert!(m(spec, 3).abs() < 1e-9);
    }
    assert!((m(KernelSpec::Second, 2) - 1.0).abs() < 1e-9);
    assert!(m(KernelSpec::Fourth, 2).abs() < 1e-9);
    assert!((m(KernelSpec::Fourth, 4) + 3.0).abs() < 1e-9);
}

#[test]
fn kernel_selfconv_by_quadrature() {
    for spec in [KernelSpec::Second, KernelSpec::Fourth] {
        for k in 0..50 {
            let u = -6.0 + 12.0 * k as f64 / 49.0;
            assert!((kernel_selfconv(spec, u) - selfconv_quad(spec, u)).abs() < 1e-8, "{spec} {u}");
        }
    }
}

#[test]
fn cv_matches_naive_leave_one_out() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for n in 3..=10 {
        for d in 1..=3 {
            for spec in [KernelSpec::Second, KernelSpec::Fourth] {
                let v = normals(&mut rng, n);
                let z: Vec<Vec<f64>> = (0..d).map(|_| normals(&mut rng, n)).collect();
                let h_v = rng.random_range(0.2..3.0);
                let h_z: Vec<f64> = (0..d).map(|_| rng.random_range(0.3..3.0)).collect();
                let want = cv_naive(&v, &z, h_v, &h_z, spec, |u| kernel_selfconv(spec, u));
                let s = make_sample(v, z);
                let h = bandwidths(h_v, h_z);
                let exact = cv_terms(&s, &h, spec, ConvolutionMethod::Exact).unwrap().cv;
                assert!((exact - want).abs() <= 1e-12 * want.abs(), "n={n} d={d} {exact} vs {want}");
                let grid = cv_terms(&s, &h, spec, ConvolutionMethod::Grid).unwrap().cv;
                assert!((grid - want).abs() <= 1e-9 * want.abs(), "grid n={n} d={d} {grid} vs {want}");
            }
        }
    }
}

#[test]
fn scad_penalty_landmarks() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let p = ScadParams::new(rng.random_range(0.01..3.0), rng.random_range(2.01..6.0)).unwrap();
        let (l, a) = (p.lambda, p.a);
        assert_eq!(scad_penalty(0.0, p), 0.0);
        assert!((scad_penalty(l, p) - l * l).abs() <= 1e-14 * l * l);
        for b in [a * l, a * l * 1.5, 1e6] {
            assert!((scad_penalty(b, p) - (a + 1.0) * l * l / 2.0).abs() <= 1e-12 * l * l);
        }
        let hi = 2.0 * a * l;
        let m = 10_000;
        let step = hi / m as f64;
        for k in 0..m {
            let (x0, x1) = (k as f64 * step, (k + 1) as f64 * step);
            assert!((scad_penalty(x1, p) - scad_penalty(x0, p)).abs() <= l * step * (1.0 + 1e-9));
        }
        for k in 1..200 {
            let b = hi * k as f64 / 200.0;
            if (b - l).abs() < 1e-4 || (b - a * l).abs() < 1e-4 {
                continue;
            }
            let e = 1e-6 * l.max(1e-3);
            let fd = (scad_penalty(b + e, p) - scad_penalty(b - e, p)) / (2.0 * e);
            assert!((fd - scad_deriv(b, p).unwrap()).abs() < 1e-6, "b={b} fd={fd}");
        }
    }
}

#[test]
fn threshold_matches_first_principles() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..2000 {
        let p = ScadParams::new(rng.random_range(0.05..2.0), rng.random_range(2.05..5.0)).unwrap();
        let z = rng.random_range(-12.0..12.0);
        assert!((scad_threshold(z, p) - scad_prox_oracle(z, p)).abs() < 1e-12);
    }
}

#[test]
fn orthonormal_design_reduces_to_thresholding() {
    let worst = orthonormal_max_error(100, 21);
    assert!(worst < 1e-6, "{worst}");
}
