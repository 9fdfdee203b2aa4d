use proptest::prelude::*;

use specreg::mc::report::median;
use specreg::mc::{
    gen_design, gen_design_with_errors, run_replications, summarize, CoefMetrics, DesignSpec, Estimator, MadVariant, McConfig, TableLayout,
};
use specreg::transform::{transform, TransformConfig};
use specreg::{Error, SeedSpec};

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Large-sample standard error of a sample correlation under normality.
fn corr_se(rho: f64, n: usize) -> f64 {
    (1.0 - rho * rho) / (n as f64).sqrt()
}

fn quick_config() -> McConfig {
    let mut cfg = McConfig::default();
    cfg.transform.optimizer.max_evals = Some(40);
    cfg.cv_folds = 5;
    cfg
}

#[test]
fn single_replication_metrics() {
    let m = CoefMetrics::from_estimates(&[1.3], 1.0, MadVariant::AboutMedian).unwrap();
    assert!((m.meanb - 0.3).abs() < 1e-15);
    assert!((m.rmse - 0.3).abs() < 1e-15);
    assert!((m.medb - 0.3).abs() < 1e-15);
    assert_eq!(m.mad, 0.0);
    let t = CoefMetrics::from_estimates(&[1.3], 1.0, MadVariant::AboutTruth).unwrap();
    assert!((t.mad - 0.3).abs() < 1e-15);
    assert!(matches!(
        CoefMetrics::from_estimates(&[], 1.0, MadVariant::AboutMedian),
        Err(Error::NothingToSummarize)
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn medb_and_mad_ignore_outlying_extreme(
        est in prop::collection::vec(-5.0f64..5.0, 3..40),
        push in 0.0f64..1e6,
        truth in -2.0f64..2.0,
    ) {
        let base = CoefMetrics::from_estimates(&est, truth, MadVariant::AboutMedian).unwrap();
        let med = median(&est);
        let (k, _) = est
            .iter()
            .enumerate()
            .max_by(|a, b| (a.1 - med).abs().total_cmp(&(b.1 - med).abs()))
            .unwrap();
        let mut moved = est.clone();
        moved[k] += push * (est[k] - med).signum();
        let m = CoefMetrics::from_estimates(&moved, truth, MadVariant::AboutMedian).unwrap();
        prop_assert!((m.medb - base.medb).abs() < 1e-12);
        prop_assert!((m.mad - base.mad).abs() < 1e-12);
    }
}

#[test]
fn ls_designs_match_population_moments() {
    let n = 200_000;
    // Corr(V, X1), Corr(V, X2) from the design formulas
    let d1 = (1.0 / 15.409_468f64.sqrt(), 0.398_942_28 / 15.409_468f64.sqrt());
    let v3 = 2.25 + 0.0625 + 2.0 * 0.25 * 0.398_942_28 + 4.0 * std::f64::consts::PI.powi(2) / 3.0;
    let d3 = ((1.0 + 0.25 * 0.398_942_28) / v3.sqrt(), (0.25 + 0.398_942_28) / v3.sqrt());
    assert!((d1.0 - 0.2547).abs() < 1e-4 && (d3.0 - 0.2778).abs() < 1e-4);
    for (id, (r1, r2)) in [(1u8, d1), (3, d3)] {
        let (t, _) = gen_design(DesignSpec::new(id, n, 15).unwrap(), SeedSpec::new(5, 0)).unwrap();
        let v = t.column("v").unwrap();
        let (x1, x2, x3) = (t.column("x1").unwrap(), t.column("x2").unwrap(), t.column("x3").unwrap());
        assert!((corr(v, x1) - r1).abs() < 3.0 * corr_se(r1, n), "design {id}: {}", corr(v, x1));
        assert!((corr(v, x2) - r2).abs() < 3.0 * corr_se(r2, n), "design {id}: {}", corr(v, x2));
        let rho = if id == 3 { 0.25 } else { 0.0 };
        assert!((corr(x2, x3) - rho).abs() < 3.0 * corr_se(rho, n));
        let var = x1.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
    }
}

fn var_with_se(e: &[f64]) -> (f64, f64) {
    let n = e.len() as f64;
    let sq: Vec<f64> = e.iter().map(|x| x * x).collect();
    let m = sq.iter().sum::<f64>() / n;
    let v4 = sq.iter().map(|s| (s - m).powi(2)).sum::<f64>() / n;
    (m, (v4 / n).sqrt())
}

#[test]
fn error_variances() {
    let n = 200_000;
    let (_, _, e1) = gen_design_with_errors(DesignSpec::new(1, n, 15).unwrap(), SeedSpec::new(8, 0)).unwrap();
    let (m, se) = var_with_se(&e1);
    assert!((m - std::f64::consts::PI.powi(2) / 3.0).abs() < 3.0 * se, "{m}");
    // E exp(2|X|/1.8) = 2 exp(s²/2) Φ(s) with s = 2/1.8
    let s = 2.0 / 1.8;
    let want = 2.0 * (s * s / 2.0f64).exp() * 0.866_739_74;
    let (_, _, e2) = gen_design_with_errors(DesignSpec::new(2, n, 15).unwrap(), SeedSpec::new(8, 0)).unwrap();
    let (m, se) = var_with_se(&e2);
    assert!((m - want).abs() < 3.0 * se, "{m} vs {want}");
}

#[test]
fn iv_design_matches_population_moments() {
    let n = 200_000;
    let (t, truth) = gen_design(DesignSpec::new(4, n, 15).unwrap(), SeedSpec::new(6, 0)).unwrap();
    let zs = t.column("zstar").unwrap();
    let z1 = t.column("z1").unwrap();
    assert!((corr(zs, z1) - 0.5).abs() < 3.0 * corr_se(0.5, n));
    let x = t.column("x").unwrap();
    // Z2 shares e_3 with X; Z1 shares e_2
    let r = 0.5 / 3f64.sqrt();
    assert!((corr(x, t.column("z2").unwrap()) - r).abs() < 3.0 * corr_se(r, n));
    let r1 = 1.0 / 6f64.sqrt();
    assert!((corr(x, z1) - r1).abs() < 3.0 * corr_se(r1, n));
    assert_eq!(truth.valid.len() + truth.invalid.len(), 13);
}

#[test]
fn replications_do_not_depend_on_worker_count() {
    let cfg = quick_config();
    let spec = DesignSpec::new(1, 120, 15).unwrap();
    let ests = [Estimator::ScadLs, Estimator::Probit];
    let a = run_replications(spec, &ests, 4, &cfg, 77, 1).unwrap();
    let b = run_replications(spec, &ests, 4, &cfg, 77, 8).unwrap();
    assert_eq!(a, b);
    let body = |r: &specreg::mc::McReport| {
        r.to_csv(MadVariant::AboutMedian)
            .lines()
            .filter(|l| !l.starts_with("timing,"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(body(&a), body(&b));
    assert_eq!(a.total_failures(), 0);

    let spec = DesignSpec::new(4, 150, 15).unwrap();
    let a = run_replications(spec, &[Estimator::ScadGmm], 3, &cfg, 78, 1).unwrap();
    let b = run_replications(spec, &[Estimator::ScadGmm], 3, &cfg, 78, 8).unwrap();
    assert_eq!(a, b);
}

#[test]
fn summaries_follow_table_layouts() {
    let cfg = quick_config();
    let spec = DesignSpec::new(1, 100, 15).unwrap();
    let rep = run_replications(spec, &[Estimator::ScadLs], 2, &cfg, 3, 1).unwrap();
    let a = summarize(&rep, "1A".parse().unwrap(), MadVariant::AboutMedian).unwrap();
    assert_eq!(
        a[0],
        ["n", "p_n", "b2 MEANB", "b2 RMSE", "b2 MEDB", "b2 MAD", "b3 MEANB", "b3 RMSE", "b3 MEDB", "b3 MAD"]
    );
    assert_eq!(a[1].len(), a[0].len());
    let b = summarize(&rep, TableLayout::Selection, MadVariant::AboutMedian).unwrap();
    assert_eq!(b[0].len(), 6);
    assert!(matches!(
        summarize(&rep, TableLayout::Probit, MadVariant::AboutMedian),
        Err(Error::NothingToSummarize)
    ));
    let mut empty = rep.clone();
    empty.estimators.clear();
    assert!(matches!(
        summarize(&empty, TableLayout::Estimates, MadVariant::AboutMedian),
        Err(Error::NothingToSummarize)
    ));

    let spec = DesignSpec::new(4, 100, 15).unwrap();
    let rep = run_replications(spec, &[Estimator::ScadGmm], 1, &cfg, 3, 1).unwrap();
    let b = summarize(&rep, "4B".parse().unwrap(), MadVariant::AboutMedian).unwrap();
    assert_eq!(b[0][2..], ["Pr((Z*,Z1) in Z~)", "Pr(Z_B and Z^ empty)", "E|Z_A and Z^|"]);
}

#[test]
fn transformed_outcome_centres_on_index() {
    let (t, truth) = gen_design(DesignSpec::new(1, 1000, 15).unwrap(), SeedSpec::new(12, 0)).unwrap();
    let out = transform(&t, &TransformConfig::default()).unwrap();
    // logistic tails put a few percent of v below the density floor
    assert!(out.floor_hits < 80, "{}", out.floor_hits);
    let x2 = t.column("x2").unwrap();
    let x3 = t.column("x3").unwrap();
    let resid: f64 = (0..t.n_rows())
        .map(|i| out.y_tilde[i] - truth.beta[2] * x2[i] - truth.beta[3] * x3[i])
        .sum::<f64>()
        / t.n_rows() as f64;
    assert!(resid.abs() < 0.2, "{resid}");
    let kept = out.screen.ranked_selection();
    assert!(kept.contains(&0));
}
