//! Replication driver. Replication r draws its data from stream r of the
//! base seed, so results do not depend on scheduling or worker count.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mc::design::{gen_design, DesignSpec};
use crate::mc::report::{McReport, Timing};
use crate::probit::probit_fit;
use crate::rng::SeedSpec;
use crate::scad_gmm::{
    cv_select_gmm, default_gmm_lambda_grid, fit_scad_gmm, two_step_weight, GmmData, GmmOptions,
    IvLayout,
};
use crate::scad_ls::{cv_select_tuning, default_lambda_grid, fit_scad_ls, LsOptions, DEFAULT_A_GRID, KKT_TOL};
use crate::transform::{transform, TransformConfig};
use crate::DataTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    ScadLs,
    ScadGmm,
    Probit,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::ScadLs => "scad-ls",
            Estimator::ScadGmm => "scad-gmm",
            Estimator::Probit => "probit",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scad-ls" | "ls" => Ok(Estimator::ScadLs),
            "scad-gmm" | "gmm" => Ok(Estimator::ScadGmm),
            "probit" => Ok(Estimator::Probit),
            other => Err(Error::InvalidInput(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Pipeline settings shared by every replication.
#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub transform: TransformConfig,
    pub ls: LsOptions,
    pub gmm: GmmOptions,
    pub cv_folds: usize,
    pub a_grid: Vec<f64>,
    /// Refit SCAD-GMM with W = Ω̂⁻¹ from the identity-weight fit.
    pub gmm_two_step: bool,
}

impl Default for McConfig {
    /// Desk-scale settings: one simplex start with a 150-evaluation budget
    /// for the bandwidth search.
    fn default() -> Self {
        let mut transform = TransformConfig::default();
        transform.optimizer.restarts = 1;
        transform.optimizer.max_evals = Some(150);
        Self {
            transform,
            ls: LsOptions::default(),
            gmm: GmmOptions {
                compute_sigma: false,
                ..GmmOptions::default()
            },
            cv_folds: 10,
            a_grid: DEFAULT_A_GRID.to_vec(),
            gmm_two_step: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsRep {
    /// Intercept first.
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub a: f64,
    pub converged: bool,
    pub kkt_max: f64,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmRep {
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
    pub classified_valid: Vec<usize>,
    pub lambda: f64,
    pub a: f64,
    pub converged: bool,
    pub kkt_pass: bool,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbitRep {
    pub gamma: f64,
    /// β_l/γ, intercept first.
    pub ratios: Vec<f64>,
}

/// Outcome of one replication. Failed estimators leave their slot empty
/// and add an entry to `failures`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub index: usize,
    /// Conditioning-column indices kept by screening.
    pub screened: Option<Vec<usize>>,
    pub floor_hits: Option<usize>,
    pub ls: Option<LsRep>,
    pub gmm: Option<GmmRep>,
    pub probit: Option<ProbitRep>,
    pub failures: Vec<(Estimator, String)>,
}

fn regressor_matrix(data: &DataTable) -> Result<DMatrix<f64>> {
    let names = data.names_with_role(crate::Role::Regressor);
    let cols: Vec<&[f64]> = names.iter().map(|c| data.column(c)).collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(data.n_rows(), cols.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            cols[j - 1][i]
        }
    }))
}

fn run_ls(data: &DataTable, y_tilde: &[f64], cfg: &McConfig, seed: SeedSpec) -> Result<LsRep> {
    let x = regressor_matrix(data)?;
    let y = DVector::from_column_slice(y_tilde);
    let opts = LsOptions {
        unpenalized: vec![0],
        ..cfg.ls.clone()
    };
    let grid = default_lambda_grid(&y, x.ncols());
    let (params, _) = cv_select_tuning(&x, &y, &grid, &cfg.a_grid, cfg.cv_folds, seed, &opts)?;
    let fit = fit_scad_ls(&x, &y, params, None, &opts)?;
    Ok(LsRep {
        kkt_max: fit.kkt.max_residual,
        monotone: fit.is_monotone(1e-10),
        beta: fit.beta,
        lambda: params.lambda,
        a: params.a,
        converged: fit.converged,
    })
}

fn run_gmm(data: &DataTable, y_tilde: &[f64], cfg: &McConfig, seed: SeedSpec) -> Result<GmmRep> {
    let inst = data.names_with_role(crate::Role::Instrument);
    let (known, cands) = inst.split_first().ok_or_else(|| Error::InvalidInput("no instruments".into()))?;
    let layout = IvLayout::from_names(data, &[known], cands, &data.names_with_role(crate::Role::Regressor), true)?;
    let gd = GmmData::from_table(data, y_tilde, &layout)?;
    let p = gd.p_n();
    let eye = DMatrix::identity(p, p);
    let grid = default_gmm_lambda_grid(&gd);
    let (params, _) = cv_select_gmm(&gd, &eye, &grid, &cfg.a_grid, cfg.cv_folds, seed, &cfg.gmm)?;
    let mut fit = fit_scad_gmm(&gd, &eye, params, None, &cfg.gmm)?;
    if cfg.gmm_two_step {
        let w = two_step_weight(&gd, &fit)?;
        fit = fit_scad_gmm(&gd, &w, params, None, &cfg.gmm)?;
    }
    Ok(GmmRep {
        kkt_pass: fit.kkt_passes(),
        monotone: fit.is_monotone(1e-10),
        converged: fit.converged,
        classified_valid: fit.classified_valid,
        beta: fit.beta,
        eta: fit.eta,
        lambda: params.lambda,
        a: params.a,
    })
}

fn run_one(spec: DesignSpec, ests: &[Estimator], cfg: &McConfig, seed: SeedSpec) -> Result<RepRecord> {
    let (data, _) = gen_design(spec, seed)?;
    let mut rec = RepRecord {
        index: seed.stream_id as usize,
        screened: None,
        floor_hits: None,
        ls: None,
        gmm: None,
        probit: None,
        failures: Vec::new(),
    };
    let semi: Vec<Estimator> = ests.iter().copied().filter(|e| *e != Estimator::Probit).collect();
    if !semi.is_empty() {
        let tcfg = TransformConfig {
            seed: seed.derive(2),
            ..cfg.transform.clone()
        };
        match transform(&data, &tcfg) {
            Ok(t) => {
                rec.screened = Some(t.screen.selected.clone());
                rec.floor_hits = Some(t.floor_hits);
                for e in semi {
                    let res = match e {
                        Estimator::ScadLs => run_ls(&data, &t.y_tilde, cfg, seed.derive(3)).map(|r| rec.ls = Some(r)),
                        _ => run_gmm(&data, &t.y_tilde, cfg, seed.derive(3)).map(|r| rec.gmm = Some(r)),
                    };
                    if let Err(err) = res {
                        rec.failures.push((e, err.to_string()));
                    }
                }
            }
            Err(err) => {
                for e in semi {
                    rec.failures.push((e, format!("transform: {err}")));
                }
            }
        }
    }
    if ests.contains(&Estimator::Probit) {
        match probit_fit(&data) {
            Ok(f) => {
                rec.probit = Some(ProbitRep {
                    gamma: f.gamma,
                    ratios: f.ratios,
                })
            }
            Err(err) => rec.failures.push((Estimator::Probit, err.to_string())),
        }
    }
    Ok(rec)
}

/// Runs `r` replications of the requested estimators on `workers` threads.
pub fn run_replications(
    spec: DesignSpec,
    estimators: &[Estimator],
    r: usize,
    cfg: &McConfig,
    seed: u64,
    workers: usize,
) -> Result<McReport> {
    spec.validate()?;
    if r < 1 {
        return Err(Error::InvalidInput("at least one replication is required".into()));
    }
    if workers < 1 {
        return Err(Error::InvalidInput("at least one worker is required".into()));
    }
    let mut ests = estimators.to_vec();
    ests.sort();
    ests.dedup();
    for e in &ests {
        let ok = match e {
            Estimator::ScadGmm => spec.is_iv(),
            _ => !spec.is_iv(),
        };
        if !ok {
            return Err(Error::InvalidInput(format!("{e} does not apply to {spec}")));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let base = SeedSpec::new(seed, 0);
    let out: Vec<(RepRecord, f64)> = pool.install(|| {
        (0..r)
            .into_par_iter()
            .map(|i| {
                let t0 = Instant::now();
                let rec = run_one(spec, &ests, cfg, base.with_stream(i as u64));
                rec.map(|rec| (rec, t0.elapsed().as_secs_f64()))
            })
            .collect::<Result<_>>()
    })?;
    let (mut records, per_rep): (Vec<RepRecord>, Vec<f64>) = out.into_iter().unzip();
    records.sort_by_key(|r| r.index);
    let (_, truth) = gen_design(DesignSpec { n: 20, ..spec }, base)?;
    Ok(McReport {
        design: spec,
        estimators: ests,
        replications: r,
        seed,
        truth,
        records,
        kkt_tol: KKT_TOL,
        timing: Timing {
            total_seconds: start.elapsed().as_secs_f64(),
            per_rep_seconds: per_rep,
        },
    })
}
