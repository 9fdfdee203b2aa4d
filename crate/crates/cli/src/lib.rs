//! Command-line front end. [`run`] parses arguments, executes one command
//! and returns the process exit code: 0 on success, 1 for usage or data
//! errors, 2 for numerical failures.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use specreg::config::KeyValueConfig;
use specreg::dcov::{screen_threshold, screen_topk, ScreenReport};
use specreg::density::{select_bandwidths, DensitySample, OptimizerConfig};
use specreg::kernel::KernelSpec;
use specreg::mc::report::render;
use specreg::mc::{run_replications, summarize, DesignSpec, Estimator, MadVariant, McConfig, TableLayout};
use specreg::probit::probit_fit;
use specreg::scad::ScadParams;
use specreg::scad_gmm::{
    cv_select_gmm, default_gmm_lambda_grid, fit_scad_gmm, two_step_weight, GmmData, GmmOptions, IvLayout,
};
use specreg::scad_ls::{cv_select_tuning, default_lambda_grid, fit_scad_ls, LsOptions, DEFAULT_A_GRID, KKT_TOL};
use specreg::transform::{transform, TransformConfig, TransformedData};
use specreg::{load_csv, Column, DataTable, Role, SeedSpec};

#[derive(Debug, Parser)]
#[command(name = "specreg", version, about = "Special-regressor estimation of high-dimensional binary choice models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank conditioning columns by the distance-covariance statistic
    Screen(ScreenArgs),
    /// Cross-validated conditional density of the special regressor
    Density(DensityArgs),
    /// Screening, density fit and the transformed outcome
    Transform(TransformArgs),
    /// SCAD-penalized least squares on the transformed outcome
    FitLs(FitLsArgs),
    /// SCAD-penalized GMM with instrument-validity selection
    FitGmm(FitGmmArgs),
    /// Probit benchmark with ratios to the special-regressor coefficient
    Probit(ProbitArgs),
    /// Monte Carlo replications of a simulation design
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory (created if missing)
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// key = value configuration file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base random seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// CSV file with a header row
    #[arg(long)]
    input: PathBuf,
    /// Special regressor column
    #[arg(long)]
    v: String,
}

#[derive(Debug, Args)]
struct DensityOpts {
    /// Number of screened conditioning columns kept
    #[arg(long)]
    p_tilde: Option<usize>,
    /// Kernel order for evaluating the density (2 or 4)
    #[arg(long)]
    kernel_order: Option<u32>,
    /// Kernel order inside the bandwidth cross-validation (2 or 4)
    #[arg(long)]
    cv_kernel_order: Option<u32>,
    /// Lower clamp on the density in the transformed outcome
    #[arg(long)]
    floor: Option<f64>,
    /// Evaluate the density with each observation's own term included
    #[arg(long)]
    no_loo: bool,
    /// Simplex starts for the bandwidth search
    #[arg(long)]
    restarts: Option<usize>,
    /// Evaluation budget per simplex start
    #[arg(long)]
    max_evals: Option<usize>,
}

#[derive(Debug, Args)]
struct TuningOpts {
    /// Fixed penalty level (skips cross-validation)
    #[arg(long)]
    lambda: Option<f64>,
    /// Fixed SCAD shape parameter (> 2)
    #[arg(long)]
    a: Option<f64>,
    /// Cross-validation folds
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Debug, Args)]
struct ScreenArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Candidate columns, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    z: Vec<String>,
    /// Keep the K largest statistics
    #[arg(long, conflicts_with = "threshold")]
    top: Option<usize>,
    /// Keep statistics above c (log n)^(3/4)
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct DensityArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Conditioning columns, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    z: Vec<String>,
    #[command(flatten)]
    density: DensityOpts,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct TransformArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Binary outcome column
    #[arg(long)]
    y: String,
    /// Candidate conditioning columns, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    z: Vec<String>,
    #[command(flatten)]
    density: DensityOpts,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct FitLsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    y: String,
    /// Regressor columns, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    x: Vec<String>,
    /// Conditioning columns for the density (default: the regressors)
    #[arg(long, value_delimiter = ',')]
    z: Vec<String>,
    /// Leave out the intercept column
    #[arg(long)]
    no_intercept: bool,
    #[command(flatten)]
    tuning: TuningOpts,
    #[command(flatten)]
    density: DensityOpts,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct FitGmmArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    y: String,
    /// Regressor columns, comma separated (an intercept is added)
    #[arg(long, value_delimiter = ',', required = true)]
    x: Vec<String>,
    /// Instruments known to be valid (an intercept is added)
    #[arg(long, value_delimiter = ',')]
    known_valid: Vec<String>,
    /// Candidate instruments whose validity is selected
    #[arg(long, value_delimiter = ',')]
    candidates: Vec<String>,
    /// Refit with the weight matrix inverse of the estimated moment variance
    #[arg(long)]
    two_step: bool,
    #[command(flatten)]
    tuning: TuningOpts,
    #[command(flatten)]
    density: DensityOpts,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ProbitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    y: String,
    /// Regressor columns, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    x: Vec<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Design number 1..6
    #[arg(long)]
    design: Option<u8>,
    /// Sample size
    #[arg(long)]
    n: Option<usize>,
    /// Number of regressors or instruments p_n (15, 30 or 50)
    #[arg(long)]
    p: Option<usize>,
    /// Replications
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads for the replication pool
    #[arg(long)]
    workers: Option<usize>,
    /// Estimators, comma separated (scad-ls, scad-gmm, probit)
    #[arg(long, value_delimiter = ',')]
    estimators: Vec<String>,
    /// Median absolute deviation about the median or the truth
    #[arg(long)]
    mad: Option<String>,
    /// Use the full bandwidth-search budget instead of the desk-scale one
    #[arg(long)]
    full_budget: bool,
    #[command(flatten)]
    density: DensityOpts,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(specreg::Error),
}

impl From<specreg::Error> for CliError {
    fn from(e: specreg::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

const CONFIG_KEYS: &[&str] = &[
    "seed",
    "p_tilde",
    "kernel_order",
    "cv_kernel_order",
    "floor",
    "loo",
    "restarts",
    "max_evals",
    "lambda",
    "a",
    "folds",
    "top",
    "threshold",
    "design",
    "n",
    "p",
    "reps",
    "workers",
    "estimators",
    "mad",
];

struct Ctx {
    cfg: KeyValueConfig,
    out: PathBuf,
    seed: u64,
}

impl Ctx {
    fn new(common: &Common) -> CliResult<Self> {
        let cfg = match &common.config {
            Some(p) => KeyValueConfig::load(p)?,
            None => KeyValueConfig::default(),
        };
        cfg.check_keys(CONFIG_KEYS)?;
        std::fs::create_dir_all(&common.out).map_err(|source| specreg::Error::Io {
            path: common.out.clone(),
            source,
        })?;
        let seed = match common.seed {
            Some(s) => s,
            None => cfg.get("seed")?.unwrap_or(1),
        };
        Ok(Self {
            cfg,
            out: common.out.clone(),
            seed,
        })
    }

    /// Flag value if given, else the config entry, else `None`.
    fn pick<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => Ok(self.cfg.get(key)?),
        }
    }

    fn write(&self, name: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.out.join(name);
        std::fs::write(&path, text).map_err(|source| specreg::Error::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    fn transform_config(&self, d: &DensityOpts) -> CliResult<TransformConfig> {
        let mut t = TransformConfig {
            seed: SeedSpec::new(self.seed, 0),
            ..TransformConfig::default()
        };
        if let Some(p) = self.pick(d.p_tilde, "p_tilde")? {
            t.p_tilde = p;
        }
        if let Some(o) = self.pick(d.kernel_order, "kernel_order")? {
            t.kernel_order = KernelSpec::from_order(o)?;
        }
        if let Some(o) = self.pick(d.cv_kernel_order, "cv_kernel_order")? {
            t.cv_kernel_order = KernelSpec::from_order(o)?;
        }
        if let Some(f) = self.pick(d.floor, "floor")? {
            t.density_floor = f;
        }
        t.leave_one_out = !d.no_loo && self.cfg.get::<bool>("loo")?.unwrap_or(true);
        t.optimizer = self.optimizer(d)?;
        t.validate()?;
        Ok(t)
    }

    fn optimizer(&self, d: &DensityOpts) -> CliResult<OptimizerConfig> {
        let mut o = OptimizerConfig {
            seed: SeedSpec::new(self.seed, 0).derive(0xB4D),
            ..OptimizerConfig::default()
        };
        if let Some(r) = self.pick(d.restarts, "restarts")? {
            o.restarts = r;
        }
        if let Some(m) = self.pick(d.max_evals, "max_evals")? {
            o.max_evals = Some(m);
        }
        Ok(o)
    }
}

fn role_map(pairs: &[(&[String], Role)]) -> CliResult<HashMap<String, Role>> {
    let mut map = HashMap::new();
    for (names, role) in pairs {
        for n in names.iter() {
            if let Some(prev) = map.insert(n.clone(), *role) {
                if prev != *role {
                    return Err(usage(format!("column '{n}' given conflicting roles {prev} and {role}")));
                }
            }
        }
    }
    Ok(map)
}

fn load(path: &Path, roles: &HashMap<String, Role>) -> CliResult<DataTable> {
    let data = load_csv(path, roles)?;
    for name in roles.keys() {
        data.column_index(name)?;
    }
    Ok(data)
}

fn matrix(data: &DataTable, names: &[String]) -> CliResult<DMatrix<f64>> {
    let cols: Vec<&[f64]> = names.iter().map(|c| data.column(c)).collect::<Result<_, _>>()?;
    Ok(DMatrix::from_fn(data.n_rows(), cols.len(), |i, j| cols[j][i]))
}

fn screen_csv(report: &ScreenReport, names: &[String]) -> String {
    let mut s = String::from("column,statistic,rank,selected\n");
    for (rank, &(j, stat)) in report.stats.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{:?},{},{}",
            names[j],
            stat,
            rank + 1,
            u8::from(report.selected.contains(&j))
        );
    }
    s
}

fn cmd_screen(a: ScreenArgs) -> CliResult<()> {
    let ctx = Ctx::new(&a.common)?;
    let roles = role_map(&[
        (std::slice::from_ref(&a.input.v), Role::SpecialRegressor),
        (&a.z, Role::Instrument),
    ])?;
    let data = load(&a.input.input, &roles)?;
    let v = data.special_regressor()?;
    let z = matrix(&data, &a.z)?;
    let top = ctx.pick(a.top, "top")?;
    let thr = ctx.pick(a.threshold, "threshold")?;
    let report = match (top, thr) {
        (Some(_), Some(_)) => return Err(usage("--top and --threshold are mutually exclusive")),
        (Some(k), None) => screen_topk(v, &z, k)?,
        (None, Some(c)) => screen_threshold(v, &z, c)?,
        (None, None) => screen_topk(v, &z, 4.min(a.z.len()))?,
    };
    let path = ctx.write("screen.csv", &screen_csv(&report, &a.z))?;
    let sel: Vec<&str> = report.ranked_selection().iter().map(|&j| a.z[j].as_str()).collect();
    println!("selected: {}", sel.join(","));
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_density(a: DensityArgs) -> CliResult<()> {
    let ctx = Ctx::new(&a.common)?;
    let roles = role_map(&[
        (std::slice::from_ref(&a.input.v), Role::SpecialRegressor),
        (&a.z, Role::Instrument),
    ])?;
    let data = load(&a.input.input, &roles)?;
    let tcfg = ctx.transform_config(&a.density)?;
    let v = data.special_regressor()?;
    let z = matrix(&data, &a.z)?;
    let sample = Arc::new(DensitySample::from_matrix(v, &z)?);
    let model = select_bandwidths(sample, tcfg.cv_kernel_order, &tcfg.optimizer)?.with_kernel(tcfg.kernel_order);
    let fhat = if tcfg.leave_one_out {
        model.cond_density_loo()
    } else {
        model.cond_density_at_sample()
    };
    let mut report = String::new();
    let _ = writeln!(report, "conditioning = {}", a.z.join(","));
    let _ = write!(report, "{model}");
    let p1 = ctx.write("density.txt", &report)?;
    let mut csv = String::from("row,fhat\n");
    for (i, f) in fhat.iter().enumerate() {
        let _ = writeln!(csv, "{i},{f:?}");
    }
    let p2 = ctx.write("density.csv", &csv)?;
    print!("{report}");
    println!("wrote {} and {}", p1.display(), p2.display());
    Ok(())
}

fn transform_report(t: &TransformedData) -> String {
    let mut s = String::new();
    let kept: Vec<&str> = t.screen.ranked_selection().iter().map(|&j| t.conditioning[j].as_str()).collect();
    let _ = writeln!(s, "screened = {}", kept.join(","));
    let _ = writeln!(s, "floor_hits = {}", t.floor_hits);
    let _ = write!(s, "{}", t.density_model);
    s
}

fn run_transform(data: &DataTable, cfg: &TransformConfig) -> CliResult<TransformedData> {
    Ok(transform(data, cfg)?)
}

fn cmd_transform(a: TransformArgs) -> CliResult<()> {
    let ctx = Ctx::new(&a.common)?;
    let roles = role_map(&[
        (std::slice::from_ref(&a.y), Role::Outcome),
        (std::slice::from_ref(&a.input.v), Role::SpecialRegressor),
        (&a.z, Role::Instrument),
    ])?;
    let data = load(&a.input.input, &roles)?;
    let t = run_transform(&data, &ctx.transform_config(&a.density)?)?;
    let out = data.with_column(Column::new("y_tilde", None, t.y_tilde.clone()))?;
    let path = ctx.out.join("transformed.csv");
    out.write_csv(&path)?;
    let report = transform_report(&t);
    ctx.write("transform.txt", &report)?;
    print!("{report}");
    println!("wrote {}", path.display());
    Ok(())
}

fn tuning_grid(t: &TuningOpts, ctx: &Ctx, default_lambda: Vec<f64>) -> CliResult<(Vec<f64>, Vec<f64>, usize)> {
    let lambda = ctx.pick(t.lambda, "lambda")?;
    let a = ctx.pick(t.a, "a")?;
    let folds = ctx.pick(t.folds, "folds")?.unwrap_or(10);
    let lg = lambda.map_or(default_lambda, |l| vec![l]);
    let ag = a.map_or(DEFAULT_A_GRID.to_vec(), |a| vec![a]);
    Ok((lg, ag, folds))
}

fn cmd_fit_ls(a: FitLsArgs) -> CliResult<()> {
    let ctx = Ctx::new(&a.common)?;
    let roles = role_map(&[
        (std::slice::from_ref(&a.y), Role::Outcome),
        (std::slice::from_ref(&a.input.v), Role::SpecialRegressor),
        (&a.x, Role::Regressor),
        (&a.z, Role::Instrument),
    ])?;
    let data = load(&a.input.input, &roles)?;
    let t = run_transform(&data, &ctx.transform_config(&a.density)?)?;
    let xr = matrix(&data, &a.x)?;
    let intercept = !a.no_intercept;
    let off = usize::from(intercept);
    let x = DMatrix::from_fn(data.n_rows(), xr.ncols() + off, |i, j| {
        if intercept && j == 0 {
            1.0
        } else {
            xr[(i, j - off)]
        }
    });
    let y = DVector::from_column_slice(&t.y_tilde);
    let opts = LsOptions {
        unpenalized: if intercept { vec![0] } else { Vec::new() },
        ..LsOptions::default()
    };
    let (lg, ag, folds) = tuning_grid(&a.tuning, &ctx, default_lambda_grid(&y, x.ncols()))?;
    let params = if lg.len() == 1 && ag.len() == 1 {
        ScadParams::new(lg[0], ag[0])?
    } else {
        cv_select_tuning(&x, &y, &lg, &ag, folds, SeedSpec::new(ctx.seed, 0).derive(3), &opts)?.0
    };
    let fit = fit_scad_ls(&x, &y, params, None, &opts)?;
    let names: Vec<String> = (if intercept { vec!["(intercept)".to_string()] } else { vec![] })
        .into_iter()
        .chain(a.x.iter().cloned())
        .collect();
    let mut s = String::from("estimator = scad-ls\n");
    let _ = writeln!(s, "n = {}", data.n_rows());
    let _ = writeln!(s, "lambda = {:?}\na = {:?}", params.lambda, params.a);
    let _ = writeln!(s, "converged = {}\niterations = {}", fit.converged, fit.iterations);
    let _ = writeln!(s, "objective = {:?}", fit.objective);
    let _ = writeln!(
        s,
        "kkt_max_residual = {:e}\nkkt_pass = {}",
        fit.kkt.max_residual,
        fit.kkt.passes(KKT_TOL)
    );
    for (n, b) in names.iter().zip(&fit.beta) {
        let _ = writeln!(s, "beta[{n}] = {b:?}");
    }
    let active: Vec<&str> = fit.active.iter().map(|&j| names[j].as_str()).collect();
    let _ = writeln!(s, "active = {}", active.join(","));
    s.push_str(&transform_report(&t));
    let path = ctx.write("fit.txt", &s)?;
    print!("{s}");
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_fit_gmm(a: FitGmmArgs) -> CliResult<()> {
    if a.known_valid.is_empty() {
        return Err(usage("fit-gmm requires --known-valid"));
    }
    if a.candidates.is_empty() {
        return Err(usage("fit-gmm requires --candidates"));
    }
    let ctx = Ctx::new(&a.common)?;
    let inst: Vec<String> = a.known_valid.iter().chain(&a.candidates).cloned().collect();
    let roles = role_map(&[
        (std::slice::from_ref(&a.y), Role::Outcome),
        (std::slice::from_ref(&a.input.v), Role::SpecialRegressor),
        (&a.x, Role::Regressor),
        (&inst, Role::Instrument),
    ])?;
    let data = load(&a.input.input, &roles)?;
    let t = run_transform(&data, &ctx.transform_config(&a.density)?)?;
    fn strs(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }
    let layout = IvLayout::from_names(&data, &strs(&a.known_valid), &strs(&a.candidates), &strs(&a.x), true)?;
    let gd = GmmData::from_table(&data, &t.y_tilde, &layout)?;
    let p = gd.p_n();
    let eye = DMatrix::identity(p, p);
    let opts = GmmOptions::default();
    let (lg, ag, folds) = tuning_grid(&a.tuning, &ctx, default_gmm_lambda_grid(&gd))?;
    let params = if lg.len() == 1 && ag.len() == 1 {
        ScadParams::new(lg[0], ag[0])?
    } else {
        cv_select_gmm(&gd, &eye, &lg, &ag, folds, SeedSpec::new(ctx.seed, 0).derive(3), &opts)?.0
    };
    let mut fit = fit_scad_gmm(&gd, &eye, params, None, &opts)?;
    if a.two_step {
        let w = two_step_weight(&gd, &fit)?;
        fit = fit_scad_gmm(&gd, &w, params, None, &opts)?;
    }
    let bnames: Vec<String> = std::iter::once("(intercept)".to_string()).chain(a.x.iter().cloned()).collect();
    let se = fit.std_errors(gd.n());
    let mut s = String::from("estimator = scad-gmm\n");
    let _ = writeln!(s, "n = {}\np_n = {p}", gd.n());
    let _ = writeln!(s, "weight = {}", if a.two_step { "two-step" } else { "identity" });
    let _ = writeln!(s, "lambda = {:?}\na = {:?}", params.lambda, params.a);
    let _ = writeln!(s, "converged = {}\niterations = {}", fit.converged, fit.iterations);
    let _ = writeln!(s, "objective = {:?}", fit.objective);
    let _ = writeln!(s, "kkt_pass = {}", fit.kkt_passes());
    for (j, (n, b)) in bnames.iter().zip(&fit.beta).enumerate() {
        let _ = write!(s, "beta[{n}] = {b:?}");
        if let Some(se) = &se {
            let _ = write!(s, "  se = {:?}", se[j]);
        }
        s.push('\n');
    }
    for (j, c) in a.candidates.iter().enumerate() {
        let k = &fit.kkt[j];
        let _ = writeln!(
            s,
            "eta[{c}] = {:?}  score = {:?}  {}",
            fit.eta[j],
            k.score,
            if fit.eta[j] == 0.0 { "valid" } else { "invalid" }
        );
    }
    let valid: Vec<&str> = fit.classified_valid.iter().map(|&j| a.candidates[j].as_str()).collect();
    let _ = writeln!(s, "classified_valid = {}", valid.join(","));
    s.push_str(&transform_report(&t));
    let path = ctx.write("fit.txt", &s)?;
    print!("{s}");
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_probit(a: ProbitArgs) -> CliResult<()> {
    let ctx = Ctx::new(&a.common)?;
    let roles = role_map(&[
        (std::slice::from_ref(&a.y), Role::Outcome),
        (std::slice::from_ref(&a.input.v), Role::SpecialRegressor),
        (&a.x, Role::Regressor),
    ])?;
    let data = load(&a.input.input, &roles)?;
    let fit = probit_fit(&data)?;
    let mut s = String::from("estimator = probit\n");
    let _ = writeln!(s, "n = {}", data.n_rows());
    let _ = writeln!(s, "gamma = {:?}", fit.gamma);
    let _ = writeln!(s, "iterations = {}\nloglik = {:?}", fit.mle.iterations, fit.mle.loglik);
    for ((n, b), r) in fit.names.iter().zip(&fit.beta).zip(&fit.ratios) {
        let _ = writeln!(s, "beta[{n}] = {b:?}  ratio = {r:?}");
    }
    let path = ctx.write("fit.txt", &s)?;
    print!("{s}");
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let ctx = Ctx::new(&a.common)?;
    let id = ctx.pick(a.design, "design")?.ok_or_else(|| usage("simulate requires --design"))?;
    let n = ctx.pick(a.n, "n")?.unwrap_or(500);
    let p = ctx.pick(a.p, "p")?.unwrap_or(15);
    let reps = ctx.pick(a.reps, "reps")?.unwrap_or(200);
    let workers = ctx.pick(a.workers, "workers")?.unwrap_or(1);
    let mad: MadVariant = ctx.pick(a.mad, "mad")?.map(|m| m.parse()).transpose()?.unwrap_or_default();
    let spec = DesignSpec::new(id, n, p)?;
    let est_names: Vec<String> = if a.estimators.is_empty() {
        ctx.cfg
            .get_str("estimators")
            .map(|s| s.split(',').map(|t| t.trim().to_string()).collect())
            .unwrap_or_default()
    } else {
        a.estimators.clone()
    };
    let estimators: Vec<Estimator> = if est_names.is_empty() {
        if spec.is_iv() {
            vec![Estimator::ScadGmm]
        } else {
            vec![Estimator::ScadLs, Estimator::Probit]
        }
    } else {
        est_names.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    let mut cfg = McConfig::default();
    let desk = cfg.transform.optimizer.clone();
    cfg.transform = ctx.transform_config(&a.density)?;
    if !a.full_budget {
        if a.density.restarts.is_none() && ctx.cfg.get_str("restarts").is_none() {
            cfg.transform.optimizer.restarts = desk.restarts;
        }
        if a.density.max_evals.is_none() && ctx.cfg.get_str("max_evals").is_none() {
            cfg.transform.optimizer.max_evals = desk.max_evals;
        }
    }
    if let Some(f) = ctx.pick(None, "folds")? {
        cfg.cv_folds = f;
    }
    let report = run_replications(spec, &estimators, reps, &cfg, ctx.seed, workers)?;
    let p1 = ctx.out.join("mc_report.csv");
    report.write_csv(&p1, mad)?;
    ctx.write("replications.csv", &report.replications_csv())?;
    let mut tables = format!("{spec}, {reps} replications, seed {}\n", ctx.seed);
    for (label, layout) in [
        ("A", TableLayout::Estimates),
        ("B", TableLayout::Selection),
        ("C", TableLayout::Probit),
    ] {
        if let Ok(rows) = summarize(&report, layout, mad) {
            let _ = writeln!(tables, "\nTable {id}{label}\n{}", render(&rows));
        }
    }
    let _ = writeln!(tables, "failures = {}", report.total_failures());
    ctx.write("mc_tables.txt", &tables)?;
    print!("{tables}");
    println!("wrote {}", p1.display());
    Ok(())
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let res = match cli.command {
        Command::Screen(a) => cmd_screen(a),
        Command::Density(a) => cmd_density(a),
        Command::Transform(a) => cmd_transform(a),
        Command::FitLs(a) => cmd_fit_ls(a),
        Command::FitGmm(a) => cmd_fit_gmm(a),
        Command::Probit(a) => cmd_probit(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match res {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}
