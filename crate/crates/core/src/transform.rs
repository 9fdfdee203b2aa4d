//! Screening, density fitting and the transformed outcome
//! ỹ = (y − 1(v > 0)) / f̂(v | z).

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::data::{DataTable, Role};
use crate::dcov::{screen_topk, ScreenReport};
use crate::density::{select_bandwidths, DensityModel, DensitySample, OptimizerConfig};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::rng::SeedSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct TransformConfig {
    /// Number of screened conditioning variables kept for the density.
    pub p_tilde: usize,
    /// Kernel used to evaluate f̂(v | z) once bandwidths are chosen.
    pub kernel_order: KernelSpec,
    /// Kernel used inside the bandwidth cross-validation.
    pub cv_kernel_order: KernelSpec,
    pub density_floor: f64,
    /// Evaluate f̂(v_i | z_i) without observation i's own kernel term.
    pub leave_one_out: bool,
    pub optimizer: OptimizerConfig,
    pub seed: SeedSpec,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            p_tilde: 4,
            kernel_order: KernelSpec::Second,
            cv_kernel_order: KernelSpec::Second,
            density_floor: 0.01,
            leave_one_out: true,
            optimizer: OptimizerConfig::default(),
            seed: SeedSpec::default(),
        }
    }
}

impl TransformConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_tilde < 1 {
            return Err(Error::InvalidInput("p_tilde must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.density_floor) {
            return Err(Error::InvalidInput(format!(
                "density floor must lie in [0, 0.5), got {}",
                self.density_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TransformedData {
    pub y_tilde: Vec<f64>,
    /// Raw f̂(v_i | z_i) (leave-one-out unless configured otherwise), before
    /// flooring.
    pub fhat: Vec<f64>,
    pub density_model: DensityModel,
    /// Screening over the conditioning columns (indices into `conditioning`).
    pub screen: ScreenReport,
    /// Names of the candidate conditioning columns, in screening index order.
    pub conditioning: Vec<String>,
    pub floor_hits: usize,
}

/// (y − 1(v > 0)) / max(fhat, floor); exactly 0 when the numerator is 0.
pub fn ytilde_one(y: f64, v: f64, fhat: f64, floor: f64) -> Result<f64> {
    let num = y - if v > 0.0 { 1.0 } else { 0.0 };
    if num == 0.0 {
        return Ok(0.0);
    }
    let f = if fhat.is_finite() { fhat } else { f64::NEG_INFINITY };
    let den = f.max(floor);
    if !(den > 0.0) {
        return Err(Error::DegenerateDensity(format!(
            "non-positive density {fhat} with nonzero numerator"
        )));
    }
    Ok(num / den)
}

/// Applies [`ytilde_one`] elementwise; also returns how many density values
/// fell below the floor.
pub fn ytilde_all(y: &[f64], v: &[f64], fhat: &[f64], floor: f64) -> Result<(Vec<f64>, usize)> {
    if y.len() != v.len() || y.len() != fhat.len() {
        return Err(Error::DimensionMismatch("y, v and fhat lengths differ".into()));
    }
    let hits = fhat.iter().filter(|f| !(**f >= floor)).count();
    let yt = (0..y.len())
        .map(|i| ytilde_one(y[i], v[i], fhat[i], floor))
        .collect::<Result<_>>()?;
    Ok((yt, hits))
}

/// The full transform on raw arrays: screen the columns of `z`, select
/// bandwidths on the retained ones, evaluate f̂(v_i | z_i) and form ỹ.
/// Returns (ỹ, f̂, density model, screening report, floor hits).
#[allow(clippy::type_complexity)]
pub fn transform_arrays(
    y: &[f64],
    v: &[f64],
    z: &DMatrix<f64>,
    cfg: &TransformConfig,
) -> Result<(Vec<f64>, Vec<f64>, DensityModel, ScreenReport, usize)> {
    cfg.validate()?;
    let n = y.len();
    if v.len() != n || z.nrows() != n {
        return Err(Error::DimensionMismatch("y, v and z row counts differ".into()));
    }
    if z.ncols() < cfg.p_tilde {
        return Err(Error::InvalidInput(format!(
            "{} conditioning columns available, p_tilde = {}",
            z.ncols(),
            cfg.p_tilde
        )));
    }
    if n < cfg.p_tilde + 10 {
        return Err(Error::InsufficientSample(format!(
            "n = {n} but p_tilde + 10 = {}",
            cfg.p_tilde + 10
        )));
    }
    let screen = screen_topk(v, z, cfg.p_tilde)?;
    let kept = screen.ranked_selection();
    if kept.is_empty() {
        return Err(Error::InvalidInput("no usable conditioning column".into()));
    }
    let cols = kept
        .iter()
        .map(|&l| z.column(l).iter().copied().collect())
        .collect();
    let sample = Arc::new(DensitySample::new(v.to_vec(), cols)?);
    let opt = OptimizerConfig {
        seed: cfg.seed.derive(0xB4D),
        ..cfg.optimizer.clone()
    };
    let fitted = select_bandwidths(sample, cfg.cv_kernel_order, &opt)?;
    let model = fitted.with_kernel(cfg.kernel_order);
    let fhat = if cfg.leave_one_out {
        model.cond_density_loo()
    } else {
        model.cond_density_at_sample()
    };
    let bad = fhat.iter().filter(|f| !(**f > 0.0)).count();
    if 5 * bad > n {
        return Err(Error::DegenerateDensity(format!(
            "estimated density is non-positive at {bad} of {n} observations"
        )));
    }
    let (y_tilde, floor_hits) = ytilde_all(y, v, &fhat, cfg.density_floor)?;
    Ok((y_tilde, fhat, model, screen, floor_hits))
}

/// Conditioning candidates: instrument-tagged columns if there are any,
/// otherwise regressor-tagged ones.
pub fn conditioning_columns(data: &DataTable) -> Vec<String> {
    let inst = data.names_with_role(Role::Instrument);
    let names = if inst.is_empty() {
        data.names_with_role(Role::Regressor)
    } else {
        inst
    };
    names.into_iter().map(str::to_string).collect()
}

pub fn transform(data: &DataTable, cfg: &TransformConfig) -> Result<TransformedData> {
    let y = data.outcome()?;
    let v = data.special_regressor()?;
    let conditioning = conditioning_columns(data);
    if conditioning.is_empty() {
        return Err(Error::InvalidInput(
            "no instrument or regressor columns to condition on".into(),
        ));
    }
    let cols: Vec<&[f64]> = conditioning
        .iter()
        .map(|c| data.column(c))
        .collect::<Result<_>>()?;
    let z = DMatrix::from_fn(data.n_rows(), cols.len(), |i, l| cols[l][i]);
    let (y_tilde, fhat, density_model, screen, floor_hits) = transform_arrays(y, v, &z, cfg)?;
    Ok(TransformedData {
        y_tilde,
        fhat,
        density_model,
        screen,
        conditioning,
        floor_hits,
    })
}
