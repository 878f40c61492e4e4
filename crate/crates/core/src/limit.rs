//! Finite-mass decomposition Σ_k 𝔄_{n-2k} ⊗ (Ξt)^{⊗k}, its small-mass limit,
//! and m-sweeps of the gap between the two.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_forms::{frak_a_finite, frak_a_limit, Regime};
use crate::error::{Error, Result};
use crate::matrix::{area_limit, xi, SquareMatrix};
use crate::ou::ModelParams;
use crate::tensor::{linfty_norm, tensor_product, Tensor, TruncatedTensorSeries};

/// Errors below this are treated as exact zeros by the slope fit.
pub const ERROR_FLOOR: f64 = 1e-12;

/// An expected-signature series with a record of how each level was built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsigResult {
    pub series: TruncatedTensorSeries<f64>,
    pub regime: Regime,
    /// For each level, the products that were summed to produce it.
    pub provenance: Vec<Vec<String>>,
}

fn assemble(
    frak: &[Tensor<f64>],
    area: &Tensor<f64>,
    frak_name: &str,
    area_name: &str,
) -> Result<(TruncatedTensorSeries<f64>, Vec<Vec<String>>)> {
    let depth = frak.len() - 1;
    let d = area.dim();
    let mut powers = vec![Tensor::scalar(d, 1.0)];
    for k in 1..=depth / 2 {
        powers.push(tensor_product(&powers[k - 1], area)?);
    }
    let mut levels = Vec::with_capacity(depth + 1);
    let mut provenance = Vec::with_capacity(depth + 1);
    for n in 0..=depth {
        let mut acc = Tensor::zeros(d, n)?;
        let mut names = Vec::new();
        for k in 0..=n / 2 {
            acc.add_scaled(&tensor_product(&frak[n - 2 * k], &powers[k])?, 1.0)?;
            names.push(if k == 0 {
                format!("{frak_name}({n})")
            } else {
                format!("{frak_name}({}) ⊗ ({area_name})^{k}", n - 2 * k)
            });
        }
        if n == 0 {
            // level 0 is exactly 1
            acc = Tensor::scalar(d, 1.0);
        }
        levels.push(acc);
        provenance.push(names);
    }
    Ok((TruncatedTensorSeries::from_levels(levels)?, provenance))
}

/// Good part of the finite-mass expected signature, levels 0..=N:
/// Σ_k 𝔄_{n-2k}^{(m)}(t,p) ⊗ (Ξ^{(m)}(t)·t)^{⊗k}. The remainder is O(m) and not computed.
pub fn esig_good_part(params: &ModelParams, t: f64) -> Result<EsigResult> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    params.validate()?;
    let frak = (0..=params.depth)
        .map(|n| Ok(frak_a_finite(params, n, t)?.value))
        .collect::<Result<Vec<_>>>()?;
    let x = xi(&params.matrix, params.mass, t)?.scale(t);
    let area = Tensor::from_matrix(x.as_dmatrix())?;
    let (series, provenance) = assemble(&frak, &area, "frak_a_finite", "xi·t")?;
    Ok(EsigResult { series, regime: Regime::FiniteMass { m: params.mass, t }, provenance })
}

/// Small-mass limit, levels 0..=N: Σ_k 𝔄̄_{n-2k}(p) ⊗ ((MC − CMᵀ)/2·t)^{⊗k}.
pub fn esig_limit(m: &SquareMatrix, p: &[f64], t: f64, depth: usize) -> Result<EsigResult> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    if p.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: p.len() });
    }
    let frak = (0..=depth).map(|n| Ok(frak_a_limit(m, p, n)?.value)).collect::<Result<Vec<_>>>()?;
    let a = area_limit(m)?.scale(t);
    let area = Tensor::from_matrix(a.as_dmatrix())?;
    let (series, provenance) = assemble(&frak, &area, "frak_a_limit", "area_limit·t")?;
    Ok(EsigResult { series, regime: Regime::Limit { t: Some(t) }, provenance })
}

/// Whether a sweep produced a slope or sat entirely at the floor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStatus {
    Fitted,
    /// Every error fell below the floor: both sides are zero.
    Floor,
}

/// Per-m gap ‖good part − limit‖∞ at one level with a log-log slope fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub level: usize,
    pub t: f64,
    pub m_grid: Vec<f64>,
    pub errors: Vec<f64>,
    /// constant·m for each grid point.
    pub bound: Vec<f64>,
    /// Empirical constant max_m error/m.
    pub constant: f64,
    pub slope: Option<f64>,
    pub status: SweepStatus,
    pub params: ModelParams,
}

impl ConvergenceReport {
    /// (m, error, bound) rows.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.m_grid.iter().zip(&self.errors).zip(&self.bound).map(|((&m, &e), &b)| (m, e, b))
    }
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Measures ‖good part − limit‖∞ at level `n` over a decreasing grid of masses.
pub fn convergence_sweep(template: &ModelParams, t: f64, n: usize, m_grid: &[f64]) -> Result<ConvergenceReport> {
    if m_grid.is_empty() {
        return Err(Error::InvalidArgument("mass grid is empty".into()));
    }
    if m_grid.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(Error::InvalidArgument("mass grid must be positive".into()));
    }
    if m_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("mass grid must be strictly decreasing".into()));
    }
    let base = template.with_depth(n.max(1))?;
    let limit = esig_limit(&base.matrix, &base.p, t, n)?.series.level(n).clone();
    let errors = m_grid
        .par_iter()
        .map(|&m| {
            let good = esig_good_part(&base.with_mass(m)?, t)?;
            let diff = good.series.level(n).sub(&limit)?;
            Ok(linfty_norm(&diff))
        })
        .collect::<Result<Vec<f64>>>()?;
    let constant = m_grid.iter().zip(&errors).map(|(m, e)| e / m).fold(0.0, f64::max);
    let bound = m_grid.iter().map(|m| constant * m).collect();
    let (ms, es): (Vec<f64>, Vec<f64>) =
        m_grid.iter().zip(&errors).filter(|(_, &e)| e >= ERROR_FLOOR).map(|(&m, &e)| (m, e)).unzip();
    let (slope, status) = match ms.len() {
        0 => (None, SweepStatus::Floor),
        1 => return Err(Error::DegenerateFit { usable: 1 }),
        _ => (Some(loglog_slope(&ms, &es)), SweepStatus::Fitted),
    };
    Ok(ConvergenceReport {
        level: n,
        t,
        m_grid: m_grid.to_vec(),
        errors,
        bound,
        constant,
        slope,
        status,
        params: base,
    })
}
