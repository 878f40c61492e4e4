//! Finite-difference residual of the graded PDE system
//! (-∂_t + ½Δ - (M/m)p·∇)Φ_n = (M/m)p ⊗ Φ_{n-1} - Σ_j e_j ⊗ ∂_jΦ_{n-1} - ½Σ_j e_j ⊗ e_j ⊗ Φ_{n-2}.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_forms::{esig_1d_terms, frak_a_finite, phi1};
use crate::error::{Error, Result};
use crate::matrix::{sigma_tilde, xi};
use crate::ou::ModelParams;
use crate::tensor::{linfty_norm, tensor_product, Tensor};

/// Default relative finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-4;

/// Anything that evaluates Φ_n(t, p).
pub trait EsigProvider: Sync {
    fn dim(&self) -> usize;
    fn level(&self, n: usize, t: f64, p: &[f64]) -> Result<Tensor<f64>>;
}

/// Scalar closed form with θ = M/m and unit noise.
#[derive(Clone, Debug, PartialEq)]
pub struct OneDimClosedForm {
    theta: f64,
    corrupt: Option<(usize, f64)>,
}

impl OneDimClosedForm {
    pub fn new(params: &ModelParams) -> Result<Self> {
        if params.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: params.dim() });
        }
        Ok(OneDimClosedForm { theta: params.matrix.get(0, 0) / params.mass, corrupt: None })
    }

    /// Same provider with one coefficient of level `n` scaled by `1 + rel`
    /// (the variance term when n ≥ 2, the drift term when n = 1).
    pub fn corrupted(mut self, n: usize, rel: f64) -> Self {
        self.corrupt = Some((n, rel));
        self
    }
}

impl EsigProvider for OneDimClosedForm {
    fn dim(&self) -> usize {
        1
    }

    fn level(&self, n: usize, t: f64, p: &[f64]) -> Result<Tensor<f64>> {
        if p.len() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: p.len() });
        }
        let mut terms = esig_1d_terms(self.theta, 1.0, p[0], t, n);
        if let Some((lvl, rel)) = self.corrupt {
            if lvl == n {
                let i = (n / 2).min(1);
                terms[i] *= 1.0 + rel;
            }
        }
        Tensor::from_entries(1, n, vec![terms.iter().sum()])
    }
}

/// Exact Φ₀, Φ₁, Φ₂ in any dimension: Φ₂ = 𝔄₂ + Ξt + mΣ̃_{t/m}.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactLowLevels {
    params: ModelParams,
}

impl ExactLowLevels {
    pub fn new(params: &ModelParams) -> Self {
        ExactLowLevels { params: params.clone() }
    }
}

impl EsigProvider for ExactLowLevels {
    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn level(&self, n: usize, t: f64, p: &[f64]) -> Result<Tensor<f64>> {
        let d = self.dim();
        let pr = self.params.with_p(p.to_vec())?;
        match n {
            0 => Ok(Tensor::scalar(d, 1.0)),
            1 => phi1(&pr, t),
            2 => {
                let mut v = frak_a_finite(&pr, 2, t)?.value;
                if t > 0.0 {
                    let x = xi(&pr.matrix, pr.mass, t)?.scale(t);
                    let s = sigma_tilde(&pr.matrix, t / pr.mass)?.scale(pr.mass);
                    v.add_scaled(&Tensor::from_matrix(x.as_dmatrix())?, 1.0)?;
                    v.add_scaled(&Tensor::from_matrix(s.as_dmatrix())?, 1.0)?;
                }
                Ok(v)
            }
            _ => Err(Error::Provider(format!("no exact closed form for level {n}"))),
        }
    }
}

/// A probe point (t, p).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub t: f64,
    pub p: Vec<f64>,
}

/// Residual norms of the level-n equation at each probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeResidual {
    pub level: usize,
    pub probes: Vec<Probe>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

/// Residual with the default step.
pub fn pde_residual(provider: &dyn EsigProvider, params: &ModelParams, n: usize, probes: &[Probe]) -> Result<PdeResidual> {
    pde_residual_with_step(provider, params, n, probes, DEFAULT_STEP)
}

/// Residual with central differences of step h(1 + |coordinate|) in t and in each p_j.
pub fn pde_residual_with_step(
    provider: &dyn EsigProvider,
    params: &ModelParams,
    n: usize,
    probes: &[Probe],
    h: f64,
) -> Result<PdeResidual> {
    if provider.dim() != params.dim() {
        return Err(Error::DimensionMismatch { expected: params.dim(), found: provider.dim() });
    }
    let residuals = probes
        .par_iter()
        .map(|pr| residual_at(provider, params, n, pr, h))
        .collect::<Result<Vec<f64>>>()?;
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    Ok(PdeResidual { level: n, probes: probes.to_vec(), residuals, max_residual })
}

fn residual_at(provider: &dyn EsigProvider, params: &ModelParams, n: usize, probe: &Probe, h: f64) -> Result<f64> {
    let d = params.dim();
    let (t, p) = (probe.t, &probe.p);
    if p.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: p.len() });
    }
    let ht = h * (1.0 + t.abs());
    if !(ht > 0.0) || t - ht <= 0.0 || t + ht == t {
        return Err(Error::StepUnderflow);
    }
    let phi = |n: usize, t: f64, p: &[f64]| provider.level(n, t, p);
    let centre = phi(n, t, p)?;
    let mut r = phi(n, t + ht, p)?.sub(&phi(n, t - ht, p)?)?.scale(-0.5 / ht);
    if n == 0 {
        return Ok(linfty_norm(&r));
    }
    // v = (M/m)p
    let v: Vec<f64> = params.matrix.mul_vec(p).iter().map(|x| x / params.mass).collect();
    for j in 0..d {
        let hp = h * (1.0 + p[j].abs());
        let mut up = p.to_vec();
        let mut dn = p.to_vec();
        up[j] += hp;
        dn[j] -= hp;
        if up[j] == p[j] {
            return Err(Error::StepUnderflow);
        }
        let (fu, fd) = (phi(n, t, &up)?, phi(n, t, &dn)?);
        let second = fu.add(&fd)?.sub(&centre.scale(2.0))?.scale(1.0 / (hp * hp));
        let first = fu.sub(&fd)?.scale(0.5 / hp);
        r.add_scaled(&second, 0.5)?;
        r.add_scaled(&first, -v[j])?;
        let e = Tensor::basis(d, &[j])?;
        let lower = phi(n - 1, t, &up)?.sub(&phi(n - 1, t, &dn)?)?.scale(0.5 / hp);
        r.add_scaled(&tensor_product(&e, &lower)?, 1.0)?;
        if n >= 2 {
            let ee = Tensor::basis(d, &[j, j])?;
            r.add_scaled(&tensor_product(&ee, &phi(n - 2, t, p)?)?, 0.5)?;
        }
    }
    r.add_scaled(&tensor_product(&Tensor::vector(&v), &phi(n - 1, t, p)?)?, -1.0)?;
    Ok(linfty_norm(&r))
}

/// max over levels ≤ depth and the given momenta of |Φ(0, p) − 𝟏|.
pub fn initial_condition_defect(provider: &dyn EsigProvider, depth: usize, momenta: &[Vec<f64>]) -> Result<f64> {
    let d = provider.dim();
    let mut worst = 0.0f64;
    for p in momenta {
        for n in 0..=depth {
            let mut v = provider.level(n, 0.0, p)?;
            if n == 0 {
                v.add_scaled(&Tensor::scalar(d, 1.0), -1.0)?;
            }
            worst = worst.max(linfty_norm(&v));
        }
    }
    Ok(worst)
}
