//! Law of the momentum process, Gaussian tensor moments and exact
//! transition sampling.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{expm, sigma_tilde, spectral_profile, SpectralProfile, SquareMatrix};
use crate::tensor::{sym, tensor_product, Tensor};

/// Problem instance: friction matrix M, mass m, initial momentum p and
/// signature truncation depth N.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(rename = "M")]
    pub matrix: SquareMatrix,
    #[serde(rename = "m")]
    pub mass: f64,
    pub p: Vec<f64>,
    #[serde(rename = "N")]
    pub depth: usize,
}

impl ModelParams {
    pub fn new(matrix: SquareMatrix, mass: f64, p: Vec<f64>, depth: usize) -> Result<Self> {
        let params = ModelParams { matrix, mass, p, depth };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<SpectralProfile> {
        if self.p.len() != self.matrix.dim() {
            return Err(Error::DimensionMismatch { expected: self.matrix.dim(), found: self.p.len() });
        }
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(Error::InvalidArgument(format!("mass must be positive, got {}", self.mass)));
        }
        if self.depth < 1 {
            return Err(Error::InvalidArgument("truncation depth must be at least 1".into()));
        }
        if self.p.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("initial momentum must be finite".into()));
        }
        spectral_profile(&self.matrix)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn with_mass(&self, mass: f64) -> Result<Self> {
        Self::new(self.matrix.clone(), mass, self.p.clone(), self.depth)
    }

    pub fn with_p(&self, p: Vec<f64>) -> Result<Self> {
        Self::new(self.matrix.clone(), self.mass, p, self.depth)
    }

    pub fn with_depth(&self, depth: usize) -> Result<Self> {
        Self::new(self.matrix.clone(), self.mass, self.p.clone(), depth)
    }
}

/// Mean and covariance of P_t.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianLaw {
    pub mean: Vec<f64>,
    pub cov: SquareMatrix,
}

impl GaussianLaw {
    pub fn new(mean: Vec<f64>, cov: SquareMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch { expected: cov.dim(), found: mean.len() });
        }
        if !cov.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument("covariance must be symmetric".into()));
        }
        let min_ev = cov.as_dmatrix().clone().symmetric_eigenvalues().min();
        if min_ev < -1e-10 {
            return Err(Error::InvalidArgument(format!("covariance has eigenvalue {min_ev}")));
        }
        Ok(GaussianLaw { mean, cov })
    }
}

/// μ_t = e^{-(M/m)t} p and Σ_t = m Σ̃_{t/m}.
pub fn law_at(params: &ModelParams, t: f64) -> Result<GaussianLaw> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    let s = t / params.mass;
    let mean = expm(&params.matrix, s)?.mul_vec(&params.p);
    let cov = sigma_tilde(&params.matrix, s)?.scale(params.mass);
    GaussianLaw::new(mean, cov)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// E[X^{⊗q}] for X ~ N(μ, Σ): Σ_k C(q,2k)(2k)!/(k!2^k) sym(μ^{⊗(q−2k)} ⊗ Σ^{⊗k}).
pub fn gaussian_tensor_moment(law: &GaussianLaw, q: usize) -> Result<Tensor<f64>> {
    let d = law.mean.len();
    let mu = Tensor::vector(&law.mean);
    let sigma = Tensor::from_matrix(law.cov.as_dmatrix())?;
    let mut mu_pow = vec![Tensor::scalar(d, 1.0)];
    for j in 1..=q {
        mu_pow.push(tensor_product(&mu_pow[j - 1], &mu)?);
    }
    let mut out = Tensor::zeros(d, q)?;
    let mut sigma_pow = Tensor::scalar(d, 1.0);
    // (2k)!/(k! 2^k) = (2k-1)!!
    let mut dfact = 1.0;
    for k in 0..=q / 2 {
        if k > 0 {
            sigma_pow = tensor_product(&sigma_pow, &sigma)?;
            dfact *= (2 * k - 1) as f64;
        }
        let term = sym(&tensor_product(&mu_pow[q - 2 * k], &sigma_pow)?)?;
        out.add_scaled(&term, binomial(q, 2 * k) * dfact)?;
    }
    Ok(out)
}

/// Source of independent standard normal draws.
pub trait GaussianSource {
    fn fill(&mut self, out: &mut [f64]);
}

/// Per-path random stream: ChaCha8 keyed by the seed, stream id = path index.
#[derive(Clone, Debug)]
pub struct PathStream {
    rng: ChaCha8Rng,
}

impl PathStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        PathStream { rng }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

impl GaussianSource for PathStream {
    fn fill(&mut self, out: &mut [f64]) {
        for x in out {
            *x = StandardNormal.sample(&mut self.rng);
        }
    }
}

/// Noise source that always returns zero; isolates the drift.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroNoise;

impl GaussianSource for ZeroNoise {
    fn fill(&mut self, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Exact transition over a fixed step: x ↦ E x + L ξ with L Lᵀ the step covariance.
#[derive(Clone, Debug)]
pub struct ExactStepper {
    transition: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl ExactStepper {
    pub fn new(params: &ModelParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
        }
        let s = dt / params.mass;
        let transition = expm(&params.matrix, s)?.into_dmatrix();
        let cov = sigma_tilde(&params.matrix, s)?.scale(params.mass).into_dmatrix();
        Self::from_parts(transition, cov)
    }

    /// Standard Brownian increments of variance `dt`, no drift.
    pub fn brownian(d: usize, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
        }
        Self::from_parts(DMatrix::identity(d, d), DMatrix::identity(d, d) * dt)
    }

    fn from_parts(transition: DMatrix<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let chol = cov.cholesky().ok_or(Error::Cholesky)?.l();
        Ok(ExactStepper { transition, chol })
    }

    /// Cached stepper for (params, dt).
    pub fn cached(params: &ModelParams, dt: f64) -> Result<Arc<Self>> {
        type Cache = RwLock<HashMap<Vec<u64>, Arc<ExactStepper>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
        let mut key: Vec<u64> = params.matrix.row_major().iter().map(|x| x.to_bits()).collect();
        key.push(params.mass.to_bits());
        key.push(dt.to_bits());
        if let Some(s) = cache.read().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let s = Arc::new(Self::new(params, dt)?);
        let mut w = cache.write().unwrap();
        if w.len() > 1024 {
            w.clear();
        }
        Ok(w.entry(key).or_insert(s).clone())
    }

    pub fn dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Advances `state` in place; `scratch` must hold at least 2d values.
    pub fn step_into(&self, state: &mut [f64], scratch: &mut [f64], source: &mut dyn GaussianSource) {
        let d = self.dim();
        let (noise, old) = scratch[..2 * d].split_at_mut(d);
        source.fill(noise);
        old.copy_from_slice(state);
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += self.transition[(i, j)] * old[j];
            }
            for j in 0..=i {
                s += self.chol[(i, j)] * noise[j];
            }
            state[i] = s;
        }
    }
}

/// One exact transition of length `dt` from `state`.
pub fn exact_step(
    params: &ModelParams,
    state: &[f64],
    dt: f64,
    source: &mut dyn GaussianSource,
) -> Result<Vec<f64>> {
    if state.len() != params.dim() {
        return Err(Error::DimensionMismatch { expected: params.dim(), found: state.len() });
    }
    let stepper = ExactStepper::cached(params, dt)?;
    let mut out = state.to_vec();
    let mut scratch = vec![0.0; 2 * state.len()];
    stepper.step_into(&mut out, &mut scratch, source);
    Ok(out)
}
