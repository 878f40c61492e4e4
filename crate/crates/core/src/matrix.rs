//! Matrix exponentials, the Hurwitz certificate and the covariance kernels
//! built on the Lyapunov operator L(X) = MX + XMᵀ.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this eigenvector condition number a matrix is treated as
/// non-diagonalizable.
pub const DIAGONALIZABLE_CONDITION: f64 = 1e6;

/// Tolerance on the skew-symmetry of [`area_limit`].
pub const SKEW_TOLERANCE: f64 = 1e-9;

/// Real d×d matrix with finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SquareMatrix(DMatrix<f64>);

impl TryFrom<Vec<Vec<f64>>> for SquareMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.len();
        let mut flat = Vec::with_capacity(d * d);
        for r in &rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: r.len() });
            }
            flat.extend_from_slice(r);
        }
        SquareMatrix::from_row_major(d, &flat)
    }
}

impl From<SquareMatrix> for Vec<Vec<f64>> {
    fn from(m: SquareMatrix) -> Self {
        m.rows()
    }
}

impl SquareMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidArgument("matrix must be at least 1x1".into()));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("matrix entries must be finite".into()));
        }
        Ok(SquareMatrix(m))
    }

    pub fn from_row_major(d: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, found: entries.len() });
        }
        Self::new(DMatrix::from_row_slice(d, d, entries))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        Self::try_from(rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    pub fn identity(d: usize) -> Self {
        SquareMatrix(DMatrix::identity(d, d))
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.0.row(i).iter().copied().collect()).collect()
    }

    pub fn row_major(&self) -> Vec<f64> {
        self.rows().concat()
    }

    pub fn transpose(&self) -> Self {
        SquareMatrix(self.0.transpose())
    }

    pub fn scale(&self, a: f64) -> Self {
        SquareMatrix(&self.0 * a)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (&self.0 * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    /// Maximum absolute entry.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.0[(i, j)] == 0.0))
    }

    pub fn is_scalar_multiple_of_identity(&self) -> bool {
        self.is_diagonal() && (1..self.dim()).all(|i| self.0[(i, i)] == self.0[(0, 0)])
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        max_abs(&(&self.0 - self.0.transpose())) <= tol
    }

    fn key(&self) -> Vec<u64> {
        let mut k = vec![self.dim() as u64];
        k.extend(self.0.iter().map(|x| x.to_bits()));
        k
    }
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// λ, Λ and K with max‖e^{-Mδ}‖, ‖e^{-Mᵀδ}‖ ≤ K e^{-λδ}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    /// Smallest real part of the spectrum.
    pub lambda: f64,
    /// Largest absolute entry of M.
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

/// δ grid on which the decay certificate is validated.
pub fn certificate_grid() -> impl Iterator<Item = f64> {
    (0..=100).map(|i| i as f64 * 0.1)
}

// Padé 13 coefficients and the θ13 threshold for scaling and squaring.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// e^{A} by Padé 13 scaling and squaring.
pub(crate) fn expm_raw(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let nrm = norm1(a);
    if !nrm.is_finite() {
        return Err(Error::Overflow);
    }
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * 2f64.powi(-s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).ok_or(Error::Singular)?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Overflow);
    }
    Ok(r)
}

/// The decaying exponential e^{-M s}.
pub fn expm(m: &SquareMatrix, s: f64) -> Result<SquareMatrix> {
    if !s.is_finite() {
        return Err(Error::InvalidArgument(format!("exponential time {s} is not finite")));
    }
    Ok(SquareMatrix(expm_raw(&(m.as_dmatrix() * -s))?))
}

/// Eigendecomposition M = Q diag(values) Q⁻¹.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<Complex64>,
    pub q: DMatrix<Complex64>,
    pub q_inv: DMatrix<Complex64>,
    /// ‖Q‖₂‖Q⁻¹‖₂
    pub condition: f64,
}

/// Everything derived once per matrix and cached.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub eigenvalues: Vec<Complex64>,
    /// `None` for defective matrices.
    pub eigen: Option<EigenDecomposition>,
    pub profile: Result<SpectralProfile>,
}

impl Analysis {
    /// The eigendecomposition if it is well conditioned enough to use.
    pub fn diagonalization(&self) -> Option<&EigenDecomposition> {
        self.eigen.as_ref().filter(|e| e.condition <= DIAGONALIZABLE_CONDITION)
    }
}

type Cache = RwLock<HashMap<Vec<u64>, Arc<Analysis>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Cached spectral analysis of `m`.
pub fn analysis(m: &SquareMatrix) -> Arc<Analysis> {
    let key = m.key();
    if let Some(a) = cache().read().unwrap().get(&key) {
        return a.clone();
    }
    let a = Arc::new(analyse(m));
    let mut w = cache().write().unwrap();
    if w.len() > 4096 {
        w.clear();
    }
    w.entry(key).or_insert(a).clone()
}

fn analyse(m: &SquareMatrix) -> Analysis {
    let eigenvalues: Vec<Complex64> = m.as_dmatrix().clone().complex_eigenvalues().iter().copied().collect();
    let eigen = eigendecompose(m, &eigenvalues);
    let profile = profile_from(m, &eigenvalues, eigen.as_ref());
    Analysis { eigenvalues, eigen, profile }
}

fn eigendecompose(m: &SquareMatrix, eigenvalues: &[Complex64]) -> Option<EigenDecomposition> {
    let d = m.dim();
    let scale = m.max_abs().max(1.0);
    let tol = 1e-6 * scale;
    // cluster numerically equal eigenvalues
    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for &ev in eigenvalues {
        match clusters.iter_mut().find(|c| (c[0] - ev).norm() <= tol) {
            Some(c) => c.push(ev),
            None => clusters.push(vec![ev]),
        }
    }
    let mc: DMatrix<Complex64> = m.as_dmatrix().map(|x| Complex64::new(x, 0.0));
    let mut q = DMatrix::<Complex64>::zeros(d, d);
    let mut values = Vec::with_capacity(d);
    let mut col = 0;
    for c in &clusters {
        let mu = c.iter().sum::<Complex64>() / c.len() as f64;
        let shifted = &mc - DMatrix::<Complex64>::identity(d, d) * mu;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.as_ref()?;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        for &k in order.iter().take(c.len()) {
            if svd.singular_values[k] > tol {
                return None;
            }
            let v = vt.row(k).adjoint();
            q.set_column(col, &v);
            values.push(mu);
            col += 1;
        }
    }
    let q_inv = q.clone().try_inverse()?;
    let sv = q.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    Some(EigenDecomposition { values, q, q_inv, condition })
}

fn profile_from(
    m: &SquareMatrix,
    eigenvalues: &[Complex64],
    eigen: Option<&EigenDecomposition>,
) -> Result<SpectralProfile> {
    let lambda = eigenvalues.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(Error::NonHurwitz { min_real_part: lambda });
    }
    let big_lambda = m.max_abs();
    let ratios: Vec<f64> = certificate_grid()
        .map(|delta| Ok(expm(m, delta)?.max_abs() * (lambda * delta).exp()))
        .collect::<Result<_>>()?;
    let grid_max = ratios.iter().copied().fold(0.0, f64::max);
    let mut k = match eigen {
        Some(e) if e.condition.is_finite() => 1.05 * e.condition,
        _ => 1.05 * grid_max,
    };
    // max-entry norm is transpose invariant, so one check covers e^{-Mᵀδ}
    while ratios.iter().any(|&r| r > k) {
        k *= 2.0;
    }
    Ok(SpectralProfile { lambda, big_lambda, k })
}

pub fn spectral_profile(m: &SquareMatrix) -> Result<SpectralProfile> {
    analysis(m).profile.clone()
}

/// Solves MX + XMᵀ = rhs through the d²×d² Kronecker system.
pub fn solve_lyapunov(m: &SquareMatrix, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = m.dim();
    let a = m.as_dmatrix();
    let id = DMatrix::<f64>::identity(d, d);
    let k = id.kronecker(a) + a.kronecker(&id);
    let b = DVector::from_column_slice(rhs.as_slice());
    let x = k.lu().solve(&b).ok_or(Error::Singular)?;
    Ok(DMatrix::from_column_slice(d, d, x.as_slice()))
}

fn lyapunov_apply(m: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    m * x + x * m.transpose()
}

fn symmetrize(x: DMatrix<f64>) -> DMatrix<f64> {
    (&x + x.transpose()) * 0.5
}

fn hurwitz(m: &SquareMatrix) -> Result<SpectralProfile> {
    spectral_profile(m)
}

/// Σ_k (-1)^k L^k(I) s^{k+1+shift} / (k+1+shift)!, for s‖M‖₁ ≤ 1.
fn lyapunov_series(m: &DMatrix<f64>, s: f64, shift: usize) -> DMatrix<f64> {
    let d = m.nrows();
    let mut b = DMatrix::<f64>::identity(d, d);
    let mut out = DMatrix::<f64>::zeros(d, d);
    // coefficient s^{k+1+shift}/(k+1+shift)!
    let mut coef = 1.0;
    for j in 1..=(1 + shift) {
        coef *= s / j as f64;
    }
    let mut sign = 1.0;
    for k in 0..60 {
        let term = &b * (sign * coef);
        let size = max_abs(&term);
        out += term;
        if size <= 1e-18 * max_abs(&out) {
            break;
        }
        b = lyapunov_apply(m, &b);
        sign = -sign;
        coef *= s / (k + 2 + shift) as f64;
    }
    out
}

/// Σ̃_σ = ∫₀^σ e^{-Ms} e^{-Mᵀs} ds.
pub fn sigma_tilde(m: &SquareMatrix, sigma: f64) -> Result<SquareMatrix> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::InvalidArgument(format!("sigma must be nonnegative, got {sigma}")));
    }
    hurwitz(m)?;
    if sigma == f64::INFINITY {
        return stationary_c(m);
    }
    let d = m.dim();
    if sigma == 0.0 {
        return Ok(SquareMatrix(DMatrix::zeros(d, d)));
    }
    let a = m.as_dmatrix();
    let x = if sigma * norm1(a) <= 1.0 {
        lyapunov_series(a, sigma, 0)
    } else {
        let e = expm(m, sigma)?.into_dmatrix();
        let rhs = DMatrix::<f64>::identity(d, d) - &e * e.transpose();
        solve_lyapunov(m, &rhs)?
    };
    Ok(SquareMatrix(symmetrize(x)))
}

/// C = Σ̃_∞, the solution of MC + CMᵀ = I.
pub fn stationary_c(m: &SquareMatrix) -> Result<SquareMatrix> {
    hurwitz(m)?;
    let d = m.dim();
    let x = solve_lyapunov(m, &DMatrix::identity(d, d))?;
    Ok(SquareMatrix(symmetrize(x)))
}

/// (1/T)∫₀^T Σ̃_σ dσ.
pub fn averaged_sigma(m: &SquareMatrix, t: f64) -> Result<SquareMatrix> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::InvalidArgument(format!("averaging horizon must be positive, got {t}")));
    }
    hurwitz(m)?;
    if t == f64::INFINITY {
        return stationary_c(m);
    }
    let d = m.dim();
    let a = m.as_dmatrix();
    let x = if t * norm1(a) <= 1.0 {
        lyapunov_series(a, t, 1) / t
    } else {
        // L(∫₀^T Σ̃) = T·I − Σ̃_T
        let st = sigma_tilde(m, t)?.into_dmatrix();
        let rhs = DMatrix::<f64>::identity(d, d) - st / t;
        solve_lyapunov(m, &rhs)?
    };
    Ok(SquareMatrix(symmetrize(x)))
}

/// Ξ^{(m)}(t) = M·⨍₀^{t/m} Σ̃ − I/2.
pub fn xi(m: &SquareMatrix, mass: f64, t: f64) -> Result<SquareMatrix> {
    if !(mass > 0.0) || !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("xi needs m > 0 and t > 0, got m={mass}, t={t}")));
    }
    let avg = averaged_sigma(m, t / mass)?;
    let d = m.dim();
    SquareMatrix::new(m.as_dmatrix() * avg.as_dmatrix() - DMatrix::<f64>::identity(d, d) * 0.5)
}

/// MC − I/2, the small-mass area matrix; checked to be skew-symmetric.
pub fn area_limit(m: &SquareMatrix) -> Result<SquareMatrix> {
    let c = stationary_c(m)?;
    let d = m.dim();
    let a = m.as_dmatrix() * c.as_dmatrix() - DMatrix::<f64>::identity(d, d) * 0.5;
    let resid = max_abs(&(&a + a.transpose()));
    if resid > SKEW_TOLERANCE {
        return Err(Error::SkewSymmetry(resid));
    }
    SquareMatrix::new(a)
}
