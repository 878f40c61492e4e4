//! Closed-form expected signatures: the scalar process, the first two levels
//! in general dimension, iterated exponential integrals and the leading
//! simplex tensor 𝔄_n at finite mass and in the limit.

use num_complex::{Complex, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{analysis, expm, xi, EigenDecomposition, SquareMatrix};
use crate::ou::ModelParams;
use crate::quadrature::SpectralRule;
use crate::scalar::Real;
use crate::tensor::{apply_operator, series_product, tensor_product, MatrixTensorOperator, Tensor, TruncatedTensorSeries};

/// Largest allowed imaginary part of an assembled real tensor, relative to its size.
pub const IMAGINARY_TOLERANCE: f64 = 1e-9;
/// Per-level absolute tolerance of the panel quadrature.
pub const QUADRATURE_TOLERANCE: f64 = 1e-9;
/// Panel budget of the panel quadrature.
pub const MAX_PANELS: usize = 10_000;
/// Horizon t/m (in units of 1/λ) used for the limit of non-diagonalizable M.
pub const LIMIT_HORIZON: f64 = 40.0;

/// Coefficients of 𝒜^{c₁…c_n}(t) = ∫_{0<t₁<…<t_n<t} Π e^{-c_j t_j} dt
/// = Σ_i A_i e^{-x_i t}, with x_0 = 0 and x_i = c_n + … + c_{n-i+1}.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpChainCoefficients<T> {
    exponents: Vec<Complex<T>>,
    nodes: Vec<Complex<T>>,
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> ExpChainCoefficients<T> {
    pub fn new(exponents: &[Complex<T>]) -> Result<Self> {
        for c in exponents {
            if !(c.re > T::zero()) || !c.im.is_finite() || !c.re.is_finite() {
                return Err(Error::InvalidArgument(format!("exponent {c:?} needs a positive real part")));
            }
        }
        let n = exponents.len();
        let mut coeffs = vec![Complex::new(T::one(), T::zero())];
        for k in 1..=n {
            // nodes of level k: c_k + … + c_{k-i+1}
            let mut next = vec![Complex::new(T::zero(), T::zero()); k + 1];
            let mut partial = Complex::new(T::zero(), T::zero());
            for i in 1..=k {
                partial = partial + exponents[k - i];
                assert!(partial.norm() > T::zero(), "vanishing partial sum");
                next[i] = -coeffs[i - 1] / partial;
            }
            let s = next[1..].iter().fold(Complex::new(T::zero(), T::zero()), |a, &b| a + b);
            next[0] = -s;
            coeffs = next;
        }
        let mut nodes = vec![Complex::new(T::zero(), T::zero())];
        let mut partial = Complex::new(T::zero(), T::zero());
        for i in 1..=n {
            partial = partial + exponents[n - i];
            nodes.push(partial);
        }
        Ok(ExpChainCoefficients { exponents: exponents.to_vec(), nodes, coeffs })
    }

    pub fn exponents(&self) -> &[Complex<T>] {
        &self.exponents
    }

    /// A^n_0 ..= A^n_n.
    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    /// Partial sums x_0 = 0, x_i = c_n + … + c_{n-i+1}.
    pub fn nodes(&self) -> &[Complex<T>] {
        &self.nodes
    }

    /// A^n_0 from the product Π_i 1/(c_i + … + c_n).
    pub fn product_formula(&self) -> Complex<T> {
        let one = Complex::new(T::one(), T::zero());
        self.nodes[1..].iter().fold(one, |a, &x| a / x)
    }

    /// 𝒜(t); `t = ∞` gives A^n_0.
    pub fn value(&self, t: T) -> Complex<T> {
        let n = self.exponents.len();
        if n == 0 {
            return Complex::new(T::one(), T::zero());
        }
        if t == T::infinity() {
            return self.product_formula();
        }
        if t == T::zero() {
            return Complex::new(T::zero(), T::zero());
        }
        let mut gap = T::infinity();
        for i in 0..=n {
            for j in 0..i {
                gap = gap.min((self.nodes[i] - self.nodes[j]).norm());
            }
        }
        if gap * t.abs() < T::one() {
            // clustered nodes: the coefficient sum cancels catastrophically
            bidiagonal_exp_corner(&self.nodes, t)
        } else {
            self.nodes
                .iter()
                .zip(&self.coeffs)
                .fold(Complex::new(T::zero(), T::zero()), |acc, (&x, &a)| acc + a * (-x * t).exp())
        }
    }
}

/// [exp(Z)]_{0,n} for Z upper bidiagonal with diagonal -t·x_i and
/// superdiagonal t; equals the divided-difference form of 𝒜(t).
fn bidiagonal_exp_corner<T: Real>(nodes: &[Complex<T>], t: T) -> Complex<T> {
    let n = nodes.len();
    let zero = Complex::new(T::zero(), T::zero());
    let one = Complex::new(T::one(), T::zero());
    let idx = |i: usize, j: usize| i * n + j;
    let mut z = vec![zero; n * n];
    let mut norm = T::zero();
    for i in 0..n {
        z[idx(i, i)] = -nodes[i] * t;
        if i + 1 < n {
            z[idx(i, i + 1)] = Complex::new(t, T::zero());
        }
        norm = norm.max(nodes[i].norm() * t.abs() + t.abs());
    }
    let mut s = 0i32;
    let quarter = T::lit(0.25);
    while norm > quarter {
        norm = norm / T::lit(2.0);
        s += 1;
    }
    let scale = T::lit(2.0).powi(-s);
    for v in &mut z {
        *v = *v * scale;
    }
    let mul = |a: &[Complex<T>], b: &[Complex<T>]| {
        let mut c = vec![zero; n * n];
        for i in 0..n {
            for k in i..n {
                let aik = a[idx(i, k)];
                for j in k..n {
                    c[idx(i, j)] = c[idx(i, j)] + aik * b[idx(k, j)];
                }
            }
        }
        c
    };
    let mut term = vec![zero; n * n];
    let mut sum = vec![zero; n * n];
    for i in 0..n {
        term[idx(i, i)] = one;
        sum[idx(i, i)] = one;
    }
    for k in 1..40 {
        term = mul(&term, &z);
        let inv = T::one() / T::from_usize_exact(k);
        let mut size = T::zero();
        for (acc, v) in sum.iter_mut().zip(term.iter_mut()) {
            *v = *v * inv;
            *acc = *acc + *v;
            size = size.max(v.norm());
        }
        if size < T::epsilon() * T::lit(1e-3) {
            break;
        }
    }
    for _ in 0..s {
        sum = mul(&sum, &sum);
    }
    sum[idx(0, n - 1)]
}

/// 𝒜^{c₁…c_n}(t), the iterated exponential simplex integral.
pub fn exp_chain<T: Real>(c: &[Complex<T>], t: T) -> Result<Complex<T>> {
    if t.is_nan() || t < T::zero() {
        return Err(Error::InvalidArgument("exp_chain needs t >= 0".into()));
    }
    Ok(ExpChainCoefficients::new(c)?.value(t))
}

/// Binomial coefficient as a float.
fn binom<T: Real>(n: usize, k: usize) -> T {
    (0..k).fold(T::one(), |acc, i| acc * T::from_usize_exact(n - i) / T::from_usize_exact(i + 1))
}

/// The summands of the scalar level-n expected signature: entry i is
/// C(n,2i)(-x a)^{n-2i}(σ²b/2θ)^i (2i-1)!!/n!, with a = 1-e^{-θt} and b = 1-e^{-2θt}.
pub fn esig_1d_terms<T: Real>(theta: T, sigma_noise: T, x: T, t: T, n: usize) -> Vec<T> {
    let a = -(-theta * t).exp_m1();
    let b = -(-(theta + theta) * t).exp_m1();
    let drift = -x * a;
    let var = sigma_noise * sigma_noise * b / (theta + theta);
    let mut nfact = T::one();
    for k in 2..=n {
        nfact *= T::from_usize_exact(k);
    }
    let mut out = Vec::with_capacity(n / 2 + 1);
    let mut dfact = T::one();
    for i in 0..=n / 2 {
        if i > 0 {
            dfact *= T::from_usize_exact(2 * i - 1);
        }
        let term = binom::<T>(n, 2 * i) * drift.powi((n - 2 * i) as i32) * var.powi(i as i32) * dfact / nfact;
        out.push(term);
    }
    out
}

/// Expected signature of dX = -θX dt + σ dW started at x, levels 0..=N.
pub fn esig_1d<T: Real>(theta: T, sigma_noise: T, x: T, t: T, depth: usize) -> Result<TruncatedTensorSeries<T>> {
    if !(theta > T::zero()) {
        return Err(Error::InvalidArgument("theta must be positive".into()));
    }
    if t.is_nan() || t < T::zero() {
        return Err(Error::InvalidArgument("time must be nonnegative".into()));
    }
    let levels = (0..=depth)
        .map(|n| {
            let v = esig_1d_terms(theta, sigma_noise, x, t, n).into_iter().fold(T::zero(), |a, b| a + b);
            Tensor::from_entries(1, n, vec![v])
        })
        .collect::<Result<Vec<_>>>()?;
    TruncatedTensorSeries::from_levels(levels)
}

/// Zero-mass limit of the scalar expected signature: level n is (-p)^n/n!.
pub fn esig_1d_limit<T: Real>(p: T, depth: usize) -> Result<TruncatedTensorSeries<T>> {
    let mut levels = vec![Tensor::scalar(1, T::one())];
    let mut v = T::one();
    for n in 1..=depth {
        v = v * (-p) / T::from_usize_exact(n);
        levels.push(Tensor::from_entries(1, n, vec![v])?);
    }
    TruncatedTensorSeries::from_levels(levels)
}

/// Φ₁ = (e^{-(M/m)t} - I)p.
pub fn phi1(params: &ModelParams, t: f64) -> Result<Tensor<f64>> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    let mp = expm(&params.matrix, t / params.mass)?.mul_vec(&params.p);
    let v: Vec<f64> = mp.iter().zip(&params.p).map(|(a, b)| a - b).collect();
    Ok(Tensor::vector(&v))
}

/// Good part of Φ₂: 𝔄₂^{(m)}(t,p) + Ξ^{(m)}(t)·t. The dropped remainder is O(m).
pub fn phi2(params: &ModelParams, t: f64) -> Result<Tensor<f64>> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    let a2 = frak_a_finite(params, 2, t)?.value;
    let x = xi(&params.matrix, params.mass, t)?.scale(t);
    a2.add(&Tensor::from_matrix(x.as_dmatrix())?)
}

/// Finite mass (m, t) or the small-mass limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    FiniteMass { m: f64, t: f64 },
    Limit { t: Option<f64> },
}

/// The leading simplex tensor 𝔄_n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrakA {
    pub level: usize,
    pub value: Tensor<f64>,
    pub regime: Regime,
}

/// How [`frak_a_finite_with`] evaluates the simplex integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FrakMethod {
    /// Eigenbasis when M is well-conditioned diagonalizable, panel quadrature otherwise.
    #[default]
    Auto,
    Eigen,
    Quadrature,
}

/// 𝔄_n^{(m)}(t,p) = ∫_{simplex} ⊗_j (-(M/m) e^{-(M/m)t_j} p) dt.
pub fn frak_a_finite(params: &ModelParams, n: usize, t: f64) -> Result<FrakA> {
    frak_a_finite_with(params, n, t, FrakMethod::Auto)
}

pub fn frak_a_finite_with(params: &ModelParams, n: usize, t: f64, method: FrakMethod) -> Result<FrakA> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    let regime = Regime::FiniteMass { m: params.mass, t };
    let value = simplex_tensor(&params.matrix, &params.p, n, t / params.mass, method)?;
    Ok(FrakA { level: n, value, regime })
}

/// 𝔄_n over the rescaled horizon `horizon` = t/m.
fn simplex_tensor(m: &SquareMatrix, p: &[f64], n: usize, horizon: f64, method: FrakMethod) -> Result<Tensor<f64>> {
    let d = m.dim();
    if p.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: p.len() });
    }
    if n == 0 {
        return Ok(Tensor::scalar(d, 1.0));
    }
    if horizon == 0.0 {
        return Tensor::zeros(d, n);
    }
    let an = analysis(m);
    an.profile.clone()?;
    match (method, an.diagonalization()) {
        (FrakMethod::Quadrature, _) | (FrakMethod::Auto, None) => panel_quadrature(m, p, n, horizon),
        (_, Some(e)) => eigen_contraction(e, p, n, |c| Ok(ExpChainCoefficients::new(c)?.value(horizon))),
        (FrakMethod::Eigen, None) => Err(Error::InvalidArgument(
            "matrix is not (well-conditioned) diagonalizable; eigen evaluation unavailable".into(),
        )),
    }
}

/// Q^{⊗n} W with W_J = Π_ℓ(-λ_{j_ℓ} q_{j_ℓ})·weight(λ_{j_1..j_n}), q = Q⁻¹p.
fn eigen_contraction(
    e: &EigenDecomposition,
    p: &[f64],
    n: usize,
    weight: impl Fn(&[Complex64]) -> Result<Complex64>,
) -> Result<Tensor<f64>> {
    let d = p.len();
    let pc: nalgebra::DVector<Complex64> = nalgebra::DVector::from_iterator(d, p.iter().map(|&x| Complex64::new(x, 0.0)));
    let q = &e.q_inv * pc;
    let mut w = Tensor::<Complex64>::zeros(d, n)?;
    let mut idx = vec![0usize; n];
    let mut lam = vec![Complex64::new(0.0, 0.0); n];
    for entry in w.entries_mut() {
        let mut f = Complex64::new(1.0, 0.0);
        for (l, &j) in idx.iter().enumerate() {
            lam[l] = e.values[j];
            f *= -e.values[j] * q[j];
        }
        *entry = if f == Complex64::new(0.0, 0.0) { f } else { f * weight(&lam)? };
        for s in (0..n).rev() {
            idx[s] += 1;
            if idx[s] < d {
                break;
            }
            idx[s] = 0;
        }
    }
    let op = MatrixTensorOperator::power(&e.q, n)?;
    real_part(&apply_operator(&op, &w)?)
}

fn real_part(t: &Tensor<Complex64>) -> Result<Tensor<f64>> {
    let size = t.entries().iter().fold(1.0f64, |a, z| a.max(z.re.abs()));
    let residue = t.entries().iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    if residue > IMAGINARY_TOLERANCE * size {
        return Err(Error::ImaginaryResidue(residue));
    }
    Ok(t.map(|z| z.re))
}

/// Signature levels 0..=n of x(τ) = (e^{-Mτ} - I)p on one panel [a, b],
/// by Gauss–Legendre collocation of F_k = ∫ F_{k-1} ⊗ dx.
fn panel_signature(m: &SquareMatrix, p: &[f64], n: usize, a: f64, b: f64, rule: &SpectralRule) -> Result<TruncatedTensorSeries<f64>> {
    let d = p.len();
    let q = rule.nodes.len();
    let h = 0.5 * (b - a);
    let mm = m.as_dmatrix();
    // g(τ) = -M e^{-Mτ} p at the nodes
    let g: Vec<Tensor<f64>> = rule
        .nodes
        .iter()
        .map(|&x| {
            let tau = a + h * (x + 1.0);
            let ep = expm(m, tau)?.mul_vec(p);
            let v = -(mm * nalgebra::DVector::from_vec(ep));
            Ok(Tensor::vector(v.as_slice()))
        })
        .collect::<Result<_>>()?;
    let mut at_nodes: Vec<Tensor<f64>> = vec![Tensor::scalar(d, 1.0); q];
    let mut levels = vec![Tensor::scalar(d, 1.0)];
    for _k in 1..=n {
        let prods: Vec<Tensor<f64>> = at_nodes.iter().zip(&g).map(|(f, gj)| tensor_product(f, gj)).collect::<Result<_>>()?;
        let mut end = Tensor::zeros(d, prods[0].level())?;
        for j in 0..q {
            end.add_scaled(&prods[j], h * rule.weights[j])?;
        }
        let mut next = Vec::with_capacity(q);
        for i in 0..q {
            let mut acc = Tensor::zeros(d, prods[0].level())?;
            for j in 0..q {
                acc.add_scaled(&prods[j], h * rule.s[i][j])?;
            }
            next.push(acc);
        }
        at_nodes = next;
        levels.push(end);
    }
    TruncatedTensorSeries::from_levels(levels)
}

fn panel_quadrature(m: &SquareMatrix, p: &[f64], n: usize, horizon: f64) -> Result<Tensor<f64>> {
    let rule = SpectralRule::new(16);
    let d = p.len();
    let scale = m.max_abs() * d as f64;
    let initial = ((horizon * scale / 4.0).ceil() as usize).clamp(1, MAX_PANELS);
    let mut panels = initial;
    let mut acc = TruncatedTensorSeries::one(d, n)?;
    let width = horizon / initial as f64;
    for i in 0..initial {
        let a = i as f64 * width;
        let b = if i + 1 == initial { horizon } else { a + width };
        let whole = panel_signature(m, p, n, a, b, &rule)?;
        let s = refine(m, p, n, a, b, whole, horizon, &rule, &mut panels)?;
        acc = series_product(&acc, &s)?;
    }
    Ok(acc.level(n).clone())
}

#[allow(clippy::too_many_arguments)]
fn refine(
    m: &SquareMatrix,
    p: &[f64],
    n: usize,
    a: f64,
    b: f64,
    whole: TruncatedTensorSeries<f64>,
    horizon: f64,
    rule: &SpectralRule,
    panels: &mut usize,
) -> Result<TruncatedTensorSeries<f64>> {
    let mid = 0.5 * (a + b);
    let left = panel_signature(m, p, n, a, mid, rule)?;
    let right = panel_signature(m, p, n, mid, b, rule)?;
    let halves = series_product(&left, &right)?;
    let tol = QUADRATURE_TOLERANCE * (b - a) / horizon;
    if halves.max_abs_diff(&whole)? <= tol || mid <= a || mid >= b {
        return Ok(halves);
    }
    *panels += 1;
    if *panels > MAX_PANELS {
        return Err(Error::QuadratureNonConvergence { max_intervals: MAX_PANELS });
    }
    let l = refine(m, p, n, a, mid, left, horizon, rule, panels)?;
    let r = refine(m, p, n, mid, b, right, horizon, rule, panels)?;
    series_product(&l, &r)
}

/// 𝔄̄_n(p), the m → 0 limit of 𝔄_n^{(m)}(t,p).
pub fn frak_a_limit(m: &SquareMatrix, p: &[f64], n: usize) -> Result<FrakA> {
    let d = m.dim();
    if p.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: p.len() });
    }
    let an = analysis(m);
    let profile = an.profile.clone()?;
    let regime = Regime::Limit { t: None };
    let value = if n == 0 {
        Tensor::scalar(d, 1.0)
    } else if m.is_scalar_multiple_of_identity() {
        // (-p)^{⊗n}/n!
        let mp: Vec<f64> = p.iter().map(|x| -x).collect();
        let v = Tensor::vector(&mp);
        let mut t = Tensor::scalar(d, 1.0);
        for k in 1..=n {
            t = tensor_product(&t, &v)?.scale(1.0 / k as f64);
        }
        t
    } else if m.is_diagonal() {
        // Π_ℓ -λ_{i_ℓ} p^{i_ℓ} / (λ_{i_ℓ} + … + λ_{i_n})
        let mut t = Tensor::<f64>::zeros(d, n)?;
        let mut idx = vec![0usize; n];
        for entry in t.entries_mut() {
            let mut f = 1.0;
            let mut tail = 0.0;
            for &i in idx.iter().rev() {
                tail += m.get(i, i);
                f *= -m.get(i, i) * p[i] / tail;
            }
            *entry = f;
            for s in (0..n).rev() {
                idx[s] += 1;
                if idx[s] < d {
                    break;
                }
                idx[s] = 0;
            }
        }
        t
    } else if let Some(e) = an.diagonalization() {
        eigen_contraction(e, p, n, |c| Ok(ExpChainCoefficients::new(c)?.product_formula()))?
    } else {
        panel_quadrature(m, p, n, LIMIT_HORIZON / profile.lambda)?
    };
    Ok(FrakA { level: n, value, regime })
}
