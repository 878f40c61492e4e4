//! Gauss–Legendre rules, adaptive Gauss–Kronrod integration and the
//! spectral integration matrix used for panel collocation.

use crate::error::{Error, Result};

/// Nodes and weights of the `q`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    for i in 0..q.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_q
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(q, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(q, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[q - 1 - i] = x;
        weights[i] = w;
        weights[q - 1 - i] = w;
    }
    (nodes, weights)
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// P_0(x) ..= P_n(x).
fn legendre_all(n: usize, x: f64) -> Vec<f64> {
    let mut p = vec![1.0; n + 1];
    if n >= 1 {
        p[1] = x;
    }
    for k in 2..=n {
        p[k] = ((2 * k - 1) as f64 * x * p[k - 1] - (k - 1) as f64 * p[k - 2]) / k as f64;
    }
    p
}

/// Collocation rule on [-1, 1]: `s[i][j]` integrates the Lagrange basis
/// polynomial of node `j` from -1 to node `i`; `w[j]` integrates it over the
/// whole interval.
#[derive(Clone, Debug)]
pub struct SpectralRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub s: Vec<Vec<f64>>,
}

impl SpectralRule {
    pub fn new(q: usize) -> Self {
        let (nodes, weights) = gauss_legendre(q);
        // ℓ_j = Σ_k c_jk P_k with c_jk = w_j P_k(x_j)(2k+1)/2
        let c: Vec<Vec<f64>> = (0..q)
            .map(|j| {
                let pj = legendre_all(q - 1, nodes[j]);
                (0..q).map(|k| weights[j] * pj[k] * (2 * k + 1) as f64 / 2.0).collect()
            })
            .collect();
        let s = (0..q)
            .map(|i| {
                let p = legendre_all(q, nodes[i]);
                // ∫_{-1}^{x} P_k
                let int: Vec<f64> = (0..q)
                    .map(|k| if k == 0 { nodes[i] + 1.0 } else { (p[k + 1] - p[k - 1]) / (2 * k + 1) as f64 })
                    .collect();
                (0..q).map(|j| (0..q).map(|k| c[j][k] * int[k]).sum()).collect()
            })
            .collect();
        SpectralRule { nodes, weights, s }
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> Vec<f64>>(f: &mut F, a: f64, b: f64) -> (Vec<f64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let n = fc.len();
    let mut k = vec![0.0; n];
    let mut g = vec![0.0; n];
    for r in 0..n {
        k[r] = GK_WK[7] * fc[r];
        g[r] = GK_WG[3] * fc[r];
    }
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let f1 = f(c - x);
        let f2 = f(c + x);
        for r in 0..n {
            let s = f1[r] + f2[r];
            k[r] += GK_WK[i] * s;
            if i % 2 == 1 {
                g[r] += GK_WG[i / 2] * s;
            }
        }
    }
    let mut err = 0.0f64;
    for r in 0..n {
        k[r] *= h;
        err = err.max((k[r] - g[r] * h).abs());
    }
    (k, err)
}

/// Adaptive 7/15-point Gauss–Kronrod integration of a vector valued
/// integrand. Bisects the interval with the largest error estimate until the
/// summed estimate falls below `tol`.
pub fn integrate<F: FnMut(f64) -> Vec<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_intervals: usize,
) -> Result<Vec<f64>> {
    let (v, e) = gk15(&mut f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total_err: f64 = parts.iter().map(|p| p.3).sum();
        if total_err <= tol {
            break;
        }
        if parts.len() >= max_intervals {
            return Err(Error::QuadratureNonConvergence { max_intervals });
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (lo, hi, _, _) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = parts[0].2.len();
    let mut out = vec![0.0; n];
    for p in &parts {
        for r in 0..n {
            out[r] += p.2[r];
        }
    }
    Ok(out)
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    Ok(integrate(|x| vec![f(x)], a, b, tol, 10_000)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exactness() {
        for q in [1, 2, 5, 16] {
            let (x, w) = gauss_legendre(q);
            for deg in 0..2 * q {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - want).abs() < 1e-14, "q={q} deg={deg}");
            }
        }
    }

    #[test]
    fn spectral_rule_integrates_polynomials() {
        let r = SpectralRule::new(8);
        // f(x) = 3x^2 - x + 2, F(x) = ∫_{-1}^x f = x^3 - x^2/2 + 2x - (-1 - 1/2 - 2)
        let f = |x: f64| 3.0 * x * x - x + 2.0;
        let big_f = |x: f64| x.powi(3) - x * x / 2.0 + 2.0 * x + 3.5;
        for i in 0..8 {
            let got: f64 = (0..8).map(|j| r.s[i][j] * f(r.nodes[j])).sum();
            assert!((got - big_f(r.nodes[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn adaptive_known_integrals() {
        let v = integrate_scalar(|x| (-x).exp(), 0.0, 10.0, 1e-13).unwrap();
        assert!((v - (1.0 - (-10.0f64).exp())).abs() < 1e-13);
        let v = integrate_scalar(|x| x.sqrt(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-11);
        let v = integrate(|x| vec![x.sin(), x.cos()], 0.0, std::f64::consts::PI, 1e-13, 1000).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-13 && v[1].abs() < 1e-13);
    }

    #[test]
    fn adaptive_gives_up() {
        let r = integrate(|x| vec![1.0 / x.abs().max(1e-300)], -1.0, 1.0, 1e-12, 20);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }
}
