#![allow(dead_code)]

use esig_core::SquareMatrix;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Block diagonal matrix with real parts `re`; consecutive pairs with
/// `im[i] != 0` become rotation blocks [[a, b], [-b, a]].
pub fn block_spectrum(re: &[f64], im: &[f64]) -> DMatrix<f64> {
    let d = re.len();
    let mut b = DMatrix::zeros(d, d);
    let mut i = 0;
    while i < d {
        if i + 1 < d && im[i] != 0.0 {
            b[(i, i)] = re[i];
            b[(i + 1, i + 1)] = re[i];
            b[(i, i + 1)] = im[i];
            b[(i + 1, i)] = -im[i];
            i += 2;
        } else {
            b[(i, i)] = re[i];
            i += 1;
        }
    }
    b
}

/// Q B Qᵀ with Q the orthogonal factor of `seed`.
pub fn orthogonal_conjugate(b: &DMatrix<f64>, seed: &[f64]) -> DMatrix<f64> {
    let d = b.nrows();
    let g = DMatrix::from_row_slice(d, d, seed) + DMatrix::identity(d, d) * 1e-3;
    let q = g.qr().q();
    &q * b * q.transpose()
}

/// G B G⁻¹ with G = I + `strength`·seed, a non-normal similarity.
pub fn similar(b: &DMatrix<f64>, seed: &[f64], strength: f64) -> DMatrix<f64> {
    let d = b.nrows();
    let g = DMatrix::identity(d, d) + DMatrix::from_row_slice(d, d, seed) * strength;
    let gi = g.clone().try_inverse().expect("I + small perturbation is invertible");
    &g * b * gi
}

/// Random Hurwitz matrix: spectrum real parts in [0.5, 3], optional rotation
/// blocks, random orthogonal conjugation.
pub fn hurwitz_strategy(max_d: usize) -> impl Strategy<Value = SquareMatrix> {
    (1..=max_d).prop_flat_map(|d| {
        (
            prop::collection::vec(0.5f64..3.0, d),
            prop::collection::vec(prop_oneof![Just(0.0), -2.0f64..2.0], d),
            prop::collection::vec(-1.0f64..1.0, d * d),
        )
            .prop_map(|(re, im, seed)| {
                let b = block_spectrum(&re, &im);
                SquareMatrix::new(orthogonal_conjugate(&b, &seed)).unwrap()
            })
    })
}

/// Random non-normal Hurwitz matrix of dimension exactly `d`.
pub fn nonnormal_hurwitz_strategy(d: usize) -> impl Strategy<Value = SquareMatrix> {
    (
        prop::collection::vec(0.5f64..3.0, d),
        prop::collection::vec(prop_oneof![Just(0.0), -2.0f64..2.0], d),
        prop::collection::vec(-1.0f64..1.0, d * d),
    )
        .prop_map(|(re, im, seed)| {
            let b = block_spectrum(&re, &im);
            SquareMatrix::new(similar(&b, &seed, 0.3)).unwrap()
        })
}

/// max |a_ij|
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Adaptive Gauss–Kronrod (7, 15) on [a, b] applied entrywise to a
/// matrix-valued integrand.
pub fn gk_matrix<F: Fn(f64) -> DMatrix<f64>>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> DMatrix<f64> {
    let (k, g) = gk_pair(f, a, b);
    let err = max_abs(&(&k - &g));
    if err <= tol || depth == 0 {
        return k;
    }
    let mid = 0.5 * (a + b);
    gk_matrix(f, a, mid, 0.5 * tol, depth - 1) + gk_matrix(f, mid, b, 0.5 * tol, depth - 1)
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk_pair<F: Fn(f64) -> DMatrix<f64>>(f: &F, a: f64, b: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = &fc * WGK[7];
    let mut g = &fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += &s * WGK[j];
        if j % 2 == 1 {
            g += &s * WG[j / 2];
        }
    }
    (k * h, g * h)
}

/// Scalar adaptive Gauss–Kronrod.
pub fn gk<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let m = |x: f64| DMatrix::from_element(1, 1, f(x));
    gk_matrix(&m, a, b, tol, 40)[(0, 0)]
}

/// 𝒜^{c₁…c_n}(t) = ∫_{0<t₁<…<t_n<t} Π e^{-c_j t_j} by nested adaptive
/// Gauss–Kronrod, innermost variable paired with c₁.
pub fn nested_chain(c: &[num_complex::Complex64], t: f64, tol: f64) -> num_complex::Complex64 {
    use num_complex::Complex64;
    let Some((&last, rest)) = c.split_last() else {
        return Complex64::new(1.0, 0.0);
    };
    if t == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let f = |u: f64| {
        let v = nested_chain(rest, u, tol) * (-last * u).exp();
        DMatrix::from_row_slice(1, 2, &[v.re, v.im])
    };
    let r = gk_matrix(&f, 0.0, t, tol, 20);
    Complex64::new(r[(0, 0)], r[(0, 1)])
}
