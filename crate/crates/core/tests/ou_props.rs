mod common;

use common::{gk_matrix, hurwitz_strategy, max_abs};
use esig_core::{
    exact_step, expm, gaussian_tensor_moment, law_at, stationary_c, ExactStepper, GaussianLaw, ModelParams,
    PathStream, SquareMatrix,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn params_strategy() -> impl Strategy<Value = ModelParams> {
    hurwitz_strategy(3).prop_flat_map(|m| {
        let d = m.dim();
        (Just(m), 0.1f64..2.0, prop::collection::vec(-2.0f64..2.0, d))
            .prop_map(|(m, mass, p)| ModelParams::new(m, mass, p, 2).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn law_covariance_matches_quadrature(pr in params_strategy(), t in 0.05f64..3.0) {
        let law = law_at(&pr, t).unwrap();
        let scaled = pr.matrix.scale(1.0 / pr.mass);
        let f = |s: f64| {
            let e = expm(&scaled, s).unwrap().into_dmatrix();
            &e * e.transpose()
        };
        let want = gk_matrix(&f, 0.0, t, 1e-13, 30);
        prop_assert!(max_abs(&(law.cov.as_dmatrix() - want)) <= 1e-9);
        let mean = expm(&scaled, t).unwrap().mul_vec(&pr.p);
        for (a, b) in law.mean.iter().zip(&mean) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-3));
        }
    }

    #[test]
    fn covariance_does_not_depend_on_p(pr in params_strategy(), t in 0.05f64..3.0) {
        let other = pr.with_p(vec![0.0; pr.dim()]).unwrap();
        prop_assert_eq!(law_at(&pr, t).unwrap().cov, law_at(&other, t).unwrap().cov);
    }

    #[test]
    fn odd_centred_moments_vanish(pr in params_strategy(), t in 0.05f64..3.0, q in prop::sample::select(vec![1usize, 3, 5])) {
        let law = law_at(&pr, t).unwrap();
        let centred = GaussianLaw::new(vec![0.0; pr.dim()], law.cov).unwrap();
        let mom = gaussian_tensor_moment(&centred, q).unwrap();
        prop_assert!(mom.entries().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn chained_steps_compose(pr in params_strategy(), dt in 0.01f64..0.5, k in 2usize..6) {
        let one = ExactStepper::new(&pr, dt).unwrap();
        let whole = ExactStepper::new(&pr, dt * k as f64).unwrap();
        let e = one.transition();
        let l = one.cholesky_factor();
        let step_cov = l * l.transpose();
        let d = pr.dim();
        let mut mean_map = DMatrix::<f64>::identity(d, d);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for _ in 0..k {
            mean_map = e * mean_map;
            cov = e * cov * e.transpose() + &step_cov;
        }
        let lw = whole.cholesky_factor();
        prop_assert!(max_abs(&(mean_map - whole.transition())) <= 1e-10);
        prop_assert!(max_abs(&(cov - lw * lw.transpose())) <= 1e-10);
    }
}

/// Sample mean and standard error of E[X^{⊗q}] entries from draws of X.
fn sample_moments(draws: &[Vec<f64>], q: usize) -> (Vec<f64>, Vec<f64>) {
    let d = draws[0].len();
    let len = d.pow(q as u32);
    let mut sum = vec![0.0; len];
    let mut sq = vec![0.0; len];
    for x in draws {
        for (flat, (s, s2)) in sum.iter_mut().zip(sq.iter_mut()).enumerate() {
            let mut v = 1.0;
            let mut r = flat;
            for _ in 0..q {
                v *= x[r % d];
                r /= d;
            }
            *s += v;
            *s2 += v * v;
        }
    }
    let n = draws.len() as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se = sq.iter().zip(&mean).map(|(s2, m)| ((s2 / n - m * m) * n / (n - 1.0)).sqrt() / n.sqrt()).collect();
    (mean, se)
}

#[test]
fn tensor_moments_match_sampling() {
    let mean = vec![0.4, -0.3];
    let cov = SquareMatrix::from_row_major(2, &[0.5, 0.2, 0.2, 0.3]).unwrap();
    let law = GaussianLaw::new(mean.clone(), cov.clone()).unwrap();
    let l = cov.as_dmatrix().clone().cholesky().unwrap().l();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws: Vec<Vec<f64>> = (0..1_000_000)
        .map(|_| {
            let z = DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
            let x = &l * z;
            vec![mean[0] + x[0], mean[1] + x[1]]
        })
        .collect();
    for q in 1..=4 {
        let exact = gaussian_tensor_moment(&law, q).unwrap();
        let (m, se) = sample_moments(&draws, q);
        // sample_moments enumerates multi-indices with the first slot fastest
        for (flat, (&mv, &s)) in m.iter().zip(&se).enumerate() {
            let mut idx = vec![0usize; q];
            let mut r = flat;
            for slot in idx.iter_mut() {
                *slot = r % 2;
                r /= 2;
            }
            let e = exact.get(&idx).unwrap();
            assert!((mv - e).abs() <= 4.0 * s, "q={q} {idx:?}: {mv} vs {e} (se {s})");
        }
    }
}

#[test]
fn exact_step_mean_is_unbiased() {
    let m = SquareMatrix::from_row_major(2, &[1.0, 0.5, -0.5, 2.0]).unwrap();
    let pr = ModelParams::new(m, 0.5, vec![1.0, -1.0], 2).unwrap();
    let dt = 0.3;
    let want = expm(&pr.matrix.scale(1.0 / pr.mass), dt).unwrap().mul_vec(&pr.p);
    let n = 100_000u64;
    let draws: Vec<Vec<f64>> = (0..n).map(|i| exact_step(&pr, &pr.p, dt, &mut PathStream::new(5, i)).unwrap()).collect();
    let (mean, se) = sample_moments(&draws, 1);
    for i in 0..2 {
        assert!((mean[i] - want[i]).abs() <= 4.0 * se[i], "{i}: {} vs {}", mean[i], want[i]);
    }
}

#[test]
fn stationary_law_is_preserved() {
    let m = SquareMatrix::from_row_major(2, &[1.0, 2.0, -2.0, 1.5]).unwrap();
    let mass = 0.7;
    let pr = ModelParams::new(m.clone(), mass, vec![0.0, 0.0], 2).unwrap();
    let target = stationary_c(&m).unwrap().scale(mass).into_dmatrix();
    let l = target.clone().cholesky().unwrap().l();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000u64;
    let draws: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let z = DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
            let x0 = &l * z;
            exact_step(&pr, x0.as_slice(), 0.2, &mut PathStream::new(8, i)).unwrap()
        })
        .collect();
    let (second, _) = sample_moments(&draws, 2);
    for i in 0..2 {
        for j in 0..2 {
            let got = second[i + 2 * j];
            let want = target[(i, j)];
            assert!((got - want).abs() <= 0.05 * target[(i, i)].max(target[(j, j)]), "({i},{j}): {got} vs {want}");
        }
    }
}

#[test]
fn law_examples() {
    let pr = ModelParams::new(SquareMatrix::identity(1).scale(1.6), 0.4, vec![0.8], 2).unwrap();
    let law0 = law_at(&pr, 0.0).unwrap();
    assert_eq!(law0.mean, vec![0.8]);
    assert_eq!(law0.cov.get(0, 0), 0.0);
    // θ = 4
    let t = 0.35;
    let law = law_at(&pr, t).unwrap();
    assert!((law.cov.get(0, 0) - (1.0 - (-8.0 * t).exp()) / 8.0).abs() < 1e-15);
    let far = law_at(&pr, 200.0).unwrap();
    assert!(far.mean[0].abs() < 1e-300);
    assert!((far.cov.get(0, 0) - 0.4 / (2.0 * 1.6)).abs() < 1e-15);
}
