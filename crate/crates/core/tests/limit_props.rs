mod common;

use common::{block_spectrum, hurwitz_strategy, similar};
use esig_core::limit::ERROR_FLOOR;
use esig_core::{
    area_limit, convergence_sweep, esig_good_part, esig_limit, frak_a_limit, linfty_norm, spectral_profile,
    stationary_c, tensor_product, xi, ModelParams, SquareMatrix, SweepStatus, Tensor,
};
use proptest::prelude::*;

fn diagonalizable(d: usize) -> impl Strategy<Value = SquareMatrix> {
    (
        prop::collection::vec(0.5f64..3.0, d),
        prop::collection::vec(prop_oneof![Just(0.0), -2.0f64..2.0], d),
        prop::collection::vec(-1.0f64..1.0, d * d),
    )
        .prop_map(|(re, im, seed)| SquareMatrix::new(similar(&block_spectrum(&re, &im), &seed, 0.3)).unwrap())
}

fn power(a: &Tensor<f64>, k: usize) -> Tensor<f64> {
    let mut out = Tensor::scalar(a.dim(), 1.0);
    for _ in 0..k {
        out = tensor_product(&out, a).unwrap();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn level_zero_is_one(m in hurwitz_strategy(3), mass in 0.05f64..1.0, t in 0.1f64..2.0, seed in prop::collection::vec(-1.0f64..1.0, 3)) {
        let d = m.dim();
        let pr = ModelParams::new(m.clone(), mass, seed[..d].to_vec(), 3).unwrap();
        let g = esig_good_part(&pr, t).unwrap().series;
        let l = esig_limit(&m, &pr.p, t, 3).unwrap().series;
        prop_assert_eq!(g.level(0).entries(), &[1.0]);
        prop_assert_eq!(l.level(0).entries(), &[1.0]);
    }

    #[test]
    fn limit_homogeneity(m in diagonalizable(2), c in -2.0f64..2.0, t in 0.1f64..2.0, p in prop::collection::vec(-1.5f64..1.5, 2)) {
        let depth = 4;
        let cp: Vec<f64> = p.iter().map(|x| c * x).collect();
        let scaled = esig_limit(&m, &cp, t, depth).unwrap().series;
        let area = Tensor::from_matrix(area_limit(&m).unwrap().scale(t).as_dmatrix()).unwrap();
        for n in 0..=depth {
            let mut want = Tensor::zeros(2, n).unwrap();
            for k in 0..=n / 2 {
                let frak = frak_a_limit(&m, &p, n - 2 * k).unwrap().value;
                let term = tensor_product(&frak, &power(&area, k)).unwrap();
                want.add_scaled(&term, c.powi((n - 2 * k) as i32)).unwrap();
            }
            let got = scaled.level(n);
            prop_assert!(got.max_abs_diff(&want).unwrap() <= 1e-11 * linfty_norm(&want).max(1.0));
        }
    }

    #[test]
    fn good_part_tends_to_limit(m in diagonalizable(2), t in 0.5f64..1.5, p in prop::collection::vec(-1.0f64..1.0, 2)) {
        let pr = ModelParams::new(m.clone(), 0.2, p.clone(), 4).unwrap();
        let lim = esig_limit(&m, &p, t, 4).unwrap().series;
        let grid = [0.1, 0.05, 0.025, 0.0125];
        let gaps: Vec<Vec<f64>> = grid
            .iter()
            .map(|&mm| {
                let g = esig_good_part(&pr.with_mass(mm).unwrap(), t).unwrap().series;
                (1..=4).map(|n| linfty_norm(&g.level(n).sub(lim.level(n)).unwrap())).collect()
            })
            .collect();
        for n in 0..4 {
            for w in gaps.windows(2) {
                prop_assert!(w[1][n] <= w[0][n] + 1e-10, "level {}: {:?}", n + 1, gaps.iter().map(|g| g[n]).collect::<Vec<_>>());
            }
            prop_assert!(gaps[3][n] <= 0.3 * gaps[0][n] + 1e-10);
        }
    }

    #[test]
    fn zero_momentum_even_levels(m in hurwitz_strategy(3), mass in 0.05f64..1.0, t in 0.1f64..2.0) {
        let d = m.dim();
        let pr = ModelParams::new(m.clone(), mass, vec![0.0; d], 4).unwrap();
        let g = esig_good_part(&pr, t).unwrap().series;
        let x = Tensor::from_matrix(xi(&m, mass, t).unwrap().scale(t).as_dmatrix()).unwrap();
        prop_assert_eq!(g.level(2), &power(&x, 1));
        prop_assert_eq!(g.level(4), &power(&x, 2));
        prop_assert_eq!(linfty_norm(g.level(1)), 0.0);
        prop_assert_eq!(linfty_norm(g.level(3)), 0.0);
    }
}

#[test]
fn scalar_sweep_slope() {
    let pr = ModelParams::new(SquareMatrix::identity(1), 1.0, vec![1.0], 3).unwrap();
    let r = convergence_sweep(&pr, 1.0, 3, &[0.2, 0.1, 0.05, 0.025]).unwrap();
    let s = r.slope.unwrap();
    assert!((0.8..=1.3).contains(&s), "slope {s}");
    assert!(r.errors.iter().zip(&r.bound).all(|(e, b)| e <= b));
}

#[test]
fn symmetric_zero_momentum_sits_at_floor() {
    let m = SquareMatrix::from_row_major(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
    let pr = ModelParams::new(m, 1.0, vec![0.0, 0.0], 3).unwrap();
    for n in [1, 3] {
        let r = convergence_sweep(&pr, 1.0, n, &[0.2, 0.1, 0.05, 0.025]).unwrap();
        assert!(r.errors.iter().all(|&e| e <= 1e-10));
        assert_eq!(r.status, SweepStatus::Floor);
        assert_eq!(r.slope, None);
    }
}

#[test]
fn zero_momentum_area_gap() {
    let m = SquareMatrix::from_row_major(2, &[1.0, 2.0, -2.0, 1.0]).unwrap();
    let prof = spectral_profile(&m).unwrap();
    let pr = ModelParams::new(m.clone(), 1.0, vec![0.0, 0.0], 2).unwrap();
    let t = 1.0;
    let grid = [0.2, 0.1, 0.05, 0.025];
    let r = convergence_sweep(&pr, t, 2, &grid).unwrap();
    let c = stationary_c(&m).unwrap();
    let d = 2.0;
    for (&mm, &e) in grid.iter().zip(&r.errors) {
        let x = xi(&m, mm, t).unwrap().into_dmatrix() * t;
        let lim = (m.as_dmatrix() * c.as_dmatrix() - nalgebra::DMatrix::<f64>::identity(2, 2) * 0.5) * t;
        let direct = common::max_abs(&(x - lim));
        assert!((direct - e).abs() <= 1e-14);
        // ‖M(avg − C)‖ t ≤ Λ d K²d m / (4λ²)
        let bound = prof.big_lambda * d * prof.k * prof.k * d * mm / (4.0 * prof.lambda * prof.lambda);
        assert!(e <= bound, "m={mm}: {e} > {bound}");
        assert!(e >= ERROR_FLOOR);
    }
    let s = r.slope.unwrap();
    assert!((0.8..=1.3).contains(&s), "slope {s}");
}

#[test]
fn sweep_rejects_bad_grids() {
    let pr = ModelParams::new(SquareMatrix::identity(1), 1.0, vec![1.0], 3).unwrap();
    assert!(convergence_sweep(&pr, 1.0, 2, &[0.1, 0.2]).is_err());
    assert!(convergence_sweep(&pr, 1.0, 2, &[]).is_err());
    assert!(convergence_sweep(&pr, 1.0, 2, &[0.1, -0.1]).is_err());
}
