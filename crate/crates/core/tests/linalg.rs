use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchls::nalgebra::{DMatrix, DVector};
use sketchls::{norm_eval, solve_exact_ls, LSProblem, NormSpec};

fn random_problem(n: usize, d: usize, seed: u64) -> LSProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    LSProblem::new(a, b).unwrap()
}

/// `(A'A)^{-1} A'b` by Gauss-Jordan elimination on the normal equations.
fn normal_equations_oracle(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let d = a.ncols();
    let mut aug = DMatrix::<f64>::zeros(d, d + 1);
    for i in 0..d {
        for j in 0..d {
            aug[(i, j)] = (0..a.nrows()).map(|k| a[(k, i)] * a[(k, j)]).sum();
        }
        aug[(i, d)] = (0..a.nrows()).map(|k| a[(k, i)] * b[k]).sum();
    }
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&x, &y| aug[(x, col)].abs().total_cmp(&aug[(y, col)].abs()))
            .unwrap();
        aug.swap_rows(col, pivot);
        let p = aug[(col, col)];
        for j in 0..=d {
            aug[(col, j)] /= p;
        }
        for i in 0..d {
            if i != col {
                let f = aug[(i, col)];
                for j in 0..=d {
                    aug[(i, j)] -= f * aug[(col, j)];
                }
            }
        }
    }
    DVector::from_fn(d, |i, _| aug[(i, d)])
}

#[test]
fn matches_normal_equations_on_well_conditioned_problem() {
    let p = random_problem(20, 3, 2018);
    let x = solve_exact_ls(&p).unwrap();
    let oracle = normal_equations_oracle(p.a(), p.b());
    assert!((&x - &oracle).norm() <= 1e-8 * oracle.norm(), "{x} vs {oracle}");
}

#[test]
fn residual_is_orthogonal_to_range() {
    for seed in 0..10 {
        let p = random_problem(200, 7, seed);
        let x = solve_exact_ls(&p).unwrap();
        let g = p.gradient(&x);
        assert!(g.norm() <= 1e-8 * p.atb().norm());
    }
}

#[test]
fn permutation_invariance() {
    let p = random_problem(60, 4, 5);
    let x = solve_exact_ls(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10 {
        let mut perm: Vec<usize> = (0..60).collect();
        for i in (1..60).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let a = DMatrix::from_fn(60, 4, |i, j| p.a()[(perm[i], j)]);
        let b = DVector::from_fn(60, |i, _| p.b()[perm[i]]);
        let xp = solve_exact_ls(&LSProblem::new(a, b).unwrap()).unwrap();
        assert!((&xp - &x).norm() <= 1e-8 * x.norm());
    }
}

fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, 1..12)
}

proptest! {
    #[test]
    fn standard_norms_are_symmetric_and_ordered(v in vec_strategy()) {
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        for spec in [NormSpec::L1, NormSpec::L2, NormSpec::LInf] {
            prop_assert_eq!(norm_eval(&spec, &v).unwrap(), norm_eval(&spec, &neg).unwrap());
            prop_assert_eq!(norm_eval(&spec, &vec![0.0; v.len()]).unwrap(), 0.0);
        }
        let l1 = norm_eval(&NormSpec::L1, &v).unwrap();
        let l2 = norm_eval(&NormSpec::L2, &v).unwrap();
        let linf = norm_eval(&NormSpec::LInf, &v).unwrap();
        prop_assert!(linf <= l2 * (1.0 + 1e-12));
        prop_assert!(l2 <= l1 * (1.0 + 1e-12));
    }

    #[test]
    fn norms_are_homogeneous_and_subadditive(
        (u, w) in (1usize..10).prop_flat_map(|k| (
            prop::collection::vec(-1e3..1e3f64, k),
            prop::collection::vec(-1e3..1e3f64, k),
        )),
        c in -50.0..50.0f64,
        p in 1.0..6.0f64,
    ) {
        let sum: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + b).collect();
        let scaled: Vec<f64> = u.iter().map(|a| c * a).collect();
        for spec in [NormSpec::L1, NormSpec::L2, NormSpec::LInf, NormSpec::Lp(p)] {
            let nu = norm_eval(&spec, &u).unwrap();
            let nw = norm_eval(&spec, &w).unwrap();
            let ns = norm_eval(&spec, &sum).unwrap();
            prop_assert!(ns <= (nu + nw) * (1.0 + 1e-12) + 1e-12);
            let nc = norm_eval(&spec, &scaled).unwrap();
            prop_assert!((nc - c.abs() * nu).abs() <= 1e-10 * (1.0 + c.abs() * nu));
        }
    }
}
