use super::*;
use crate::numlin::{eye, hinf_norm, lambda_max, lyap_solve, sym_eigvals};
use crate::plant::random_stable;
use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn s1(a: f64, b: f64, c: f64, d: f64) -> StateSpace {
    let m = |v| Mat::from_element(1, 1, v);
    StateSpace::new(m(a), m(b), m(c), m(d)).unwrap()
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

#[test]
fn lag_matrix_hand_value() {
    let m = bounded_real_matrix(&s1(-1.0, 1.0, 1.0, 0.0), &eye(1), 1.1);
    let want = Mat::from_row_slice(3, 3, &[-2.0, 1.0, 1.0, 1.0, -1.1, 0.0, 1.0, 0.0, -1.1]);
    assert!((&m - &want).norm() < 1e-15);
    assert!(lambda_max(&m) < 0.0);
    let low = bounded_real_matrix(&s1(-1.0, 1.0, 1.0, 0.0), &eye(1), 0.9);
    assert!(lambda_max(&low) > 0.0);
}

#[test]
fn expr_matches_numeric() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ss = random_stable(&mut rng, 3, 2, 2, true, 0.1);
    let mut model = Model::new();
    let y = model.symmetric("Y", 3);
    let nu = model.scalar("nu");
    let e = bounded_real_expr(&mut model, &ss, &AffineMat::var(y), nu).unwrap();
    let yv = numlin::symmetrize(&Mat::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0)));
    let mut x = vec![0.0; model.num_scalars()];
    for ent in model.entries(y) {
        x[ent.idx] = yv[(ent.row, ent.col)] / ent.coef;
    }
    for ent in model.entries(nu) {
        x[ent.idx] = 2.5;
    }
    let got = model.eval(&e, &x);
    assert!((&got - bounded_real_matrix(&ss, &yv, 2.5)).norm() < 1e-12);
}

#[test]
fn dimension_mismatch() {
    let mut model = Model::new();
    let y = model.symmetric("Y", 2);
    let nu = model.scalar("nu");
    assert!(bounded_real_expr(&mut model, &s1(-1.0, 1.0, 1.0, 0.0), &AffineMat::var(y), nu).is_err());
}

#[test]
fn decoupled_channels_hold_with_lyapunov_storage() {
    let a = Mat::from_row_slice(2, 2, &[-1.0, 3.0, 0.0, -2.0]);
    let ss = StateSpace::new(a.clone(), Mat::zeros(2, 1), Mat::zeros(1, 2), Mat::zeros(1, 1)).unwrap();
    let y = lyap_solve(&a, &eye(2)).unwrap();
    assert!(sym_eigvals(&y).unwrap().iter().all(|&v| v > 0.0));
    for nu in [1e-3, 1.0, 50.0] {
        assert!(HinfCertificate { y: y.clone(), nu }.holds_for(&ss, 0.0));
    }
}

#[test]
fn min_hinf_examples() {
    let c = min_hinf(&s1(-1.0, 1.0, 1.0, 0.0), &opts()).unwrap();
    assert!((c.nu - 1.0).abs() < 1e-3, "{}", c.nu);
    let c = min_hinf(&s1(-1.0, 1.0, 1.0, 1.0), &opts()).unwrap();
    assert!((c.nu - 2.0).abs() < 2e-3, "{}", c.nu);
    assert!(matches!(min_hinf(&s1(1.0, 1.0, 1.0, 0.0), &opts()), Err(ConicError::Infeasible)));
}

#[test]
fn min_hinf_agrees_with_hamiltonian_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..50 {
        let n = rng.random_range(1..=10);
        let m = rng.random_range(1..=3);
        let l = rng.random_range(1..=3);
        let ft = rng.random_bool(0.5);
        let ss = random_stable(&mut rng, n, m, l, ft, 0.2);
        let oracle = hinf_norm(&ss, 1e-10).unwrap();
        let c = min_hinf(&ss, &opts()).unwrap();
        assert!(c.holds_for(&ss, 0.0), "trial {trial}");
        assert!((c.nu - oracle).abs() <= 1e-3 * oracle, "trial {trial}: {} vs {oracle}", c.nu);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn feasibility_is_monotone_in_nu(seed in 0u64..500, bump in 1e-6f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ss = random_stable(&mut rng, 3, 2, 1, true, 0.2);
        let c = min_hinf(&ss, &opts()).unwrap();
        prop_assert!(c.holds_for(&ss, 0.0));
        let looser = HinfCertificate { y: c.y.clone(), nu: c.nu + bump };
        prop_assert!(looser.holds_for(&ss, 0.0));
    }
}
