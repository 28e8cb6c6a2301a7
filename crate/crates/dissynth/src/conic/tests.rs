use super::*;
use crate::numlin::{eye, lambda_max};

fn scalar_mat(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

#[test]
fn he_of_constant() {
    let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let e = LmiExpr::he(&AffineMat::constant(a.clone()));
    let m = Model::new();
    assert_eq!(m.eval(&e, &[]), &a + a.transpose());
}

#[test]
fn stack_of_zeros() {
    let e = LmiExpr::stack(&[2, 3], &[vec![None], vec![None, None]]);
    assert_eq!(e.dim(), 5);
    assert_eq!(Model::new().eval(&e, &[]), Mat::zeros(5, 5));
}

#[test]
fn ndt_form_at_trivial_point() {
    // Q + SH + HᵀSᵀ + HᵀRH at Q=−I, S=0, R=0, H=0
    let mut model = Model::new();
    let q = model.symmetric("Q", 2);
    let s = model.matrix("S", 2, 2, None);
    let expr = LmiExpr::sym(&AffineMat::var(q)).add(&LmiExpr::he(&AffineMat::product(&eye(2), s, &Mat::zeros(2, 2))));
    let mut x = vec![0.0; model.num_scalars()];
    for e in model.entries(q) {
        if e.row == e.col {
            x[e.idx] = -1.0;
        }
    }
    assert_eq!(model.eval(&expr, &x), -eye(2));
}

#[test]
fn scalar_lp_in_disguise() {
    let mut model = Model::new();
    let nu = model.scalar("nu");
    let e = LmiExpr::affine(&scalar_mat(1.0)).add(&LmiExpr::sym(&AffineMat::var(nu)).scale(-1.0));
    model.negdef("c", e, None).unwrap();
    model.minimize_scalar(nu, 1.0);
    let sol = model.solve(&SolverOptions::default()).unwrap();
    let v = model.value(nu, &sol.x)[(0, 0)];
    assert!(v > 1.0 && v < 1.0 + 1e-5, "{v}");
    assert!((sol.objective - v).abs() < 1e-12);
}

#[test]
fn identity_negdef_is_infeasible() {
    let mut model = Model::new();
    model.negdef("c", LmiExpr::affine(&eye(2)), None).unwrap();
    assert_eq!(model.solve(&SolverOptions::default()).unwrap_err(), ConicError::Infeasible);
}

#[test]
fn infeasible_with_variables() {
    // x ≤ −1 and x ≥ 1
    let mut model = Model::new();
    let x = model.scalar("x");
    let v = AffineMat::var(x);
    model.negdef("a", LmiExpr::sym(&v.add_const(&scalar_mat(1.0))), Some(0.0)).unwrap();
    model.negdef("b", LmiExpr::sym(&v.scale(-1.0).add_const(&scalar_mat(1.0))), Some(0.0)).unwrap();
    assert_eq!(model.solve(&SolverOptions::default()).unwrap_err(), ConicError::Infeasible);
}

fn bounded_real_scalar(a: f64, b: f64, c: f64, d: f64) -> (Model, VarRef) {
    let mut model = Model::new();
    let y = model.symmetric("Y", 1);
    let nu = model.scalar("nu");
    let nui = model.scaled_identity(nu, 1);
    let ay = AffineMat::var(y);
    let neg_nu = AffineMat::var(nui).scale(-1.0);
    let e = LmiExpr::stack(
        &[1, 1, 1],
        &[
            vec![Some(ay.rmul(&scalar_mat(a)).scale(2.0))],
            vec![Some(ay.rmul(&scalar_mat(b)).transpose()), Some(neg_nu.clone())],
            vec![Some(AffineMat::constant(scalar_mat(c))), Some(AffineMat::constant(scalar_mat(d))), Some(neg_nu)],
        ],
    );
    model.negdef("br", e, None).unwrap();
    model.posdef("Y", LmiExpr::sym(&ay), None).unwrap();
    model.minimize_scalar(nu, 1.0);
    (model, nu)
}

#[test]
fn bounded_real_first_order() {
    let (model, nu) = bounded_real_scalar(-1.0, 1.0, 1.0, 0.0);
    let sol = model.solve(&SolverOptions::default()).unwrap();
    let v = model.value(nu, &sol.x)[(0, 0)];
    assert!((v - 1.0).abs() < 1e-3, "{v}");
    let (model, nu) = bounded_real_scalar(-1.0, 1.0, 1.0, 1.0);
    let sol = model.solve(&SolverOptions::default()).unwrap();
    assert!((model.value(nu, &sol.x)[(0, 0)] - 2.0).abs() < 2e-3);
}

#[test]
fn unstable_bounded_real_infeasible() {
    let (model, _) = bounded_real_scalar(1.0, 1.0, 1.0, 0.0);
    assert_eq!(model.solve(&SolverOptions::default()).unwrap_err(), ConicError::Infeasible);
}

#[test]
fn masked_entries_are_zero() {
    let mut model = Model::new();
    let mut mask = Mask::from_element(3, 3, true);
    mask[(0, 2)] = false;
    mask[(2, 1)] = false;
    let k = model.matrix("K", 3, 3, Some(&mask));
    // minimize ½‖K − T‖² subject to a loose bound
    let t = Mat::from_fn(3, 3, |i, j| (i + 2 * j) as f64 - 2.0);
    model.minimize_quadratic(k, 1.0, &t);
    let big = LmiExpr::affine(&(-eye(6) * 100.0));
    let kk = AffineMat::var(k);
    let e = big.add(&LmiExpr::stack(&[3, 3], &[vec![None], vec![Some(kk), None]]));
    model.negdef("bound", e, None).unwrap();
    let sol = model.solve(&SolverOptions::default()).unwrap();
    let v = model.value(k, &sol.x);
    assert_eq!(v[(0, 2)], 0.0);
    assert_eq!(v[(2, 1)], 0.0);
    assert!((v[(1, 1)] - t[(1, 1)]).abs() < 1e-5);
}

#[test]
fn equality_constraints() {
    // min x1 + 2 x2, x1 + x2 = 1, x ≥ 0 → (1, 0)
    let mut model = Model::new();
    let x = model.matrix("x", 2, 1, None);
    let ix = model.indices(x);
    model.equality(vec![(ix[0], 1.0), (ix[1], 1.0)], 1.0);
    for (k, &i) in ix.iter().enumerate() {
        let sel = Mat::from_fn(1, 2, |_, j| if j == k { 1.0 } else { 0.0 });
        model.posdef(&format!("x{k}"), LmiExpr::sym(&AffineMat::var(x).lmul(&sel)), Some(0.0)).unwrap();
        model.minimize_linear(x, &Mat::from_fn(2, 1, |r, _| if r == k { (k + 1) as f64 } else { 0.0 }));
        let _ = i;
    }
    let sol = model.solve(&SolverOptions::default()).unwrap();
    let v = model.value(x, &sol.x);
    assert!((v[(0, 0)] - 1.0).abs() < 1e-6 && v[(1, 0)].abs() < 1e-6, "{v}");
}

#[test]
fn redundant_constraint_keeps_objective() {
    let (mut model, _) = bounded_real_scalar(-2.0, 1.0, 3.0, 0.5);
    let base = model.solve(&SolverOptions::default()).unwrap().objective;
    let dup = model.constraints[0].clone();
    model.constraints.push(dup);
    let again = model.solve(&SolverOptions::default()).unwrap().objective;
    assert!((base - again).abs() <= 1e-5 * base.abs());
}

#[test]
fn lyapunov_lmi_round_trip() {
    // find P ≻ I with AᵀP + PA ≺ 0, minimize trace
    let a = Mat::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, -0.5, -1.0, 1.0, 0.0, 0.0, -3.0]);
    let mut model = Model::new();
    let p = model.symmetric("P", 3);
    let pa = AffineMat::var(p).rmul(&a);
    model.negdef("lyap", LmiExpr::he(&pa), None).unwrap();
    model.posdef("P", LmiExpr::sym(&AffineMat::var(p)).add(&LmiExpr::affine(&(-eye(3)))), None).unwrap();
    model.minimize_linear(p, &eye(3));
    let sol = model.solve(&SolverOptions::default()).unwrap();
    let pv = model.value(p, &sol.x);
    for c in &model.constraints {
        assert!(numlin::is_negdef(&model.eval(&c.expr, &sol.x), c.margin * 0.5));
    }
    assert!(lambda_max(&(a.transpose() * &pv + &pv * &a)) < 0.0);
}

#[test]
fn sdpa_dump_is_written() {
    let (model, _) = bounded_real_scalar(-1.0, 1.0, 1.0, 0.0);
    let dir = std::env::temp_dir().join(format!("dissynth_sdpa_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("p.dat-s");
    model.write_sdpa(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('"') && !l.starts_with('*')).collect();
    assert_eq!(lines[0], "2");
    assert_eq!(lines[1], "2");
    assert_eq!(lines[2], "3 1");
    std::fs::remove_dir_all(&dir).ok();
}
