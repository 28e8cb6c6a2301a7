use super::*;
use crate::ico::tests::small_point;
use crate::numlin::{eye, BlockPartition};
use crate::plant::NetworkTopology;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar_net(n: usize, ht_y: &Mat, ht_yhat: &Mat) -> GlobalInterconnection {
    let part = BlockPartition::uniform(n, 1);
    let h = Mat::from_fn(n, n, |i, j| if i == j { 0.0 } else { 0.5 });
    let topo = NetworkTopology::new(BlockMat::from_mat(h, part.clone(), part).unwrap()).unwrap();
    GlobalInterconnection::new(&topo, ht_y, ht_yhat).unwrap()
}

#[test]
fn weighted_l1_examples() {
    let z = Mat::zeros(2, 2);
    assert_eq!(weighted_l1(&scalar_net(2, &z, &z), 1e-3), 0.0);
    let mut y = z.clone();
    y[(0, 1)] = 2.0;
    assert!((weighted_l1(&scalar_net(2, &y, &z), 1e-3) - 1.0).abs() < 1e-15);
    y[(0, 1)] = 1e-6;
    assert!((weighted_l1(&scalar_net(2, &y, &z), 1e-3) - 1e-3).abs() < 1e-15);
}

#[test]
fn cardinality_examples() {
    let n = 10;
    let dense = Mat::from_element(n, n, 0.3);
    assert_eq!(cardinality(&scalar_net(n, &dense, &dense), ZERO_TOL), 200);
    assert_eq!(cardinality(&scalar_net(n, &eye(n), &eye(n)), ZERO_TOL), 20);
    let z = Mat::zeros(n, n);
    assert_eq!(cardinality(&scalar_net(n, &z, &z), ZERO_TOL), 0);
}

#[test]
fn pattern_layout() {
    let n = 3;
    let g = scalar_net(n, &eye(n), &eye(n));
    let p = SparsityPattern::of(&g, ZERO_TOL);
    assert_eq!(p, SparsityPattern::decentralized(&g));
    for i in 0..n {
        for j in 0..n {
            assert_eq!(p.blocks[(i, j)], i != j);
            assert!(!p.blocks[(n + i, n + j)]);
        }
    }
    assert_eq!(SparsityPattern::dense(&g).nonzero_designable(&g), 2 * n * n);
    let full = scalar_net(n, &Mat::from_element(n, n, 1.0), &Mat::from_element(n, n, 1.0));
    let proj = p.project(&full).unwrap();
    assert_eq!(proj.hbar.data, g.hbar.data);
}

#[test]
fn shrink_examples() {
    let part = BlockPartition::uniform(2, 1);
    let mut v = BlockMat::zeros(part.clone(), part);
    v.data[(0, 1)] = 0.05;
    v.data[(1, 0)] = 0.04;
    let all = Mask::from_element(2, 2, true);
    assert_eq!(shrink_blocks(&v, &all, 0.0, 1.0), v);
    let s = shrink_blocks(&v, &all, 1.0, 1000.0);
    assert_eq!(s.data[(0, 1)], 0.05);
    assert_eq!(s.data[(1, 0)], 0.0);
}

fn brute_prox(b: &Mat, gamma: f64, rho: f64) -> Mat {
    let keep = gamma * if b.norm() > 0.0 { 1.0 } else { 0.0 };
    let drop = 0.5 * rho * b.norm_squared();
    if keep < drop {
        b.clone()
    } else {
        Mat::zeros(b.nrows(), b.ncols())
    }
}

#[test]
fn shrink_matches_bruteforce_prox() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 1000 {
        let k = rng.random_range(1..=4);
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(1..=3)).collect();
        let part = BlockPartition::new(sizes);
        let scale = 10f64.powf(rng.random_range(-3.0..1.0));
        let data = Mat::from_fn(part.total(), part.total(), |_, _| scale * rng.random_range(-1.0..1.0));
        let v = BlockMat::from_mat(data, part.clone(), part).unwrap();
        let all = Mask::from_element(k, k, true);
        let gamma = 10f64.powf(rng.random_range(-6.0..1.0));
        let rho = 10f64.powf(rng.random_range(0.0..4.0));
        let s = shrink_blocks(&v, &all, gamma, rho);
        for i in 0..k {
            for j in 0..k {
                assert_eq!(s.block(i, j), brute_prox(&v.block(i, j), gamma, rho));
                checked += 1;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn shrink_never_touches_fixed_blocks(seed in 0u64..10_000, gamma in 0.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let part = BlockPartition::uniform(4, 2);
        let data = Mat::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let v = BlockMat::from_mat(data, part.clone(), part).unwrap();
        let designable = Mask::from_fn(4, 4, |i, j| (i < 2) != (j < 2));
        let s = shrink_blocks(&v, &designable, gamma, 1.0);
        for i in 0..4 {
            for j in 0..4 {
                if !designable[(i, j)] {
                    prop_assert_eq!(s.block(i, j), v.block(i, j));
                } else {
                    let b = s.block(i, j);
                    prop_assert!(b.norm() == 0.0 || b == v.block(i, j));
                }
            }
        }
    }
}

fn centralized_point(seed: u64) -> (Network, FeasiblePoint) {
    let (net, p) = small_point(seed);
    let free = Freedom { controllers: true, hbar: Some(p.hbar.entry_mask(&p.hbar.designable)) };
    let mut o = IcoOptions::default();
    o.max_iters = 4;
    let out = ico::ico_iterate(&net, &p, &free, &o).unwrap();
    (net, out.point)
}

#[test]
fn admm_without_penalty_keeps_dense_pattern() {
    let (net, p) = centralized_point(3);
    let dense = cardinality(&p.hbar, ZERO_TOL);
    let mut o = AdmmOptions::default();
    o.max_iters = 6;
    let out = admm_run(&net, &p, &o).unwrap();
    assert_eq!(out.pattern.nonzero_designable(&out.point.hbar), dense);
    assert!(ico::verify(&net, &out.point).is_ok());
    assert!(out.point.hbar.fixed_blocks_equal(&p.hbar));
    let st = out.admm.unwrap();
    assert!(st.r_p >= 0.0 && st.r_d >= 0.0);
    assert_eq!(st.lambda.data.norm(), 0.0);
}

#[test]
fn admm_with_huge_penalty_prunes_blocks() {
    let (net, p) = centralized_point(3);
    let mut o = AdmmOptions::default();
    o.gamma = 1e6;
    o.max_iters = 3;
    let out = admm_run(&net, &p, &o).unwrap();
    assert_eq!(out.pattern.nonzero_designable(&out.point.hbar), 0);
    for row in &out.history[1..] {
        assert!(row.r_p >= 0.0 && row.r_d >= 0.0);
    }
    assert!(out.point.hbar.fixed_blocks_equal(&p.hbar));
    assert!(ico::verify(&net, &out.point).is_ok());
}

#[test]
fn epigraph_bounds_block_norms() {
    let (net, p) = centralized_point(1);
    let res = ico::verify(&net, &p).unwrap();
    let free = Freedom { controllers: true, hbar: Some(p.hbar.entry_mask(&p.hbar.designable)) };
    let mut sp = Subproblem::build(&net, &p, &free, &ico::Margins::FromBase(res), 1e-6).unwrap();
    let w = l1_weights(&p.hbar, 1e-3);
    add_l1_objective(&mut sp, &w, 0.5);
    let sol = sp.model.solve(&IcoOptions::default().solver).unwrap();
    let cand = sp.candidate(&sol.x).unwrap();
    let obj = sp.model.objective_value(&sol.x);
    let want = (cand.nu - p.nu) + 0.5 * weighted_l1_with(&cand.hbar, &w);
    assert!(obj >= want - 1e-6, "{obj} vs {want}");
    assert!(obj <= want + 1e-3 * (1.0 + want.abs()), "{obj} vs {want}");
}

#[test]
fn l1_cost_decreases_and_points_verify() {
    let (net, p) = centralized_point(1);
    let mut o = L1Options::default();
    o.gamma = 0.5;
    o.ico.max_iters = 5;
    let out = l1_run(&net, &p, &o).unwrap();
    let w = l1_weights(&p.hbar, o.eps_l);
    for pair in out.history.windows(2) {
        let j = |r: &SparsityRow| r.nu + o.gamma * r.penalty;
        assert!(j(&pair[1]) <= j(&pair[0]) + 1e-9);
    }
    assert!(weighted_l1_with(&out.point.hbar, &w) <= weighted_l1_with(&p.hbar, &w));
    assert!(ico::verify(&net, &out.point).is_ok());
    assert!(out.point.hbar.fixed_blocks_equal(&p.hbar));
}
