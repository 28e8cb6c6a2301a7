use super::*;
use crate::ico::tests::small_network;
use crate::plant::{NetworkTopology, PolytopicAgent};
use crate::numlin::{BlockMat, BlockPartition};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn benchmark_agent() -> StateSpace {
    StateSpace::strictly_proper(
        Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]),
        Mat::from_row_slice(2, 1, &[0.0, 1.0]),
        Mat::from_row_slice(1, 2, &[1.0, 1.0]),
    )
    .unwrap()
}

fn loop_with(agent: &StateSpace, c: &StateSpace) -> StateSpace {
    let (n, nc) = (agent.states(), c.states());
    let mut a = Mat::zeros(n + nc, n + nc);
    a.view_mut((0, 0), (n, n)).copy_from(&(&agent.a + &agent.b * &c.d * &agent.c));
    a.view_mut((0, n), (n, nc)).copy_from(&(&agent.b * &c.c));
    a.view_mut((n, 0), (nc, n)).copy_from(&(&c.b * &agent.c));
    a.view_mut((n, n), (nc, nc)).copy_from(&c.a);
    StateSpace::strictly_proper(a, Mat::zeros(n + nc, 1), Mat::zeros(1, n + nc)).unwrap()
}

fn single_network(agent: StateSpace) -> Network {
    let part = BlockPartition::uniform(1, 1);
    let topo = NetworkTopology::new(BlockMat::from_mat(Mat::zeros(1, 1), part.clone(), part).unwrap()).unwrap();
    Network::new(vec![PolytopicAgent::certain(agent)], topo)
}

fn quick_cfg() -> SynthesisConfig {
    SynthesisConfig { ico_max_iters: 4, admm_max_iters: 4, ..SynthesisConfig::default() }
}

#[test]
fn config_toml_roundtrip() {
    let mut c = SynthesisConfig::default();
    c.penalty = Penalty::WeightedL1;
    c.gamma = GammaSpec::List(vec![0.1, 1.0]);
    c.solver.dump_dir = Some("dumps".into());
    c.init.feedthrough = -5.0;
    let back = SynthesisConfig::from_toml(&c.to_toml()).unwrap();
    assert_eq!(back, c);
    let partial = SynthesisConfig::from_toml("penalty = \"weighted-l1\"\ngamma = 0.5\n[init]\nscale = 0.01\n").unwrap();
    assert_eq!(partial.penalty, Penalty::WeightedL1);
    assert_eq!(partial.gamma.values(), vec![0.5]);
    assert_eq!(partial.init.scale, 0.01);
    assert_eq!(partial.init.state_weight, 100.0);
}

#[test]
fn config_rejects_bad_values() {
    for text in ["rho = 0.0", "eps = -1.0", "gamma = [1.0, -2.0]", "unknown_key = 1", "[init]\nscale = 0.0"] {
        let e = SynthesisConfig::from_toml(text).unwrap_err();
        assert!(matches!(e, PipelineError::Config(_)), "{text}");
        assert_eq!(e.exit_code(), 1);
    }
}

#[test]
fn log_space_endpoints() {
    let g = GammaSpec::log_space(1e-3, 10.0, 5).values();
    assert_eq!(g.len(), 5);
    assert!((g[0] - 1e-3).abs() < 1e-15 && (g[4] - 10.0).abs() < 1e-12);
    assert!((g[2] - 0.1).abs() < 1e-12);
    assert_eq!(GammaSpec::log_space(2.0, 3.0, 1).values(), vec![2.0]);
}

#[test]
fn lqg_stabilizes_unstable_agent() {
    let agent = benchmark_agent();
    assert!(!agent.is_stable());
    let w = InitConfig::default();
    let c = lqg(&agent, &w).unwrap();
    assert!(loop_with(&agent, &c).is_stable());
    let scaled = initial_controller(&agent, &w, 0.0).unwrap();
    assert_eq!(scaled.d[(0, 0)], 0.0);
    assert!((scaled.c.norm() - 1e-3 * c.c.norm()).abs() < 1e-12);
}

#[test]
fn uncontrollable_unstable_agent_fails_init() {
    let agent = StateSpace::strictly_proper(Mat::from_element(1, 1, 1.0), Mat::zeros(1, 1), Mat::from_element(1, 1, 1.0)).unwrap();
    let mut cfg = quick_cfg();
    cfg.init.escalations = 1;
    let e = init_local(&single_network(agent), &cfg).unwrap_err();
    assert!(matches!(e, PipelineError::Init(_)), "{e}");
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn single_unstable_agent_initializes() {
    let net = single_network(benchmark_agent());
    let init = init_local(&net, &quick_cfg()).unwrap();
    assert!(ico::verify(&net, &init.point).is_ok());
    assert!(net.closed_loop(&init.point).unwrap().is_stable());
    let c = centralize(&net, &init.point, &quick_cfg()).unwrap();
    assert_eq!(SparsityPattern::dense(&c.point.hbar), SparsityPattern::decentralized(&c.point.hbar));
    assert_eq!(SparsityPattern::of(&c.point.hbar, sparsity::ZERO_TOL), SparsityPattern::dense(&c.point.hbar));
    assert!(c.point.nu <= init.point.nu + 1e-9);
}

#[test]
fn stable_network_certified_with_zero_controllers() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (net, _) = small_network(&mut rng, 3);
    let init = init_zero(&net, &quick_cfg()).unwrap();
    assert_eq!(init.point.khat.norm(), 0.0);
    assert!(ico::verify(&net, &init.point).unwrap().all_negative());
}

pub(crate) fn small_benchmark_network() -> Network {
    let spec = crate::bench::ExperimentSpec { agents: 3, unstable: 1, ..Default::default() };
    crate::bench::build_paper_example(&spec).unwrap()
}

fn small_problem() -> (Network, FeasiblePoint) {
    let net = small_benchmark_network();
    let cfg = quick_cfg();
    let init = init_local(&net, &cfg).unwrap();
    let c = centralize(&net, &init.point, &cfg).unwrap();
    (net, c.point)
}

#[test]
fn run_from_is_monotone_and_sound() {
    let (net, central) = small_problem();
    let cfg = quick_cfg();
    let dense = sparsity::cardinality(&central.hbar, sparsity::ZERO_TOL);
    for (penalty, gamma) in [(Penalty::Cardinality, 0.0), (Penalty::Cardinality, 1e6), (Penalty::WeightedL1, 1e3)] {
        let cfg = SynthesisConfig { penalty, ..cfg.clone() };
        let r = run_from(&net, &central, gamma, &cfg).unwrap();
        let p = r.point();
        assert!(p.nu <= r.projected.nu + 1e-6);
        assert!(ico::verify(&net, p).unwrap().all_negative());
        assert!(p.hbar.fixed_blocks_equal(&central.hbar));
        for w in r.trace().windows(2) {
            assert!(w[1].nu <= w[0].nu + 1e-9);
        }
        let oracle = numlin::hinf_norm(&net.closed_loop(p).unwrap(), 1e-10).unwrap();
        assert!(p.nu >= oracle * (1.0 - 1e-6) && p.nu <= oracle * 1.01 + 1e-9, "{} vs {oracle}", p.nu);
        assert!(r.nonzero_blocks() <= dense);
        if gamma == 0.0 {
            assert_eq!(r.nonzero_blocks(), dense);
        } else {
            assert!(r.nonzero_blocks() < dense, "{penalty:?}: {}", r.nonzero_blocks());
        }
    }
}

#[test]
fn run_from_is_deterministic() {
    let (net, central) = small_problem();
    let cfg = quick_cfg();
    let a = run_from(&net, &central, 0.1, &cfg).unwrap();
    let b = run_from(&net, &central, 0.1, &cfg).unwrap();
    let bits = |r: &SynthesisResult| r.trace().iter().map(|t| t.nu.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.point().khat, b.point().khat);
}

#[test]
fn model_snapshot_recertifies() {
    let (net, central) = small_problem();
    let model = model_of(&net, &central);
    let back = plant::NetworkModel::from_toml(&model.to_toml()).unwrap();
    assert_eq!(back, model);
    let (_, p) = certify_model(&back, &quick_cfg()).unwrap();
    assert!(p.nu <= central.nu * (1.0 + 1e-6), "{} vs {}", p.nu, central.nu);
    assert_eq!(p.khat, central.khat);
}

#[test]
fn manifest_roundtrip() {
    let dir = std::env::temp_dir().join(format!("dissynth-manifest-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("manifest.toml");
    let mut cfg = SynthesisConfig::default();
    cfg.seed = 42;
    let m = RunManifest::new("sweep", &cfg, vec!["sweep.csv".into()]);
    m.save(&path).unwrap();
    let back: RunManifest = toml::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.format, MANIFEST_FORMAT);
    assert_eq!(back.seed, 42);
    std::fs::remove_dir_all(&dir).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn log_space_is_increasing(lo in 1e-6f64..1.0, span in 1.0f64..1e4, count in 2usize..30) {
        let v = GammaSpec::log_space(lo, lo * span, count).values();
        prop_assert_eq!(v.len(), count);
        for w in v.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }
}

