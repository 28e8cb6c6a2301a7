//! Sparsity-promoting synthesis end to end: local LQG initialization,
//! centralization, sparsity promotion and structured descent.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{ConicError, SolverOptions};
use crate::ico::{self, ExogenousChannel, FeasiblePoint, Freedom, IcoError, IcoOptions, IcoOutcome, Network, TraceRow};
use crate::numlin::{self, Mat};
use crate::plant::{self, GlobalInterconnection, StateSpace};
use crate::sparsity::{self, AdmmOptions, L1Options, SparsityOutcome, SparsityPattern};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no feasible initial point: {0}")]
    Init(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ico(#[from] IcoError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit code: 2 for infeasibility, 3 for numerical trouble, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Init(_) => 2,
            PipelineError::Ico(IcoError::InfeasibleBase(_)) | PipelineError::Ico(IcoError::Conic(ConicError::Infeasible)) => 2,
            PipelineError::Ico(IcoError::Conic(_)) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Penalty {
    #[default]
    Cardinality,
    WeightedL1,
}

/// One weight or a sweep list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Single(f64),
    List(Vec<f64>),
}

impl GammaSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GammaSpec::Single(g) => vec![*g],
            GammaSpec::List(v) => v.clone(),
        }
    }

    /// `count` logarithmically spaced points on `[lo, hi]`.
    pub fn log_space(lo: f64, hi: f64, count: usize) -> Self {
        if count == 1 {
            return GammaSpec::List(vec![lo]);
        }
        let (a, b) = (lo.ln(), hi.ln());
        GammaSpec::List((0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect())
    }
}

/// Local LQG design and its conversion to an initial controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    /// State weight `q·I`.
    pub state_weight: f64,
    pub input_weight: f64,
    pub process_noise: f64,
    pub measurement_noise: f64,
    /// Output scaling of the LQG controller.
    pub scale: f64,
    /// Added feedforward gain.
    pub feedthrough: f64,
    /// Doublings of `|feedthrough|` tried after the first attempt.
    pub escalations: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            state_weight: 100.0,
            input_weight: 1.0,
            process_noise: 1.0,
            measurement_noise: 1.0,
            scale: 1e-3,
            feedthrough: -10.0,
            escalations: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub tol_gap: f64,
    pub tol_feas: f64,
    pub dump_dir: Option<String>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self { max_iter: s.max_iter, tol_gap: s.tol_gap, tol_feas: s.tol_feas, dump_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub penalty: Penalty,
    pub gamma: GammaSpec,
    pub rho: f64,
    /// Relative-decrease stopping tolerance of the descent loops.
    pub eps: f64,
    pub eps_p: f64,
    pub eps_d: f64,
    pub eps_l: f64,
    pub admm_max_iters: usize,
    pub ico_max_iters: usize,
    /// Refresh ℓ1 weights at every step.
    pub reweight: bool,
    /// Weight of the `‖δ‖²` term that keeps subproblems strictly convex.
    pub regularization: f64,
    pub channel: ExogenousChannel,
    pub seed: u64,
    pub init: InitConfig,
    pub solver: SolverConfig,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            penalty: Penalty::Cardinality,
            gamma: GammaSpec::Single(0.0),
            rho: 1000.0,
            eps: 1e-3,
            eps_p: 1e-3,
            eps_d: 1e-3,
            eps_l: 1e-3,
            admm_max_iters: 500,
            ico_max_iters: 200,
            reweight: false,
            regularization: 1e-6,
            channel: ExogenousChannel::ThroughHy,
            seed: 0,
            init: InitConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("rho", self.rho),
            ("eps", self.eps),
            ("eps_p", self.eps_p),
            ("eps_d", self.eps_d),
            ("eps_l", self.eps_l),
            ("solver.tol_gap", self.solver.tol_gap),
            ("solver.tol_feas", self.solver.tol_feas),
            ("init.scale", self.init.scale),
            ("init.input_weight", self.init.input_weight),
            ("init.measurement_noise", self.init.measurement_noise),
        ];
        for (k, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PipelineError::Config(format!("{k} must be positive, got {v}")));
            }
        }
        if self.regularization < 0.0 || self.init.state_weight < 0.0 || self.init.process_noise < 0.0 {
            return Err(PipelineError::Config("weights must be non-negative".into()));
        }
        if self.gamma.values().iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(PipelineError::Config("gamma values must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            max_iter: self.solver.max_iter,
            tol_gap: self.solver.tol_gap,
            tol_feas: self.solver.tol_feas,
            dump_dir: self.solver.dump_dir.as_ref().map(Into::into),
            ..SolverOptions::default()
        }
    }

    pub fn ico_options(&self) -> IcoOptions {
        IcoOptions {
            eps: self.eps,
            max_iters: self.ico_max_iters,
            regularization: self.regularization,
            solver: self.solver_options(),
        }
    }

    fn admm_options(&self, gamma: f64) -> AdmmOptions {
        AdmmOptions {
            gamma,
            rho: self.rho,
            eps_p: self.eps_p,
            eps_d: self.eps_d,
            max_iters: self.admm_max_iters,
            ico: self.ico_options(),
        }
    }

    fn l1_options(&self, gamma: f64) -> L1Options {
        L1Options { gamma, eps_l: self.eps_l, reweight: self.reweight, ico: self.ico_options(), ..L1Options::default() }
    }
}

/// Observer-based LQG controller of one agent, input `y`, output `u`.
pub fn lqg(agent: &StateSpace, w: &InitConfig) -> std::result::Result<StateSpace, numlin::NumError> {
    let (n, m, l) = (agent.states(), agent.inputs(), agent.outputs());
    let x = numlin::care_solve(&agent.a, &agent.b, &(numlin::eye(n) * w.state_weight), &(numlin::eye(m) * w.input_weight))?;
    let k = &agent.b.transpose() * &x / w.input_weight;
    let at = agent.a.transpose();
    let ct = agent.c.transpose();
    let s = numlin::care_solve(&at, &ct, &(numlin::eye(n) * w.process_noise), &(numlin::eye(l) * w.measurement_noise))?;
    let gain = &s * &ct / w.measurement_noise;
    let a = &agent.a - &agent.b * &k - &gain * &agent.c;
    Ok(StateSpace { a, b: gain, c: -k, d: Mat::zeros(m, l) })
}

/// LQG controller scaled by `s` with feedforward `d·I` added.
pub fn initial_controller(agent: &StateSpace, w: &InitConfig, feedthrough: f64) -> std::result::Result<StateSpace, numlin::NumError> {
    let mut c = lqg(agent, w)?.scale_output(w.scale);
    c.d += Mat::identity(c.d.nrows(), c.d.ncols()) * feedthrough;
    Ok(c)
}

/// Result of the local initialization.
#[derive(Debug, Clone)]
pub struct InitOutcome {
    pub point: FeasiblePoint,
    pub controllers: Vec<StateSpace>,
    pub feedthrough: f64,
    pub attempts: usize,
}

/// Why a candidate controller bank could not be certified.
pub fn diagnose(net: &Network, ctrls: &[StateSpace], hbar: &GlobalInterconnection, opts: &IcoOptions) -> String {
    let shapes: Vec<_> = ctrls.iter().map(|c| (c.states(), c.inputs(), c.outputs())).collect();
    let k = plant::bank_gain(ctrls);
    let p = ico::zero_point(net, &shapes, &k, hbar, false);
    let stable = net.closed_loop(&p).map(|cl| cl.is_stable()).unwrap_or(false);
    if !stable {
        return "hinf: nominal closed loop is not Hurwitz".into();
    }
    if let Err(e) = ico::certify_fixed(net, &shapes, &k, hbar, false, opts) {
        return format!("hinf: {e}");
    }
    "dissipativity/NDT: stability certificates jointly infeasible".into()
}

/// Local LQG controllers with decentralized interconnection, escalating the
/// feedforward gain until every constraint family is certified.
pub fn init_local(net: &Network, cfg: &SynthesisConfig) -> Result<InitOutcome> {
    let hbar = GlobalInterconnection::decentralized(&net.topology).map_err(IcoError::from)?;
    let opts = cfg.ico_options();
    let mut d = cfg.init.feedthrough;
    let mut last = String::new();
    for attempt in 0..=cfg.init.escalations {
        let ctrls: Vec<StateSpace> = net
            .agents
            .iter()
            .map(|a| initial_controller(&a.nominal, &cfg.init, d))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| PipelineError::Init(format!("LQG design failed: {e}")))?;
        let shapes: Vec<_> = ctrls.iter().map(|c| (c.states(), c.inputs(), c.outputs())).collect();
        match ico::certify_fixed(net, &shapes, &plant::bank_gain(&ctrls), &hbar, true, &opts) {
            Ok(point) => {
                log::info!("init: feasible with feedthrough {d} (ν = {:.6})", point.nu);
                return Ok(InitOutcome { point, controllers: ctrls, feedthrough: d, attempts: attempt + 1 });
            }
            Err(e) => {
                last = format!("feedthrough {d}: {e}; {}", diagnose(net, &ctrls, &hbar, &opts));
                log::warn!("init attempt {attempt}: {last}");
            }
        }
        d *= 2.0;
    }
    Err(PipelineError::Init(last))
}

/// Zero controllers with decentralized wiring; feasible when every agent is
/// stable and the network is certified without control.
pub fn init_zero(net: &Network, cfg: &SynthesisConfig) -> Result<InitOutcome> {
    let hbar = GlobalInterconnection::decentralized(&net.topology).map_err(IcoError::from)?;
    let ctrls: Vec<StateSpace> = net.agents.iter().map(|a| StateSpace::static_gain(Mat::zeros(a.inputs(), a.outputs()))).collect();
    let shapes: Vec<_> = ctrls.iter().map(|c| (c.states(), c.inputs(), c.outputs())).collect();
    let point = ico::certify_fixed(net, &shapes, &plant::bank_gain(&ctrls), &hbar, true, &cfg.ico_options())
        .map_err(|e| PipelineError::Init(format!("zero controllers: {e}")))?;
    Ok(InitOutcome { point, controllers: ctrls, feedthrough: 0.0, attempts: 1 })
}

/// Free controllers and every designable block.
pub fn dense_freedom(p: &FeasiblePoint) -> Freedom {
    Freedom { controllers: true, hbar: Some(p.hbar.entry_mask(&p.hbar.designable)) }
}

/// Free controllers and the blocks of a pattern.
pub fn structured_freedom(p: &FeasiblePoint, pattern: &SparsityPattern) -> Freedom {
    Freedom { controllers: true, hbar: Some(pattern.entry_mask(&p.hbar)) }
}

/// Descent with dense designable interconnection from a feasible point.
pub fn centralize(net: &Network, point: &FeasiblePoint, cfg: &SynthesisConfig) -> Result<IcoOutcome> {
    let opts = cfg.ico_options();
    Ok(ico::polish(net, ico::ico_iterate(net, point, &dense_freedom(point), &opts)?, &opts))
}

/// Everything produced by one synthesis run.
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub gamma: f64,
    pub penalty: Penalty,
    pub sparsity: SparsityOutcome,
    /// Point after projecting onto the pattern and re-solving the certificates.
    pub projected: FeasiblePoint,
    pub structured: IcoOutcome,
    pub pattern: SparsityPattern,
}

impl SynthesisResult {
    pub fn point(&self) -> &FeasiblePoint {
        &self.structured.point
    }

    pub fn nonzero_blocks(&self) -> usize {
        sparsity::cardinality(&self.point().hbar, sparsity::ZERO_TOL)
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.structured.trace
    }
}

/// Sparsity stage, projection onto the found pattern and structured descent,
/// starting from a centralized feasible point.
pub fn run_from(net: &Network, centralized: &FeasiblePoint, gamma: f64, cfg: &SynthesisConfig) -> Result<SynthesisResult> {
    cfg.validate()?;
    let sp = match cfg.penalty {
        Penalty::Cardinality => sparsity::admm_run(net, centralized, &cfg.admm_options(gamma))?,
        Penalty::WeightedL1 => sparsity::l1_run(net, centralized, &cfg.l1_options(gamma))?,
    };
    let (projected, pattern) = project_and_certify(net, &sp.point, &sp.pattern, cfg)?;
    let opts = cfg.ico_options();
    let structured = ico::polish(net, ico::ico_iterate(net, &projected, &structured_freedom(&projected, &pattern), &opts)?, &opts);
    Ok(SynthesisResult { gamma, penalty: cfg.penalty, sparsity: sp, projected, structured, pattern })
}

/// Zero the designable blocks outside `pattern` and re-solve every
/// certificate for the fixed controllers and interconnection. If that fails,
/// dropped blocks of `p` are restored largest first, doubling the count on
/// each attempt; with all of them restored `p` itself is returned.
pub fn project_and_certify(
    net: &Network,
    p: &FeasiblePoint,
    pattern: &SparsityPattern,
    cfg: &SynthesisConfig,
) -> Result<(FeasiblePoint, SparsityPattern)> {
    let g = &p.hbar;
    let mut dropped: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..g.hbar.block_rows() {
        for j in 0..g.hbar.block_cols() {
            let norm = g.hbar.block_norm(i, j);
            if g.designable[(i, j)] && !pattern.blocks[(i, j)] && norm > 0.0 {
                dropped.push((norm, i, j));
            }
        }
    }
    dropped.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut restore = 0;
    loop {
        let mut pat = pattern.clone();
        for &(_, i, j) in &dropped[..restore] {
            pat.blocks[(i, j)] = true;
        }
        let hbar = pat.project(g).map_err(IcoError::from)?;
        match ico::certify_fixed(net, &p.shapes, &p.khat, &hbar, true, &cfg.ico_options()) {
            Ok(q) => {
                if restore > 0 {
                    log::info!("projection: restored {restore} of {} dropped blocks", dropped.len());
                }
                return Ok((q, pat));
            }
            Err(e) if restore == dropped.len() => {
                log::warn!("re-certification failed ({e}); keeping the verified point");
                ico::verify(net, p)?;
                return Ok((p.clone(), pat));
            }
            Err(e) => {
                log::warn!("projection with {restore} restored blocks failed: {e}");
                restore = (2 * restore).max(1).min(dropped.len());
            }
        }
    }
}

/// Initialization, centralization and one sparsity-promoting run per γ.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub init: InitOutcome,
    pub centralized: IcoOutcome,
    pub results: Vec<std::result::Result<SynthesisResult, String>>,
}

pub fn run(net: &Network, cfg: &SynthesisConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let init = init_local(net, cfg)?;
    let centralized = centralize(net, &init.point, cfg)?;
    let results = cfg
        .gamma
        .values()
        .into_iter()
        .map(|g| run_from(net, &centralized.point, g, cfg).map_err(|e| e.to_string()))
        .collect();
    Ok(PipelineRun { init, centralized, results })
}

/// Serializable snapshot of a network and a synthesized controller network.
pub fn model_of(net: &Network, p: &FeasiblePoint) -> plant::NetworkModel {
    plant::NetworkModel {
        agents: net.agents.clone(),
        topology: net.topology.clone(),
        controllers: p.controllers(),
        interconnection: Some(p.hbar.clone()),
    }
}

/// Re-solve every certificate for the controllers stored in `model`.
/// Without stored controllers the network is checked with zero control.
pub fn certify_model(model: &plant::NetworkModel, cfg: &SynthesisConfig) -> Result<(Network, FeasiblePoint)> {
    let net = Network { agents: model.agents.clone(), topology: model.topology.clone(), channel: cfg.channel };
    let hbar = match &model.interconnection {
        Some(g) => g.clone(),
        None => GlobalInterconnection::decentralized(&net.topology).map_err(IcoError::from)?,
    };
    let ctrls = if model.controllers.is_empty() {
        net.agents.iter().map(|a| StateSpace::static_gain(Mat::zeros(a.inputs(), a.outputs()))).collect()
    } else {
        model.controllers.clone()
    };
    let shapes: Vec<_> = ctrls.iter().map(|c| (c.states(), c.inputs(), c.outputs())).collect();
    let p = ico::certify_fixed(&net, &shapes, &plant::bank_gain(&ctrls), &hbar, true, &cfg.ico_options())?;
    Ok((net, p))
}

/// Reproducibility record written next to results.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub format: String,
    pub crate_version: String,
    pub command: String,
    pub seed: u64,
    pub config: SynthesisConfig,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FORMAT: &str = "dissynth-manifest/1";

impl RunManifest {
    pub fn new(command: &str, cfg: &SynthesisConfig, outputs: Vec<String>) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: cfg.seed,
            config: cfg.clone(),
            outputs,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, toml::to_string(self).expect("manifest serializes"))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests;
