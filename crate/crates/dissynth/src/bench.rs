//! The ten-agent benchmark network, γ sweeps, Monte-Carlo robustness
//! evaluation against a dense nominal H∞ baseline, and result files.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ico::{self, FeasiblePoint, IcoError, IcoOutcome, Network};
use crate::numlin::{self, BlockMat, BlockPartition, Mat};
use crate::pipeline::{self, Penalty, PipelineError, SynthesisConfig, SynthesisResult};
use crate::plant::{self, GlobalInterconnection, NetworkTopology, PolytopicAgent, StateSpace};
use crate::sparsity::SWEEP_HEADER;

/// Parameters of the benchmark network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub agents: usize,
    /// Agents `0..unstable` use the unstable nominal matrix.
    pub unstable: usize,
    pub unstable_a: [[f64; 2]; 2],
    pub stable_a: [[f64; 2]; 2],
    pub alpha: f64,
    /// Use `e^{−α(i−j)}` instead of `e^{−α|i−j|}` for the coupling weights.
    pub signed_exponent: bool,
    /// Relative half-width of the box on every entry of `A`.
    pub uncertainty: f64,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            agents: 10,
            unstable: 5,
            unstable_a: [[1.0, 1.0], [1.0, 2.0]],
            stable_a: [[-2.0, 1.0], [1.0, -3.0]],
            alpha: 0.1823,
            signed_exponent: false,
            uncertainty: 0.04,
            seed: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.agents == 0 {
            return Err(PipelineError::Config("at least one agent".into()));
        }
        if !(0.0..1.0).contains(&self.uncertainty) {
            return Err(PipelineError::Config(format!("uncertainty {} outside [0, 1)", self.uncertainty)));
        }
        Ok(())
    }

    /// Plant coupling weight from agent `j` to agent `i`.
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let d = i as f64 - j as f64;
        (-self.alpha * if self.signed_exponent { d } else { d.abs() }).exp()
    }
}

fn mat2(a: &[[f64; 2]; 2]) -> Mat {
    Mat::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]])
}

/// Agents `ẋ = Ax + [0;1]u`, `y = [1 1]x` with a box on `A` and the fixed
/// exponential coupling.
pub fn build_paper_example(spec: &ExperimentSpec) -> Result<Network, PipelineError> {
    spec.validate()?;
    let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
    let c = Mat::from_row_slice(1, 2, &[1.0, 1.0]);
    let mut agents = Vec::with_capacity(spec.agents);
    for i in 0..spec.agents {
        let a = if i < spec.unstable { mat2(&spec.unstable_a) } else { mat2(&spec.stable_a) };
        let ss = StateSpace::strictly_proper(a, b.clone(), c.clone()).map_err(|e| PipelineError::Config(e.to_string()))?;
        agents.push(PolytopicAgent::relative_box(ss, spec.uncertainty).map_err(IcoError::from)?);
    }
    let n = spec.agents;
    let h = Mat::from_fn(n, n, |i, j| spec.coupling(i, j));
    let part = BlockPartition::uniform(n, 1);
    let topo = NetworkTopology::new(BlockMat::from_mat(h, part.clone(), part).map_err(|e| PipelineError::Config(e.to_string()))?)
        .map_err(IcoError::from)?;
    Ok(Network::new(agents, topo))
}

/// `ν_c + 0.05·(ν_d − ν_c)`.
pub fn band_threshold(nu_decentralized: f64, nu_centralized: f64) -> f64 {
    nu_centralized + 0.05 * (nu_decentralized - nu_centralized)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub penalty: Penalty,
    pub status: String,
    pub nonzero: usize,
    pub nu: f64,
    pub iterations: usize,
    pub r_p: f64,
    pub r_d: f64,
}

impl SweepRow {
    pub fn from_result(r: &SynthesisResult) -> Self {
        let (r_p, r_d) = r.sparsity.admm.as_ref().map(|s| (s.r_p, s.r_d)).unwrap_or((f64::NAN, f64::NAN));
        Self {
            gamma: r.gamma,
            penalty: r.penalty,
            status: if r.sparsity.converged { "ok".into() } else { "flagged".into() },
            nonzero: r.nonzero_blocks(),
            nu: r.point().nu,
            iterations: r.sparsity.iterations,
            r_p,
            r_d,
        }
    }

    pub fn failed(gamma: f64, penalty: Penalty, msg: &str) -> Self {
        Self { gamma, penalty, status: format!("failed: {msg}"), nonzero: 0, nu: f64::NAN, iterations: 0, r_p: f64::NAN, r_d: f64::NAN }
    }

    pub fn succeeded(&self) -> bool {
        !self.status.starts_with("failed")
    }
}

/// One synthesis run per γ from a shared centralized point, in parallel.
/// Rows come back sorted by nonzero blocks.
pub fn sweep(net: &Network, centralized: &FeasiblePoint, gammas: &[f64], cfg: &SynthesisConfig) -> Vec<(SweepRow, Option<SynthesisResult>)> {
    let mut rows: Vec<(SweepRow, Option<SynthesisResult>)> = gammas
        .par_iter()
        .map(|&g| match pipeline::run_from(net, centralized, g, cfg) {
            Ok(r) => (SweepRow::from_result(&r), Some(r)),
            Err(e) => (SweepRow::failed(g, cfg.penalty, &e.to_string()), None),
        })
        .collect();
    rows.sort_by(|a, b| a.0.nonzero.cmp(&b.0.nonzero).then(a.0.gamma.total_cmp(&b.0.gamma)));
    rows
}

fn penalty_name(p: Penalty) -> &'static str {
    match p {
        Penalty::Cardinality => "cardinality",
        Penalty::WeightedL1 => "weighted-l1",
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["gamma", "penalty", "status", "nonzero_blocks", "nu", "iterations", "r_p", "r_d"]).map_err(csv_io)?;
    for r in rows {
        c.write_record(&[
            format!("{:.6e}", r.gamma),
            penalty_name(r.penalty).to_string(),
            r.status.clone(),
            r.nonzero.to_string(),
            format!("{:.10e}", r.nu),
            r.iterations.to_string(),
            format!("{:.6e}", r.r_p),
            format!("{:.6e}", r.r_d),
        ])
        .map_err(csv_io)?;
    }
    c.flush()
}

/// Gnuplot-readable `x y` series with a comment header.
pub fn write_plot_data<W: Write>(mut w: W, title: &str, xlabel: &str, ylabel: &str, pts: &[(f64, f64)]) -> std::io::Result<()> {
    writeln!(w, "# {title}")?;
    writeln!(w, "# {xlabel} {ylabel}")?;
    for (x, y) in pts {
        writeln!(w, "{x} {y:.10e}")?;
    }
    Ok(())
}

/// Fewest nonzero blocks among successful rows with `ν ≤ threshold`.
pub fn band_crossing(rows: &[SweepRow], threshold: f64) -> Option<usize> {
    rows.iter().filter(|r| r.succeeded() && r.nu <= threshold).map(|r| r.nonzero).min()
}

/// Dense nominal H∞ design: the same bounded-real descent without any
/// dissipativity certificate, started from the given controllers.
pub fn hinf_baseline(net: &Network, ctrls: &[StateSpace], cfg: &SynthesisConfig) -> Result<IcoOutcome, PipelineError> {
    let shapes: Vec<_> = ctrls.iter().map(|c| (c.states(), c.inputs(), c.outputs())).collect();
    let hbar = GlobalInterconnection::decentralized(&net.topology).map_err(IcoError::from)?;
    let start = ico::certify_fixed(net, &shapes, &plant::bank_gain(ctrls), &hbar, false, &cfg.ico_options())?;
    pipeline::centralize(net, &start, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McRow {
    pub trial: usize,
    pub hinf: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub best: f64,
    pub worst: f64,
    pub unstable: usize,
}

impl McSummary {
    pub fn spread(&self) -> f64 {
        self.worst - self.best
    }
}

/// Closed-loop H∞ norm of a fixed controller network over sampled agent
/// realizations. Trial `k` draws from its own stream seeded by `(seed, k)`.
pub fn robustness_mc(net: &Network, point: &FeasiblePoint, trials: usize, seed: u64) -> (Vec<McRow>, McSummary) {
    let rows: Vec<McRow> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let agents: Vec<StateSpace> = net.agents.iter().map(|a| plant::sample_uncertain_with(a, &mut rng)).collect();
            match net.closed_loop_with(&agents, point) {
                Ok(cl) if cl.is_stable() => {
                    let h = numlin::hinf_norm(&cl, 1e-9).unwrap_or(f64::INFINITY);
                    McRow { trial: k, hinf: h, stable: true }
                }
                _ => McRow { trial: k, hinf: f64::INFINITY, stable: false },
            }
        })
        .collect();
    let best = rows.iter().map(|r| r.hinf).fold(f64::INFINITY, f64::min);
    let worst = rows.iter().map(|r| r.hinf).fold(f64::NEG_INFINITY, f64::max);
    let unstable = rows.iter().filter(|r| !r.stable).count();
    (rows, McSummary { best, worst, unstable })
}

pub const MC_HEADER: &str = "# dissynth-robustness v1";

pub fn write_mc_csv<W: Write>(mut w: W, label: &str, rows: &[McRow]) -> std::io::Result<()> {
    writeln!(w, "{MC_HEADER}")?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["controller", "trial", "hinf", "stable"]).map_err(csv_io)?;
    for r in rows {
        c.write_record(&[label.to_string(), r.trial.to_string(), format!("{:.10e}", r.hinf), r.stable.to_string()]).map_err(csv_io)?;
    }
    c.flush()
}
