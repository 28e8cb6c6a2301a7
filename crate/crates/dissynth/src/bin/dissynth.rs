use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dissynth::bench::{self, ExperimentSpec, SweepRow};
use dissynth::ico::{self, ExogenousChannel, FeasiblePoint, Network};
use dissynth::numlin::{self, Vector};
use dissynth::pipeline::{self, GammaSpec, Penalty, PipelineError, RunManifest, SynthesisConfig};
use dissynth::plant::{self, NetworkModel, Sampled};

#[derive(Parser)]
#[command(name = "dissynth", version, about = "Sparse dissipativity-certified controller network synthesis")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Write every conic subproblem in SDPA sparse format to DIR.
    #[arg(long, global = true, value_name = "DIR")]
    dump_conic: Option<PathBuf>,
    /// Log level (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the ten-agent benchmark network and write it as a model file.
    ExamplePaper {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value = "paper_example.toml")]
        out: PathBuf,
    },
    /// Initialize, centralize and run one sparsity-promoting synthesis per γ.
    Synth {
        #[command(flatten)]
        input: ModelArgs,
        #[command(flatten)]
        over: Overrides,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// γ sweep from a shared centralized point.
    Sweep {
        #[command(flatten)]
        input: ModelArgs,
        #[command(flatten)]
        over: Overrides,
        #[arg(long, default_value_t = 1e-3)]
        gamma_min: f64,
        #[arg(long, default_value_t = 1e2)]
        gamma_max: f64,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Monte-Carlo closed-loop H∞ norms over sampled agent dynamics.
    Robustness {
        /// Model file with the synthesized controller network.
        #[arg(long)]
        model: PathBuf,
        /// Model file with the baseline controller; designed when omitted.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Time response of the nominal closed loop of a model file.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = InputKind::Step)]
        input: InputKind,
        /// Exogenous input channel that is excited.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 20.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value = "response.dat")]
        out: PathBuf,
    },
    /// Certify the controller network of a model file.
    Analyze {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum InputKind {
    Step,
    Pulse,
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long, default_value_t = 10)]
    agents: usize,
    #[arg(long, default_value_t = 5)]
    unstable: usize,
    #[arg(long, default_value_t = 0.1823)]
    alpha: f64,
    #[arg(long, default_value_t = 0.04)]
    uncertainty: f64,
    /// Coupling `e^{−α(i−j)}` instead of `e^{−α|i−j|}`.
    #[arg(long)]
    signed_exponent: bool,
}

impl SpecArgs {
    fn spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            agents: self.agents,
            unstable: self.unstable,
            alpha: self.alpha,
            uncertainty: self.uncertainty,
            signed_exponent: self.signed_exponent,
            ..ExperimentSpec::default()
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Network model file; the benchmark network when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    Cardinality,
    WeightedL1,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    ThroughHy,
    Direct,
}

/// Command-line values that replace configuration fields.
#[derive(Args)]
struct Overrides {
    #[arg(long, value_enum)]
    penalty: Option<PenaltyArg>,
    /// One or more sparsity weights.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    eps_p: Option<f64>,
    #[arg(long)]
    eps_d: Option<f64>,
    #[arg(long)]
    eps_l: Option<f64>,
    #[arg(long)]
    admm_max_iters: Option<usize>,
    #[arg(long)]
    ico_max_iters: Option<usize>,
    #[arg(long)]
    reweight: bool,
    #[arg(long, value_enum)]
    channel: Option<ChannelArg>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut SynthesisConfig) {
        if let Some(p) = self.penalty {
            cfg.penalty = match p {
                PenaltyArg::Cardinality => Penalty::Cardinality,
                PenaltyArg::WeightedL1 => Penalty::WeightedL1,
            };
        }
        if let Some(g) = &self.gamma {
            cfg.gamma = if g.len() == 1 { GammaSpec::Single(g[0]) } else { GammaSpec::List(g.clone()) };
        }
        if let Some(c) = self.channel {
            cfg.channel = match c {
                ChannelArg::ThroughHy => ExogenousChannel::ThroughHy,
                ChannelArg::Direct => ExogenousChannel::Direct,
            };
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(rho, eps, eps_p, eps_d, eps_l, admm_max_iters, ico_max_iters, seed);
        cfg.reweight |= self.reweight;
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Plant(#[from] plant::PlantError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Pipeline(e) => e.exit_code() as u8,
            _ => 1,
        }
    }
}

impl From<ico::IcoError> for CliError {
    fn from(e: ico::IcoError) -> Self {
        CliError::Pipeline(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn load_config(cli: &Cli) -> Result<SynthesisConfig> {
    let mut cfg = match &cli.config {
        Some(p) => SynthesisConfig::load(p)?,
        None => SynthesisConfig::default(),
    };
    if let Some(d) = &cli.dump_conic {
        std::fs::create_dir_all(d)?;
        cfg.solver.dump_dir = Some(d.display().to_string());
    }
    Ok(cfg)
}

fn network(input: &ModelArgs, cfg: &SynthesisConfig) -> Result<Network> {
    match &input.model {
        Some(p) => {
            let m = NetworkModel::load(p)?;
            Ok(Network { agents: m.agents, topology: m.topology, channel: cfg.channel })
        }
        None => {
            let mut net = bench::build_paper_example(&input.spec.spec())?;
            net.channel = cfg.channel;
            Ok(net)
        }
    }
}

fn create(dir: &Path, name: &str, outputs: &mut Vec<String>) -> Result<BufWriter<File>> {
    outputs.push(name.to_string());
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn save_model(dir: &Path, name: &str, net: &Network, p: &FeasiblePoint, outputs: &mut Vec<String>) -> Result<()> {
    pipeline::model_of(net, p).save(&dir.join(name))?;
    outputs.push(name.to_string());
    Ok(())
}

fn synth(net: &Network, cfg: &SynthesisConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let run = pipeline::run(net, cfg)?;
    let mut outputs = Vec::new();
    println!("init: feedthrough {} after {} attempt(s), ν = {:.6}", run.init.feedthrough, run.init.attempts, run.init.point.nu);
    println!("centralized: ν = {:.6} ({:?})", run.centralized.point.nu, run.centralized.status);
    ico::write_trace(create(dir, "centralize_trace.csv", &mut outputs)?, &run.centralized.trace)?;
    save_model(dir, "centralized.toml", net, &run.centralized.point, &mut outputs)?;
    let multi = run.results.len() > 1;
    let mut rows = Vec::new();
    for (k, r) in run.results.iter().enumerate() {
        let suffix = if multi { format!("_{k}") } else { String::new() };
        match r {
            Ok(r) => {
                println!("γ = {:e}: {} nonzero blocks, ν = {:.6}", r.gamma, r.nonzero_blocks(), r.point().nu);
                ico::write_trace(create(dir, &format!("trace{suffix}.csv"), &mut outputs)?, r.trace())?;
                save_model(dir, &format!("model{suffix}.toml"), net, r.point(), &mut outputs)?;
                rows.push(SweepRow::from_result(r));
            }
            Err(e) => {
                println!("γ = {:e}: failed: {e}", cfg.gamma.values()[k]);
                rows.push(SweepRow::failed(cfg.gamma.values()[k], cfg.penalty, e));
            }
        }
    }
    bench::write_sweep_csv(create(dir, "results.csv", &mut outputs)?, &rows)?;
    RunManifest::new("synth", cfg, outputs).save(&dir.join("manifest.toml"))?;
    if rows.iter().all(|r| !r.succeeded()) && !rows.is_empty() {
        return Err(CliError::Usage("every synthesis run failed".into()));
    }
    Ok(())
}

fn sweep(net: &Network, cfg: &SynthesisConfig, gammas: &[f64], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    let init = pipeline::init_local(net, cfg)?;
    let central = pipeline::centralize(net, &init.point, cfg)?;
    let threshold = bench::band_threshold(init.point.nu, central.point.nu);
    println!("decentralized ν = {:.6}, centralized ν = {:.6}, 5% band ν ≤ {threshold:.6}", init.point.nu, central.point.nu);
    let rows: Vec<SweepRow> = bench::sweep(net, &central.point, gammas, cfg).into_iter().map(|(r, _)| r).collect();
    for r in &rows {
        println!("γ = {:e}: {} blocks, ν = {:.6} ({})", r.gamma, r.nonzero, r.nu, r.status);
    }
    bench::write_sweep_csv(create(dir, "sweep.csv", &mut outputs)?, &rows)?;
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.succeeded()).map(|r| (r.nonzero as f64, r.nu)).collect();
    bench::write_plot_data(create(dir, "tradeoff.dat", &mut outputs)?, "sparsity tradeoff", "nonzero_blocks", "nu", &pts)?;
    match bench::band_crossing(&rows, threshold) {
        Some(n) => println!("5% band reached with {n} nonzero blocks"),
        None => println!("5% band not reached"),
    }
    let mut c = cfg.clone();
    c.gamma = GammaSpec::List(gammas.to_vec());
    RunManifest::new("sweep", &c, outputs).save(&dir.join("manifest.toml"))?;
    Ok(())
}

fn robustness(model: &Path, baseline: Option<&Path>, trials: usize, seed: u64, cfg: &SynthesisConfig, dir: &Path) -> Result<()> {
    if trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    let m = NetworkModel::load(model)?;
    let (net, p) = pipeline::certify_model(&m, cfg)?;
    let base = match baseline {
        Some(b) => {
            let bm = NetworkModel::load(b)?;
            let ctrls = bm.controllers.clone();
            let shapes: Vec<_> = ctrls.iter().map(|c| (c.states(), c.inputs(), c.outputs())).collect();
            let hbar = bm.interconnection.clone().ok_or_else(|| CliError::Usage("baseline model has no interconnection".into()))?;
            ico::certify_fixed(&net, &shapes, &plant::bank_gain(&ctrls), &hbar, false, &cfg.ico_options())?
        }
        None => {
            let init = pipeline::init_local(&net, cfg)?;
            let b = bench::hinf_baseline(&net, &init.controllers, cfg)?;
            save_model(dir, "baseline.toml", &net, &b.point, &mut outputs)?;
            b.point
        }
    };
    for (label, point) in [("synthesized", &p), ("baseline", &base)] {
        let (rows, s) = bench::robustness_mc(&net, point, trials, seed);
        println!("{label}: nominal ν = {:.6}, best {:.6}, worst {:.6}, spread {:.6}, unstable {}", point.nu, s.best, s.worst, s.spread(), s.unstable);
        bench::write_mc_csv(create(dir, &format!("robustness_{label}.csv"), &mut outputs)?, label, &rows)?;
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.trial as f64, r.hinf)).collect();
        bench::write_plot_data(create(dir, &format!("robustness_{label}.dat"), &mut outputs)?, label, "trial", "hinf", &pts)?;
    }
    let mut c = cfg.clone();
    c.seed = seed;
    RunManifest::new("robustness", &c, outputs).save(&dir.join("manifest.toml"))?;
    Ok(())
}

fn simulate(model: &Path, input: InputKind, index: usize, t_end: f64, dt: f64, out: &Path, cfg: &SynthesisConfig) -> Result<()> {
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(CliError::Usage("dt and t-end must be positive".into()));
    }
    let m = NetworkModel::load(model)?;
    let (net, p) = pipeline::certify_model(&m, cfg)?;
    let cl = net.closed_loop(&p)?;
    if index >= cl.inputs() {
        return Err(CliError::Usage(format!("input index {index} out of range (0..{})", cl.inputs())));
    }
    let steps = (t_end / dt).round() as usize + 1;
    let width = match input {
        InputKind::Step => steps,
        InputKind::Pulse => ((1.0 / dt).round() as usize).max(1),
    };
    let values = (0..steps)
        .map(|k| Vector::from_fn(cl.inputs(), |i, _| if i == index && k < width { 1.0 } else { 0.0 }))
        .collect();
    let traj = plant::simulate_from_rest(&cl, &Sampled { dt, values }, dt, t_end);
    let mut w = BufWriter::new(File::create(out)?);
    use std::io::Write;
    writeln!(w, "# closed-loop response, input {index}")?;
    writeln!(w, "# t {}", (0..cl.outputs()).map(|i| format!("z{i}")).collect::<Vec<_>>().join(" "))?;
    for (t, y) in traj.t.iter().zip(&traj.y) {
        write!(w, "{t}")?;
        for v in y.iter() {
            write!(w, " {v:.10e}")?;
        }
        writeln!(w)?;
    }
    println!("wrote {} samples to {}", traj.t.len(), out.display());
    Ok(())
}

fn analyze(model: &Path, cfg: &SynthesisConfig) -> Result<()> {
    let m = NetworkModel::load(model)?;
    let (net, p) = pipeline::certify_model(&m, cfg)?;
    let res = ico::verify(&net, &p)?;
    let cl = net.closed_loop(&p)?;
    let abscissa = numlin::spectral_abscissa(&cl.a).map_err(|e| CliError::Usage(e.to_string()))?;
    let oracle = numlin::hinf_norm(&cl, 1e-10).map_err(|e| CliError::Usage(e.to_string()))?;
    let (name, worst) = res.worst();
    println!("certified: yes");
    println!("ν = {:.10}", p.nu);
    println!("closed-loop H∞ norm = {oracle:.10}");
    println!("spectral abscissa = {abscissa:.6e}");
    println!("nonzero blocks = {}", dissynth::sparsity::cardinality(&p.hbar, dissynth::sparsity::ZERO_TOL));
    println!("tightest constraint: {name} (λ_max {worst:.3e})");
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::ExamplePaper { spec, out } => {
            let net = bench::build_paper_example(&spec.spec())?;
            let m = NetworkModel { agents: net.agents, topology: net.topology, controllers: Vec::new(), interconnection: None };
            m.save(out)?;
            println!("wrote {}", out.display());
        }
        Command::Synth { input, over, out_dir } => {
            over.apply(&mut cfg);
            cfg.validate()?;
            synth(&network(input, &cfg)?, &cfg, out_dir)?;
        }
        Command::Sweep { input, over, gamma_min, gamma_max, count, out_dir } => {
            over.apply(&mut cfg);
            cfg.validate()?;
            if !(*gamma_min > 0.0 && gamma_max >= gamma_min) {
                return Err(CliError::Usage("need 0 < gamma-min ≤ gamma-max".into()));
            }
            let gammas = if *count == 0 { Vec::new() } else { GammaSpec::log_space(*gamma_min, *gamma_max, *count).values() };
            sweep(&network(input, &cfg)?, &cfg, &gammas, out_dir)?;
        }
        Command::Robustness { model, baseline, trials, seed, out_dir } => {
            robustness(model, baseline.as_deref(), *trials, *seed, &cfg, out_dir)?;
        }
        Command::Simulate { model, input, index, t_end, dt, out } => {
            simulate(model, *input, *index, *t_end, *dt, out, &cfg)?;
        }
        Command::Analyze { model } => analyze(model, &cfg)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
