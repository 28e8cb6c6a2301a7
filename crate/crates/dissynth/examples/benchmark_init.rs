//! Local LQG initialization of the ten-agent benchmark network.

use std::time::Instant;

use dissynth::bench::{build_paper_example, ExperimentSpec};
use dissynth::pipeline::{init_local, SynthesisConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = build_paper_example(&ExperimentSpec::default())?;
    let cfg = SynthesisConfig::default();
    let t = Instant::now();
    let init = init_local(&net, &cfg)?;
    println!("feedthrough {} after {} attempt(s)", init.feedthrough, init.attempts);
    println!("decentralized ν = {:.6} ({:.1} s)", init.point.nu, t.elapsed().as_secs_f64());
    Ok(())
}
