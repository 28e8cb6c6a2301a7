//! Descend from the decentralized design to a dense interconnection and
//! print the iteration trace.

use dissynth::bench::{build_paper_example, ExperimentSpec};
use dissynth::ico;
use dissynth::pipeline::{centralize, init_local, SynthesisConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = build_paper_example(&ExperimentSpec { agents: 3, unstable: 1, ..Default::default() })?;
    let cfg = SynthesisConfig::default();
    let init = init_local(&net, &cfg)?;
    let out = centralize(&net, &init.point, &cfg)?;
    ico::write_trace(std::io::stdout(), &out.trace)?;
    println!("{:?}: ν {:.6} -> {:.6}", out.status, init.point.nu, out.point.nu);
    Ok(())
}
