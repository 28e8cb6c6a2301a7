//! Reweighted ℓ1 penalized synthesis for a few penalty weights.

use dissynth::bench::{build_paper_example, ExperimentSpec};
use dissynth::pipeline::{centralize, init_local, run_from, Penalty, SynthesisConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = build_paper_example(&ExperimentSpec { agents: 3, unstable: 1, ..Default::default() })?;
    let cfg = SynthesisConfig { penalty: Penalty::WeightedL1, ..Default::default() };
    let init = init_local(&net, &cfg)?;
    let central = centralize(&net, &init.point, &cfg)?;
    println!("dense: ν {:.6}", central.point.nu);
    for gamma in [1.0, 100.0, 10000.0] {
        let r = run_from(&net, &central.point, gamma, &cfg)?;
        println!("γ {gamma:>6}: {} blocks, ν {:.6}", r.nonzero_blocks(), r.point().nu);
    }
    Ok(())
}
