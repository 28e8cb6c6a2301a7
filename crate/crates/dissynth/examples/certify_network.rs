//! Certify a given controller bank and interconnection on a three-agent
//! network and confirm the closed loop is stable at sampled realizations.

use dissynth::bench::{build_paper_example, ExperimentSpec};
use dissynth::ico;
use dissynth::numlin;
use dissynth::pipeline::{init_local, SynthesisConfig};
use dissynth::plant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = build_paper_example(&ExperimentSpec { agents: 3, unstable: 1, ..Default::default() })?;
    let init = init_local(&net, &SynthesisConfig::default())?;
    let res = ico::verify(&net, &init.point)?;
    let (name, worst) = res.worst();
    println!("ν = {:.6}, tightest constraint {name} ({worst:.3e})", init.point.nu);
    for seed in 0..5 {
        let agents: Vec<_> = net.agents.iter().map(|a| plant::sample_uncertain(a, seed)).collect();
        let cl = net.closed_loop_with(&agents, &init.point)?;
        println!("realization {seed}: spectral abscissa {:.4}", numlin::spectral_abscissa(&cl.a)?);
    }
    Ok(())
}
