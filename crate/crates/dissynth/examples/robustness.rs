//! Monte Carlo H∞ norms under sampled parameter uncertainty, for a
//! dissipativity-certified design and an unconstrained H∞ baseline.

use dissynth::bench::{self, build_paper_example, ExperimentSpec};
use dissynth::pipeline::{centralize, init_local, SynthesisConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = build_paper_example(&ExperimentSpec { agents: 3, unstable: 1, ..Default::default() })?;
    let cfg = SynthesisConfig::default();
    let init = init_local(&net, &cfg)?;
    let synth = centralize(&net, &init.point, &cfg)?;
    let baseline = bench::hinf_baseline(&net, &init.controllers, &cfg)?;
    for (label, p) in [("certified", &synth.point), ("baseline", &baseline.point)] {
        let (_, s) = bench::robustness_mc(&net, p, 100, 0);
        println!("{label:9} nominal {:.4} best {:.4} worst {:.4} spread {:.4} unstable {}", p.nu, s.best, s.worst, s.spread(), s.unstable);
    }
    Ok(())
}
