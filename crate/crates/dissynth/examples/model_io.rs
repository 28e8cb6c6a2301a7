//! Save a certified design as a hex-float TOML model, reload it and
//! recertify it bit-for-bit.

use dissynth::bench::{build_paper_example, ExperimentSpec};
use dissynth::pipeline::{certify_model, init_local, model_of, SynthesisConfig};
use dissynth::plant::NetworkModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = build_paper_example(&ExperimentSpec { agents: 3, unstable: 1, ..Default::default() })?;
    let cfg = SynthesisConfig::default();
    let init = init_local(&net, &cfg)?;
    let path = std::env::temp_dir().join("model.toml");
    model_of(&net, &init.point).save(&path)?;
    let back = NetworkModel::load(&path)?;
    let (_, p) = certify_model(&back, &cfg)?;
    println!("saved {}", path.display());
    println!("controllers identical: {}", back.controllers == init.point.controllers());
    println!("ν original {:.6}, recertified {:.6}", init.point.nu, p.nu);
    Ok(())
}
