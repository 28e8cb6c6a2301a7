//! Performance versus sparsity sweep, written as CSV and gnuplot data.

use std::fs::File;

use dissynth::bench::{self, build_paper_example, ExperimentSpec};
use dissynth::pipeline::{centralize, init_local, GammaSpec, SynthesisConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = build_paper_example(&ExperimentSpec { agents: 3, unstable: 1, ..Default::default() })?;
    let cfg = SynthesisConfig::default();
    let init = init_local(&net, &cfg)?;
    let central = centralize(&net, &init.point, &cfg)?;
    let out = bench::sweep(&net, &central.point, &GammaSpec::log_space(1e-3, 1e2, 4).values(), &cfg);
    let rows: Vec<_> = out.into_iter().map(|(r, _)| r).collect();
    let dir = std::env::temp_dir();
    bench::write_sweep_csv(File::create(dir.join("sweep.csv"))?, &rows)?;
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.succeeded()).map(|r| (r.nonzero as f64, r.nu)).collect();
    bench::write_plot_data(File::create(dir.join("tradeoff.dat"))?, "tradeoff", "nonzero blocks", "nu", &pts)?;
    let threshold = bench::band_threshold(init.point.nu, central.point.nu);
    println!("band ν ≤ {threshold:.4}, sparsest in band: {:?}", bench::band_crossing(&rows, threshold));
    println!("wrote sweep.csv and tradeoff.dat to {}", dir.display());
    Ok(())
}
