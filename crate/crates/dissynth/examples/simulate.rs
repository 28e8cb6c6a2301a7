//! Step response of a certified closed loop, written as gnuplot data.

use std::io::Write;

use dissynth::bench::{build_paper_example, ExperimentSpec};
use dissynth::numlin::Vector;
use dissynth::pipeline::{init_local, SynthesisConfig};
use dissynth::plant::{self, Sampled};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = build_paper_example(&ExperimentSpec { agents: 3, unstable: 1, ..Default::default() })?;
    let init = init_local(&net, &SynthesisConfig::default())?;
    let cl = net.closed_loop(&init.point)?;
    let (dt, t_end) = (0.01, 20.0);
    let step = Sampled { dt: t_end, values: vec![Vector::from_fn(cl.inputs(), |i, _| if i == 0 { 1.0 } else { 0.0 })] };
    let traj = plant::simulate_from_rest(&cl, &step, dt, t_end);
    let path = std::env::temp_dir().join("step.dat");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(w, "# t z0")?;
    for (t, y) in traj.t.iter().zip(&traj.y) {
        writeln!(w, "{t} {:.10e}", y[0])?;
    }
    println!("final output {:.6}, wrote {}", traj.y.last().map_or(0.0, |y| y[0]), path.display());
    Ok(())
}
