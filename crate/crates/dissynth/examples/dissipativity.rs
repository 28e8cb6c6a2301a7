//! Certify (Q, S, R)-dissipativity and check it against simulated supply.

use dissynth::conic::SolverOptions;
use dissynth::dissipativity::{self, QsrTriple};
use dissynth::numlin::{self, Mat, Vector};
use dissynth::plant::{Sampled, Signal, StateSpace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 0.5 + 1 / (s + 1): strictly passive, gain 1.5
    let ss = StateSpace::new(Mat::from_element(1, 1, -1.0), Mat::identity(1, 1), Mat::identity(1, 1), Mat::from_element(1, 1, 0.5))?;
    let gain = numlin::hinf_norm(&ss, 1e-10)?;
    for (name, t) in [
        ("passivity", QsrTriple::passivity(1)),
        ("gain 1.01", QsrTriple::gain_bound(1.01 * gain, 1, 1)),
        ("gain 0.9", QsrTriple::gain_bound(0.9 * gain, 1, 1)),
    ] {
        match dissipativity::certify(&ss, &t, &SolverOptions::default()) {
            Ok(c) => {
                let burst = Sampled { dt: 0.5, values: vec![Vector::from_element(1, 1.0), Vector::from_element(1, -2.0), Vector::zeros(1)] };
                let inputs: [&dyn Signal; 1] = [&burst];
                let w = dissipativity::empirical_dissipation(&ss, &t, &inputs, 10.0, 1e-3);
                println!("{name:10} certified, P = {:.4}, min supply {w:.3e}", c.storage[(0, 0)]);
            }
            Err(e) => println!("{name:10} not certified: {e}"),
        }
    }
    Ok(())
}
