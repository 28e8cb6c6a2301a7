//! H∞ norm of a random stable system, by the bounded-real LMI and by
//! Hamiltonian bisection.

use dissynth::conic::SolverOptions;
use dissynth::{hinf, numlin, plant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ss = plant::random_stable(&mut rng, 6, 2, 2, true, 0.2);
    let cert = hinf::min_hinf(&ss, &SolverOptions::default())?;
    let oracle = numlin::hinf_norm(&ss, 1e-10)?;
    println!("LMI bound     {:.8}", cert.nu);
    println!("bisection     {:.8}", oracle);
    println!("relative gap  {:.2e}", (cert.nu - oracle).abs() / oracle);
    println!("certificate holds: {}", cert.holds_for(&ss, 0.0));
    Ok(())
}
