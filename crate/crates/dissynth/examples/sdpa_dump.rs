//! Build a Lyapunov LMI, solve it and dump it in SDPA sparse format.

use dissynth::conic::{AffineMat, LmiExpr, Model, SolverOptions};
use dissynth::numlin::{eye, Mat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = Mat::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, -0.5, -1.0, 1.0, 0.0, 0.0, -3.0]);
    let mut model = Model::new();
    let p = model.symmetric("P", 3);
    model.negdef("lyapunov", LmiExpr::he(&AffineMat::var(p).rmul(&a)), None)?;
    model.posdef("P", LmiExpr::sym(&AffineMat::var(p)).add(&LmiExpr::affine(&(-eye(3)))), None)?;
    model.minimize_linear(p, &eye(3));
    let sol = model.solve(&SolverOptions::default())?;
    println!("trace P = {:.6}, status {:?}", model.objective_value(&sol.x), sol.status);
    let path = std::env::temp_dir().join("lyapunov.dat-s");
    model.write_sdpa(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
