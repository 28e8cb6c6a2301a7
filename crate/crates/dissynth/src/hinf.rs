//! Bounded-real inequality for a closed loop and minimization of the H∞
//! bound `ν`.

use crate::conic::{default_margin, AffineMat, ConicError, LmiExpr, Model, SolverOptions, VarRef};
use crate::numlin::{self, Mat};
use crate::plant::StateSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct HinfCertificate {
    pub y: Mat,
    pub nu: f64,
}

/// Row selectors for the three block rows `(x, w, z)` of the bounded-real matrix.
pub fn br_selectors(n: usize, m: usize, l: usize) -> [Mat; 3] {
    let k = n + m + l;
    let sel = |off: usize, size: usize| {
        let mut e = Mat::zeros(size, k);
        e.view_mut((0, off), (size, size)).fill_with_identity();
        e
    };
    [sel(0, n), sel(n, m), sel(n + m, l)]
}

/// `[[YA+AᵀY, YB, Cᵀ], [∗, −νI, Dᵀ], [∗, ∗, −νI]]` with affine `Y` and a
/// scalar variable `ν`.
pub fn bounded_real_expr(model: &mut Model, ss: &StateSpace, y: &AffineMat, nu: VarRef) -> Result<LmiExpr, ConicError> {
    let (n, m, l) = (ss.states(), ss.inputs(), ss.outputs());
    if y.rows() != n || y.cols() != n || nu.shape() != (1, 1) {
        return Err(ConicError::Dimension(format!("Y {}×{} for {n} states", y.rows(), y.cols())));
    }
    let [e1, e2, e3] = br_selectors(n, m, l);
    let mut out = LmiExpr::affine(&numlin::he(&(e3.transpose() * (&ss.c * &e1 + &ss.d * &e2))));
    out.add_assign(&LmiExpr::he(&y.lmul(&e1.transpose()).rmul(&(&ss.a * &e1 + &ss.b * &e2))));
    let nu_i = model.scaled_identity(nu, m + l);
    let mut pad = Mat::zeros(n + m + l, m + l);
    pad.view_mut((n, 0), (m + l, m + l)).fill_with_identity();
    out.add_assign(&LmiExpr::sym(&AffineMat::product(&pad, nu_i, &pad.transpose())).scale(-1.0));
    Ok(out)
}

/// Numeric bounded-real matrix.
pub fn bounded_real_matrix(ss: &StateSpace, y: &Mat, nu: f64) -> Mat {
    let (n, m, l) = (ss.states(), ss.inputs(), ss.outputs());
    let [e1, e2, e3] = br_selectors(n, m, l);
    let mut out = numlin::he(&(e1.transpose() * y * (&ss.a * &e1 + &ss.b * &e2)));
    out += numlin::he(&(e3.transpose() * (&ss.c * &e1 + &ss.d * &e2)));
    out -= (e2.transpose() * &e2 + e3.transpose() * &e3) * nu;
    numlin::symmetrize(&out)
}

impl HinfCertificate {
    pub fn holds_for(&self, ss: &StateSpace, margin: f64) -> bool {
        numlin::lambda_min(&self.y) > 0.0 && numlin::is_negdef(&bounded_real_matrix(ss, &self.y, self.nu), margin)
    }
}

/// Smallest `ν` with a certificate `Y ≻ 0` for a fixed closed loop.
pub fn min_hinf(ss: &StateSpace, opts: &SolverOptions) -> Result<HinfCertificate, ConicError> {
    if !ss.is_stable() {
        return Err(ConicError::Infeasible);
    }
    let mut model = Model::new();
    let y = model.symmetric("Y", ss.states());
    let nu = model.scalar("nu");
    let ya = AffineMat::var(y);
    let expr = bounded_real_expr(&mut model, ss, &ya, nu)?;
    let margin = default_margin(&expr.constant);
    model.negdef("bounded-real", expr, Some(margin))?;
    model.posdef("Y", LmiExpr::sym(&ya), Some(margin))?;
    model.minimize_scalar(nu, 1.0);
    let sol = model.solve(opts)?;
    Ok(HinfCertificate { y: model.value(y, &sol.x), nu: model.value(nu, &sol.x)[(0, 0)] })
}

#[cfg(test)]
mod tests;
