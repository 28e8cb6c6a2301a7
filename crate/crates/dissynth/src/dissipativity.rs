//! QSR supply rates, KYP certificates, the controller dissipativity
//! constraint in packed form, the network dissipativity inequality and a
//! trajectory-based check of the supply integral.

use thiserror::Error;

use crate::conic::{AffineMat, ConicError, LmiExpr, Model, SolverOptions, VarRef};
use crate::numlin::{self, Mat, Vector};
use crate::plant::{PolytopicAgent, Signal, StateSpace};

#[derive(Debug, Error)]
pub enum DissError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Conic(#[from] ConicError),
}

pub type Result<T> = std::result::Result<T, DissError>;

/// Supply rate `yᵀQy + 2yᵀSu + uᵀRu` for an operator with `l` outputs and
/// `m` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct QsrTriple {
    pub q: Mat,
    pub s: Mat,
    pub r: Mat,
}

impl QsrTriple {
    pub fn new(q: Mat, s: Mat, r: Mat) -> Result<Self> {
        let (l, m) = s.shape();
        if q.shape() != (l, l) || r.shape() != (m, m) {
            return Err(DissError::Dimension(format!("Q {:?} S {:?} R {:?}", q.shape(), s.shape(), r.shape())));
        }
        Ok(Self { q: numlin::symmetrize(&q), s, r: numlin::symmetrize(&r) })
    }

    /// `Q = 0, S = ½I, R = 0`.
    pub fn passivity(k: usize) -> Self {
        Self { q: Mat::zeros(k, k), s: numlin::eye(k) * 0.5, r: Mat::zeros(k, k) }
    }

    /// `Q = −I, S = 0, R = γ²I`: L2 gain at most `γ`.
    pub fn gain_bound(gamma: f64, l: usize, m: usize) -> Self {
        Self { q: -numlin::eye(l), s: Mat::zeros(l, m), r: numlin::eye(m) * (gamma * gamma) }
    }

    pub fn outputs(&self) -> usize {
        self.q.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.r.nrows()
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self { q: &self.q * lambda, s: &self.s * lambda, r: &self.r * lambda }
    }

    pub fn supply(&self, y: &Vector, u: &Vector) -> f64 {
        (y.transpose() * &self.q * y)[(0, 0)] + 2.0 * (y.transpose() * &self.s * u)[(0, 0)] + (u.transpose() * &self.r * u)[(0, 0)]
    }

    /// Block diagonal stacking over several operators.
    pub fn stack(triples: &[QsrTriple]) -> Self {
        let pick = |f: fn(&QsrTriple) -> &Mat| numlin::blkdiag(&triples.iter().map(|t| f(t).clone()).collect::<Vec<_>>());
        Self { q: pick(|t| &t.q), s: pick(|t| &t.s), r: pick(|t| &t.r) }
    }

    pub fn as_affine(&self) -> QsrAffine {
        QsrAffine {
            q: AffineMat::constant(self.q.clone()),
            s: AffineMat::constant(self.s.clone()),
            r: AffineMat::constant(self.r.clone()),
        }
    }
}

/// Supply-rate matrices as affine expressions in decision variables.
#[derive(Debug, Clone)]
pub struct QsrAffine {
    pub q: AffineMat,
    pub s: AffineMat,
    pub r: AffineMat,
}

/// Decision variables `(Q, S, R)` of one operator.
#[derive(Debug, Clone, Copy)]
pub struct QsrVars {
    pub q: VarRef,
    pub s: VarRef,
    pub r: VarRef,
}

impl QsrVars {
    pub fn declare(model: &mut Model, name: &str, l: usize, m: usize) -> Self {
        Self {
            q: model.symmetric(&format!("{name}.Q"), l),
            s: model.matrix(&format!("{name}.S"), l, m, None),
            r: model.symmetric(&format!("{name}.R"), m),
        }
    }

    pub fn affine(&self) -> QsrAffine {
        QsrAffine { q: AffineMat::var(self.q), s: AffineMat::var(self.s), r: AffineMat::var(self.r) }
    }

    pub fn value(&self, model: &Model, x: &[f64]) -> QsrTriple {
        QsrTriple { q: model.value(self.q, x), s: model.value(self.s, x), r: model.value(self.r, x) }
    }
}

/// Dissipativity certificate with storage `xᵀPx`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub triple: QsrTriple,
    pub storage: Mat,
    pub margin: f64,
}

fn selectors(n: usize, m: usize) -> (Mat, Mat) {
    let mut e1 = Mat::zeros(n, n + m);
    let mut e2 = Mat::zeros(m, n + m);
    e1.view_mut((0, 0), (n, n)).fill_with_identity();
    e2.view_mut((0, n), (m, m)).fill_with_identity();
    (e1, e2)
}

/// `[[AᵀP+PA−CᵀQC, PB−CᵀS−CᵀQD], [∗, −(R+DᵀS+SᵀD+DᵀQD)]]` for a fixed
/// realization and affine storage and supply matrices.
pub fn kyp_lmi(ss: &StateSpace, p: &AffineMat, t: &QsrAffine) -> Result<LmiExpr> {
    let (n, m, l) = (ss.states(), ss.inputs(), ss.outputs());
    if p.rows() != n || p.cols() != n || t.q.rows() != l || t.s.rows() != l || t.s.cols() != m || t.r.rows() != m {
        return Err(DissError::Dimension("KYP operands".into()));
    }
    let (e1, e2) = selectors(n, m);
    let ab = &ss.a * &e1 + &ss.b * &e2;
    let w = &ss.c * &e1 + &ss.d * &e2;
    let mut out = LmiExpr::he(&p.lmul(&e1.transpose()).rmul(&ab));
    out.add_assign(&LmiExpr::sym(&t.q.lmul(&w.transpose()).rmul(&w)).scale(-1.0));
    out.add_assign(&LmiExpr::he(&t.s.lmul(&w.transpose()).rmul(&e2)).scale(-1.0));
    out.add_assign(&LmiExpr::sym(&t.r.lmul(&e2.transpose()).rmul(&e2)).scale(-1.0));
    Ok(out)
}

/// Numeric KYP matrix.
pub fn kyp_matrix(ss: &StateSpace, p: &Mat, t: &QsrTriple) -> Mat {
    let e = kyp_lmi(ss, &AffineMat::constant(p.clone()), &t.as_affine()).expect("KYP dimensions");
    e.constant
}

/// One KYP inequality per vertex with shared storage and supply rate.
pub fn certify_polytopic(agent: &PolytopicAgent, p: &AffineMat, t: &QsrAffine) -> Result<Vec<LmiExpr>> {
    agent.vertices.iter().map(|v| kyp_lmi(v, p, t)).collect()
}

/// Search a storage matrix for a fixed supply rate.
pub fn certify(ss: &StateSpace, triple: &QsrTriple, opts: &SolverOptions) -> Result<Certificate> {
    let mut model = Model::new();
    let p = model.symmetric("P", ss.states());
    let pa = AffineMat::var(p);
    model.posdef("P", LmiExpr::sym(&pa), None)?;
    let expr = kyp_lmi(ss, &pa, &triple.as_affine())?;
    let margin = crate::conic::default_margin(&expr.constant);
    model.negdef("kyp", expr, Some(margin))?;
    let sol = model.solve(opts)?;
    Ok(Certificate { triple: triple.clone(), storage: model.value(p, &sol.x), margin })
}

impl Certificate {
    /// `P ≻ 0` and the KYP matrix below `−margin` on every given realization.
    pub fn holds_on(&self, systems: &[StateSpace], margin: f64) -> bool {
        numlin::lambda_min(&self.storage) > 0.0
            && systems.iter().all(|s| numlin::is_negdef(&kyp_matrix(s, &self.storage, &self.triple), margin))
    }
}

/// `Q + He(SH̄) + H̄ᵀRH̄` for fixed `H̄` and affine block-diagonal supply data.
pub fn ndt_expr(t: &QsrAffine, hbar: &Mat) -> Result<LmiExpr> {
    let k = t.q.rows();
    if hbar.nrows() != t.r.rows() || hbar.ncols() != k || t.s.cols() != hbar.nrows() {
        return Err(DissError::Dimension(format!("H̄ {:?} vs Q {k} and R {}", hbar.shape(), t.r.rows())));
    }
    let mut out = LmiExpr::sym(&t.q);
    out.add_assign(&LmiExpr::he(&t.s.rmul(hbar)));
    out.add_assign(&LmiExpr::sym(&t.r.lmul(&hbar.transpose()).rmul(hbar)));
    Ok(out)
}

pub fn ndt_matrix(t: &QsrTriple, hbar: &Mat) -> Mat {
    ndt_expr(&t.as_affine(), hbar).expect("NDT dimensions").constant
}

/// Packed controller inequality
/// `−diag(0, R̂) − [Ĉ D̂]ᵀQ̂[Ĉ D̂] + He(diag(P, −Ŝᵀ)·K̂)` for a fixed
/// `K̂ = [[Â, B̂], [Ĉ, D̂]]` with `n` states. Algebraically identical to
/// [`kyp_lmi`] on `(Â, B̂, Ĉ, D̂)`.
pub fn controller_diss_expr(k: &Mat, n: usize, t: &QsrAffine, p: &AffineMat) -> Result<LmiExpr> {
    let (rows, cols) = k.shape();
    let (m_out, l_in) = (rows - n, cols - n);
    if p.rows() != n || t.q.rows() != m_out || (t.s.rows(), t.s.cols()) != (m_out, l_in) || t.r.rows() != l_in {
        return Err(DissError::Dimension("controller dissipativity operands".into()));
    }
    let (e1, e2) = selectors(n, l_in);
    let (f1, f2) = selectors(n, m_out);
    let w = k.view((n, 0), (m_out, cols)).into_owned();
    let mut out = LmiExpr::sym(&t.r.lmul(&e2.transpose()).rmul(&e2)).scale(-1.0);
    out.add_assign(&LmiExpr::sym(&t.q.lmul(&w.transpose()).rmul(&w)).scale(-1.0));
    out.add_assign(&LmiExpr::he(&p.lmul(&e1.transpose()).rmul(&(&f1 * k))));
    out.add_assign(&LmiExpr::he(&t.s.transpose().lmul(&e2.transpose()).rmul(&(&f2 * k))).scale(-1.0));
    Ok(out)
}

pub fn controller_diss_matrix(k: &Mat, n: usize, t: &QsrTriple, p: &Mat) -> Mat {
    controller_diss_expr(k, n, &t.as_affine(), &AffineMat::constant(p.clone())).expect("dimensions").constant
}

/// Smallest running supply `min_t ∫₀ᵗ s(y, u) dτ` from rest over the
/// inputs and `t ∈ [0, t_end]`, integrated with RK4 on the state augmented
/// by the running integral.
pub fn empirical_dissipation(ss: &StateSpace, triple: &QsrTriple, inputs: &[&dyn Signal], t_end: f64, dt: f64) -> f64 {
    inputs
        .iter()
        .map(|u| supply_path(ss, triple, *u, t_end, dt).into_iter().fold(0.0, f64::min))
        .fold(f64::INFINITY, f64::min)
}

/// `∫₀^{t_end} s(y, u) dt` from rest.
pub fn accumulated_supply(ss: &StateSpace, triple: &QsrTriple, u: &dyn Signal, t_end: f64, dt: f64) -> f64 {
    supply_path(ss, triple, u, t_end, dt).last().copied().unwrap_or(0.0)
}

fn supply_path(ss: &StateSpace, triple: &QsrTriple, u: &dyn Signal, t_end: f64, dt: f64) -> Vec<f64> {
    let steps = (t_end / dt).round() as usize;
    let rate = |t: f64, x: &Vector| -> (Vector, f64) {
        let ut = u.at(t);
        let y = &ss.c * x + &ss.d * &ut;
        (&ss.a * x + &ss.b * &ut, triple.supply(&y, &ut))
    };
    let mut x = Vector::zeros(ss.states());
    let mut w = 0.0;
    let mut path = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * dt;
        let (k1, w1) = rate(t, &x);
        let (k2, w2) = rate(t + 0.5 * dt, &(&x + &k1 * (0.5 * dt)));
        let (k3, w3) = rate(t + 0.5 * dt, &(&x + &k2 * (0.5 * dt)));
        let (k4, w4) = rate(t + dt, &(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        w += (w1 + 2.0 * w2 + 2.0 * w3 + w4) * (dt / 6.0);
        path.push(w);
    }
    path
}
