//! System models: agents, the plant network, controller banks, the global
//! interconnection, closed-loop assembly and simulation.

use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{AffineMat, LmiExpr, Mask, Model, SolverOptions};
use crate::numlin::{self, BlockMat, BlockPartition, Mat, NumError, Vector};

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("interconnection is not well-posed")]
    NotWellPosed,
    #[error("nominal model lies outside the vertex hull")]
    NotInHull,
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<NumError> for PlantError {
    fn from(e: NumError) -> Self {
        PlantError::Dimension(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PlantError>;

/// `ẋ = Ax + Bu`, `y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> numlin::Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(NumError::Dimension(format!(
                "A {:?} B {:?} C {:?} D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    /// Strictly proper realization (`D = 0`).
    pub fn strictly_proper(a: Mat, b: Mat, c: Mat) -> numlin::Result<Self> {
        let d = Mat::zeros(c.nrows(), b.ncols());
        Self::new(a, b, c, d)
    }

    /// Memoryless gain `y = Du`.
    pub fn static_gain(d: Mat) -> Self {
        let (l, m) = d.shape();
        Self { a: Mat::zeros(0, 0), b: Mat::zeros(0, m), c: Mat::zeros(l, 0), d }
    }

    pub fn zeros(n: usize, m: usize, l: usize) -> Self {
        Self { a: Mat::zeros(n, n), b: Mat::zeros(n, m), c: Mat::zeros(l, n), d: Mat::zeros(l, m) }
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_stable(&self) -> bool {
        numlin::is_hurwitz(&self.a)
    }

    /// Packed `[[A, B], [C, D]]`.
    pub fn packed(&self) -> Mat {
        numlin::block_grid(&[vec![self.a.clone(), self.b.clone()], vec![self.c.clone(), self.d.clone()]])
    }

    /// Inverse of [`packed`](Self::packed) for `n` states.
    pub fn from_packed(k: &Mat, n: usize) -> Self {
        let (r, c) = k.shape();
        Self {
            a: k.view((0, 0), (n, n)).into_owned(),
            b: k.view((0, n), (n, c - n)).into_owned(),
            c: k.view((n, 0), (r - n, n)).into_owned(),
            d: k.view((n, n), (r - n, c - n)).into_owned(),
        }
    }

    /// Output scaled by `s`: `(A, B, sC, sD)`.
    pub fn scale_output(&self, s: f64) -> Self {
        Self { a: self.a.clone(), b: self.b.clone(), c: &self.c * s, d: &self.d * s }
    }
}

/// Agent with polytopic uncertainty in `A`; `B`, `C`, `D` are shared.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopicAgent {
    pub nominal: StateSpace,
    pub vertices: Vec<StateSpace>,
}

impl PolytopicAgent {
    pub fn new(nominal: StateSpace, vertices: Vec<StateSpace>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(PlantError::Invalid("polytope needs at least one vertex".into()));
        }
        for v in &vertices {
            if v.a.shape() != nominal.a.shape() || v.b != nominal.b || v.c != nominal.c || v.d != nominal.d {
                return Err(PlantError::Dimension("vertices must share B, C, D with the nominal".into()));
            }
        }
        let agent = Self { nominal, vertices };
        if !agent.contains(&agent.nominal.a) {
            return Err(PlantError::NotInHull);
        }
        Ok(agent)
    }

    /// Certain agent: the nominal is the only vertex.
    pub fn certain(nominal: StateSpace) -> Self {
        Self { vertices: vec![nominal.clone()], nominal }
    }

    /// Box of relative half-width `frac` on every nonzero entry of the
    /// nominal `A`, one vertex per corner.
    pub fn relative_box(nominal: StateSpace, frac: f64) -> Result<Self> {
        let n = nominal.states();
        let free: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| nominal.a[(i, j)] != 0.0).collect();
        let mut vertices = Vec::with_capacity(1 << free.len());
        for corner in 0..(1usize << free.len()) {
            let mut v = nominal.clone();
            for (bit, &(i, j)) in free.iter().enumerate() {
                let a = nominal.a[(i, j)];
                let sign = if corner >> bit & 1 == 1 { 1.0 } else { -1.0 };
                v.a[(i, j)] = a + sign * frac * a.abs();
            }
            vertices.push(v);
        }
        Self::new(nominal, vertices)
    }

    pub fn states(&self) -> usize {
        self.nominal.states()
    }

    pub fn inputs(&self) -> usize {
        self.nominal.inputs()
    }

    pub fn outputs(&self) -> usize {
        self.nominal.outputs()
    }

    /// Entrywise lower and upper bounds of `A` over the vertices.
    pub fn entry_bounds(&self) -> (Mat, Mat) {
        let mut lo = self.vertices[0].a.clone();
        let mut hi = lo.clone();
        for v in &self.vertices[1..] {
            lo = lo.zip_map(&v.a, f64::min);
            hi = hi.zip_map(&v.a, f64::max);
        }
        (lo, hi)
    }

    /// Whether `a` is a convex combination of the vertex matrices, decided
    /// by a small linear program.
    pub fn contains(&self, a: &Mat) -> bool {
        let k = self.vertices.len();
        if k == 1 {
            return (&self.vertices[0].a - a).norm() <= 1e-12 * (1.0 + a.norm());
        }
        let mut model = Model::new();
        let lam = model.matrix("lambda", k, 1, None);
        let t = model.scalar("t");
        let scalar = |m: &mut Model, coefs: &[f64], tc: f64, rhs: f64| {
            let row = Mat::from_row_slice(1, k, coefs);
            let mut e = AffineMat::product(&row, lam, &Mat::identity(1, 1));
            e = e.add(&AffineMat::product(&Mat::from_element(1, 1, tc), t, &Mat::identity(1, 1)));
            e = e.add_const(&Mat::from_element(1, 1, -rhs));
            m.negdef("hull", LmiExpr::sym(&e), Some(0.0)).expect("hull constraint");
        };
        for i in 0..k {
            let mut row = vec![0.0; k];
            row[i] = -1.0;
            scalar(&mut model, &row, -1.0, 0.0);
        }
        let mut rows: Vec<(Vec<f64>, f64)> = vec![(vec![1.0; k], 1.0)];
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                rows.push((self.vertices.iter().map(|v| v.a[(i, j)]).collect(), a[(i, j)]));
            }
        }
        for (coefs, rhs) in rows {
            scalar(&mut model, &coefs, -1.0, rhs);
            let neg: Vec<f64> = coefs.iter().map(|c| -c).collect();
            scalar(&mut model, &neg, -1.0, -rhs);
        }
        let floor = LmiExpr::sym(&AffineMat::var(t).scale(-1.0).add_const(&Mat::from_element(1, 1, -1.0)));
        model.negdef("floor", floor, Some(0.0)).expect("floor");
        model.minimize_scalar(t, 1.0);
        match model.solve(&SolverOptions::default()) {
            Ok(sol) => model.value(t, &sol.x)[(0, 0)] <= 1e-7 * (1.0 + a.norm()),
            Err(_) => false,
        }
    }
}

/// Draw `A` uniformly inside the entrywise box spanned by the vertices.
pub fn sample_uncertain(agent: &PolytopicAgent, seed: u64) -> StateSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_uncertain_with(agent, &mut rng)
}

pub fn sample_uncertain_with<R: Rng>(agent: &PolytopicAgent, rng: &mut R) -> StateSpace {
    let (lo, hi) = agent.entry_bounds();
    let mut out = agent.nominal.clone();
    for j in 0..lo.ncols() {
        for i in 0..lo.nrows() {
            out.a[(i, j)] = if hi[(i, j)] > lo[(i, j)] { rng.random_range(lo[(i, j)]..=hi[(i, j)]) } else { lo[(i, j)] };
        }
    }
    out
}

/// Random stable realization: Gaussian entries with `A` shifted so its
/// spectral abscissa is at most `-margin`.
pub fn random_stable<R: Rng>(rng: &mut R, n: usize, m: usize, l: usize, feedthrough: bool, margin: f64) -> StateSpace {
    let mut gauss = |r: usize, c: usize| Mat::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut a = gauss(n, n);
    let b = gauss(n, m);
    let c = gauss(l, n);
    let d = if feedthrough { gauss(l, m) } else { Mat::zeros(l, m) };
    if n > 0 {
        let abscissa = numlin::spectral_abscissa(&a).unwrap_or(0.0);
        let shift = (abscissa + margin).max(0.0);
        for i in 0..n {
            a[(i, i)] -= shift;
        }
    }
    StateSpace { a, b, c, d }
}

/// Fixed plant coupling `u = e + Hy`; block `(i, j)` maps output `j` to input `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub h: BlockMat,
}

impl NetworkTopology {
    pub fn new(h: BlockMat) -> Result<Self> {
        if h.block_rows() != h.block_cols() {
            return Err(PlantError::Dimension("H must be square block-wise".into()));
        }
        for i in 0..h.block_rows() {
            if h.block_norm(i, i) != 0.0 {
                return Err(PlantError::Invalid(format!("diagonal block ({i},{i}) of H is nonzero")));
            }
        }
        Ok(Self { h })
    }

    pub fn from_agents(agents: &[PolytopicAgent], h: Mat) -> Result<Self> {
        let rows = BlockPartition::new(agents.iter().map(|a| a.inputs()).collect());
        let cols = BlockPartition::new(agents.iter().map(|a| a.outputs()).collect());
        Self::new(BlockMat::from_mat(h, rows, cols)?)
    }

    pub fn agents(&self) -> usize {
        self.h.block_rows()
    }
}

/// `H̄ = [[H, H̃_ŷ], [H̃_y, 0]]` over agents `1..N` then controllers `N+1..2N`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalInterconnection {
    pub hbar: BlockMat,
    pub designable: Mask,
    n: usize,
    mt: usize,
    lt: usize,
}

impl GlobalInterconnection {
    pub fn new(h: &NetworkTopology, ht_y: &Mat, ht_yhat: &Mat) -> Result<Self> {
        let n = h.agents();
        let m = h.h.rows.clone();
        let l = h.h.cols.clone();
        if ht_y.shape() != (l.total(), l.total()) || ht_yhat.shape() != (m.total(), m.total()) {
            return Err(PlantError::Dimension("H̃_y is l×l and H̃_ŷ is m×m".into()));
        }
        let rows = m.concat(&l);
        let cols = l.concat(&m);
        let (mt, lt) = (m.total(), l.total());
        let mut data = Mat::zeros(rows.total(), cols.total());
        data.view_mut((0, 0), (mt, lt)).copy_from(&h.h.data);
        data.view_mut((0, lt), (mt, mt)).copy_from(ht_yhat);
        data.view_mut((mt, 0), (lt, lt)).copy_from(ht_y);
        let designable = Mask::from_fn(2 * n, 2 * n, |i, j| (i < n) != (j < n));
        Ok(Self { hbar: BlockMat::from_mat(data, rows, cols)?, designable, n, mt, lt })
    }

    /// Decentralized start: `H̃_y = I`, `H̃_ŷ = I`.
    pub fn decentralized(h: &NetworkTopology) -> Result<Self> {
        let (mt, lt) = (h.h.rows.total(), h.h.cols.total());
        Self::new(h, &numlin::eye(lt), &numlin::eye(mt))
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    /// Total plant input dimension `m`.
    pub fn m_total(&self) -> usize {
        self.mt
    }

    /// Total plant output dimension `l`.
    pub fn l_total(&self) -> usize {
        self.lt
    }

    pub fn h(&self) -> Mat {
        let (mt, lt) = (self.m_total(), self.l_total());
        self.hbar.data.view((0, 0), (mt, lt)).into_owned()
    }

    pub fn ht_y(&self) -> Mat {
        let (mt, lt) = (self.m_total(), self.l_total());
        self.hbar.data.view((mt, 0), (lt, lt)).into_owned()
    }

    pub fn ht_yhat(&self) -> Mat {
        let (mt, lt) = (self.m_total(), self.l_total());
        self.hbar.data.view((0, lt), (mt, mt)).into_owned()
    }

    pub fn topology(&self) -> NetworkTopology {
        let rows = BlockPartition::new(self.hbar.rows.sizes[..self.n].to_vec());
        let cols = BlockPartition::new(self.hbar.cols.sizes[..self.n].to_vec());
        NetworkTopology { h: BlockMat::from_mat(self.h(), rows, cols).expect("partition") }
    }

    /// Same fixed blocks with new designable parts.
    pub fn with_designable(&self, ht_y: &Mat, ht_yhat: &Mat) -> Result<Self> {
        Self::new(&self.topology(), ht_y, ht_yhat)
    }

    /// Replace the whole matrix; fixed blocks must be bit-identical.
    pub fn with_hbar(&self, data: &Mat) -> Result<Self> {
        let next = BlockMat::from_mat(data.clone(), self.hbar.rows.clone(), self.hbar.cols.clone())?;
        let out = Self { hbar: next, designable: self.designable.clone(), ..*self };
        if !self.fixed_blocks_equal(&out) {
            return Err(PlantError::Invalid("fixed blocks of H̄ changed".into()));
        }
        Ok(out)
    }

    /// Bit-level equality of every block outside the designable mask.
    pub fn fixed_blocks_equal(&self, other: &Self) -> bool {
        let k = 2 * self.n;
        (0..k).all(|i| {
            (0..k).all(|j| {
                self.designable[(i, j)]
                    || self.hbar.block(i, j).iter().zip(other.hbar.block(i, j).iter()).all(|(a, b)| a.to_bits() == b.to_bits())
            })
        })
    }

    /// Entry mask of `H̄` that is true inside designable blocks marked in `blocks`.
    pub fn entry_mask(&self, blocks: &Mask) -> Mask {
        let mut mask = Mask::from_element(self.hbar.data.nrows(), self.hbar.data.ncols(), false);
        for i in 0..2 * self.n {
            for j in 0..2 * self.n {
                if self.designable[(i, j)] && blocks[(i, j)] {
                    let (r, c) = (self.hbar.rows.range(i), self.hbar.cols.range(j));
                    for a in r.clone() {
                        for b in c.clone() {
                            mask[(a, b)] = true;
                        }
                    }
                }
            }
        }
        mask
    }

    /// Block-wise nonzero pattern of the designable part at threshold `tol`.
    pub fn block_pattern(&self, tol: f64) -> Mask {
        Mask::from_fn(2 * self.n, 2 * self.n, |i, j| self.designable[(i, j)] && self.hbar.block_norm(i, j) > tol)
    }
}

/// Diagonal stacking `(Â_d, B̂_d, Ĉ_d, D̂_d)` of a controller bank.
pub fn stack_bank(ctrls: &[StateSpace]) -> StateSpace {
    let pick = |f: fn(&StateSpace) -> &Mat| numlin::blkdiag(&ctrls.iter().map(|c| f(c).clone()).collect::<Vec<_>>());
    StateSpace { a: pick(|c| &c.a), b: pick(|c| &c.b), c: pick(|c| &c.c), d: pick(|c| &c.d) }
}

/// `K̂ = [[Â_d, B̂_d], [Ĉ_d, D̂_d]]`.
pub fn bank_gain(ctrls: &[StateSpace]) -> Mat {
    stack_bank(ctrls).packed()
}

/// Split `K̂` back into per-controller realizations of the given shapes.
pub fn unstack_bank(k: &Mat, shapes: &[(usize, usize, usize)]) -> Vec<StateSpace> {
    let nt: usize = shapes.iter().map(|s| s.0).sum();
    let (mut xo, mut uo, mut yo) = (0, 0, 0);
    let mut out = Vec::with_capacity(shapes.len());
    for &(n, m_in, l_out) in shapes {
        out.push(StateSpace {
            a: k.view((xo, xo), (n, n)).into_owned(),
            b: k.view((xo, nt + uo), (n, m_in)).into_owned(),
            c: k.view((nt + yo, xo), (l_out, n)).into_owned(),
            d: k.view((nt + yo, nt + uo), (l_out, m_in)).into_owned(),
        });
        xo += n;
        uo += m_in;
        yo += l_out;
    }
    out
}

fn lowering(ctrls: &[StateSpace], hlow: &Mat) -> Result<(StateSpace, Mat)> {
    let bank = stack_bank(ctrls);
    if hlow.shape() != (bank.inputs(), bank.outputs()) {
        return Err(PlantError::Dimension(format!(
            "H̲ is {:?}, controllers need {}x{}",
            hlow.shape(),
            bank.inputs(),
            bank.outputs()
        )));
    }
    let m = numlin::eye(bank.outputs()) - &bank.d * hlow;
    Ok((bank, m))
}

/// `I − D̂_d H̲` is invertible.
pub fn well_posed(ctrls: &[StateSpace], hlow: &Mat) -> bool {
    match lowering(ctrls, hlow) {
        Ok((_, m)) => {
            if m.nrows() == 0 {
                return true;
            }
            let sv = m.singular_values();
            let smax = sv.max();
            sv.min() > 1e-10 * smax.max(f64::MIN_POSITIVE)
        }
        Err(_) => false,
    }
}

/// Global controller from local controllers with internal coupling `H̲`,
/// input gain `H̃_y` and output gain `H̃_ŷ`.
pub fn interconnect(ctrls: &[StateSpace], hlow: &Mat, ht_y: &Mat, ht_yhat: &Mat) -> Result<StateSpace> {
    if !well_posed(ctrls, hlow) {
        return Err(PlantError::NotWellPosed);
    }
    let (bank, m) = lowering(ctrls, hlow)?;
    let mi = m.try_inverse().ok_or(PlantError::NotWellPosed)?;
    let bh = &bank.b * hlow * &mi;
    let a = &bank.a + &bh * &bank.c;
    let b = (&bank.b + &bh * &bank.d) * ht_y;
    let c = ht_yhat * &mi * &bank.c;
    let d = ht_yhat * &mi * &bank.d * ht_y;
    Ok(StateSpace::new(a, b, c, d)?)
}

/// Matrices of the nominal closed loop in the split form
/// `A_cl = Ā + B̃K̂C̃`, `B_cl = B̄ + B̃K̂H̃`, `C_cl = C̄ + ĤK̂C̃`, `D_cl = ĤK̂H̃`.
#[derive(Debug, Clone)]
pub struct LoopData {
    pub a_bar: Mat,
    pub b_bar: Mat,
    pub c_bar: Mat,
    pub b_tilde: Mat,
    pub c_tilde: Mat,
    pub h_hat: Mat,
    pub h_tilde: Mat,
}

/// Stacked agent matrices `(A_d, B_d, C_d)`.
pub fn stack_agents(agents: &[StateSpace]) -> (Mat, Mat, Mat) {
    let pick = |f: fn(&StateSpace) -> &Mat| numlin::blkdiag(&agents.iter().map(|a| f(a).clone()).collect::<Vec<_>>());
    (pick(|a| &a.a), pick(|a| &a.b), pick(|a| &a.c))
}

impl LoopData {
    pub fn new(agents: &[StateSpace], h: &Mat, nhat: usize, ht_y: &Mat, ht_yhat: &Mat) -> Result<Self> {
        let (ad, bd, cd) = stack_agents(agents);
        let (n, m, l) = (ad.nrows(), bd.ncols(), cd.nrows());
        if h.shape() != (m, l) || ht_y.shape() != (l, l) || ht_yhat.shape() != (m, m) {
            return Err(PlantError::Dimension("interconnection shapes".into()));
        }
        let z = |r, c| Mat::zeros(r, c);
        let a_bar = numlin::blkdiag(&[&ad + &bd * h * &cd, z(nhat, nhat)]);
        let b_bar = numlin::blkdiag(&[bd.clone(), z(nhat, l)]);
        let c_bar = numlin::blkdiag(&[cd.clone(), z(m, nhat)]);
        let b_tilde = numlin::block_grid(&[vec![z(n, nhat), &bd * ht_yhat], vec![numlin::eye(nhat), z(nhat, m)]]);
        let c_tilde = numlin::block_grid(&[vec![z(nhat, n), numlin::eye(nhat)], vec![ht_y * &cd, z(l, nhat)]]);
        let h_hat = numlin::blkdiag(&[z(l, nhat), ht_yhat.clone()]);
        let h_tilde = numlin::blkdiag(&[z(nhat, m), ht_y.clone()]);
        Ok(Self { a_bar, b_bar, c_bar, b_tilde, c_tilde, h_hat, h_tilde })
    }

    pub fn close(&self, khat: &Mat) -> StateSpace {
        StateSpace {
            a: &self.a_bar + &self.b_tilde * khat * &self.c_tilde,
            b: &self.b_bar + &self.b_tilde * khat * &self.h_tilde,
            c: &self.c_bar + &self.h_hat * khat * &self.c_tilde,
            d: &self.h_hat * khat * &self.h_tilde,
        }
    }
}

/// Nominal closed loop with exogenous input `(n, n̂)` and output `(z, ẑ)`.
pub fn closed_loop(agents: &[StateSpace], h: &Mat, ctrls: &[StateSpace], ht_y: &Mat, ht_yhat: &Mat) -> Result<StateSpace> {
    let bank = stack_bank(ctrls);
    let (_, bd, cd) = stack_agents(agents);
    if bank.inputs() != cd.nrows() || bank.outputs() != bd.ncols() {
        return Err(PlantError::Dimension("controller bank does not match agents".into()));
    }
    let data = LoopData::new(agents, h, bank.states(), ht_y, ht_yhat)?;
    Ok(data.close(&bank.packed()))
}

/// Time signal for simulation.
pub trait Signal {
    fn at(&self, t: f64) -> Vector;
}

impl<F: Fn(f64) -> Vector> Signal for F {
    fn at(&self, t: f64) -> Vector {
        self(t)
    }
}

/// Uniformly sampled signal, linearly interpolated, zero after the last sample.
#[derive(Debug, Clone)]
pub struct Sampled {
    pub dt: f64,
    pub values: Vec<Vector>,
}

impl Signal for Sampled {
    fn at(&self, t: f64) -> Vector {
        let dim = self.values.first().map_or(0, |v| v.len());
        if self.values.is_empty() || t < 0.0 {
            return Vector::zeros(dim);
        }
        let s = t / self.dt;
        let k = s.floor() as usize;
        if k + 1 >= self.values.len() {
            return if k < self.values.len() { self.values[k].clone() } else { Vector::zeros(dim) };
        }
        let w = s - k as f64;
        &self.values[k] * (1.0 - w) + &self.values[k + 1] * w
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vector>,
    pub y: Vec<Vector>,
}

/// Fixed-step RK4 from `x0` over `[0, t_end]`.
pub fn simulate(ss: &StateSpace, input: &dyn Signal, x0: &Vector, dt: f64, t_end: f64) -> Trajectory {
    assert!(dt > 0.0, "dt must be positive");
    let steps = (t_end / dt).round() as usize;
    let f = |t: f64, x: &Vector| &ss.a * x + &ss.b * input.at(t);
    let out = |t: f64, x: &Vector| &ss.c * x + &ss.d * input.at(t);
    let mut x = x0.clone();
    let mut traj = Trajectory { t: Vec::with_capacity(steps + 1), x: Vec::new(), y: Vec::new() };
    for k in 0..=steps {
        let t = k as f64 * dt;
        traj.t.push(t);
        traj.y.push(out(t, &x));
        traj.x.push(x.clone());
        if k == steps {
            break;
        }
        let k1 = f(t, &x);
        let k2 = f(t + 0.5 * dt, &(&x + &k1 * (0.5 * dt)));
        let k3 = f(t + 0.5 * dt, &(&x + &k2 * (0.5 * dt)));
        let k4 = f(t + dt, &(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    traj
}

/// Zero initial state convenience.
pub fn simulate_from_rest(ss: &StateSpace, input: &dyn Signal, dt: f64, t_end: f64) -> Trajectory {
    simulate(ss, input, &DVector::zeros(ss.states()), dt, t_end)
}

/// Matrix as row-major hexadecimal float strings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HexMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<String>,
}

impl HexMat {
    pub fn from_mat(m: &Mat) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(numlin::fmt_hex(m[(i, j)]));
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_mat(&self) -> Result<Mat> {
        if self.data.len() != self.rows * self.cols {
            return Err(PlantError::Format(format!("{}x{} matrix with {} entries", self.rows, self.cols, self.data.len())));
        }
        let vals: Option<Vec<f64>> = self.data.iter().map(|s| numlin::parse_hex(s)).collect();
        let vals = vals.ok_or_else(|| PlantError::Format("bad float literal".into()))?;
        Ok(Mat::from_row_slice(self.rows, self.cols, &vals))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SsRecord {
    pub a: HexMat,
    pub b: HexMat,
    pub c: HexMat,
    pub d: HexMat,
}

impl SsRecord {
    pub fn from_ss(ss: &StateSpace) -> Self {
        Self { a: HexMat::from_mat(&ss.a), b: HexMat::from_mat(&ss.b), c: HexMat::from_mat(&ss.c), d: HexMat::from_mat(&ss.d) }
    }

    pub fn to_ss(&self) -> Result<StateSpace> {
        Ok(StateSpace::new(self.a.to_mat()?, self.b.to_mat()?, self.c.to_mat()?, self.d.to_mat()?)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AgentRecord {
    pub nominal: SsRecord,
    pub vertices: Vec<HexMat>,
}

/// Serialized plant network and, optionally, a controller bank with its
/// interconnection.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub format: String,
    pub agents: Vec<AgentRecord>,
    pub h: HexMat,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub controllers: Vec<SsRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ht_y: Option<HexMat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ht_yhat: Option<HexMat>,
}

pub const MODEL_FORMAT: &str = "dissynth-model/1";

/// Network plus an optional synthesized controller network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub agents: Vec<PolytopicAgent>,
    pub topology: NetworkTopology,
    pub controllers: Vec<StateSpace>,
    pub interconnection: Option<GlobalInterconnection>,
}

impl NetworkModel {
    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.into(),
            agents: self
                .agents
                .iter()
                .map(|a| AgentRecord {
                    nominal: SsRecord::from_ss(&a.nominal),
                    vertices: a.vertices.iter().map(|v| HexMat::from_mat(&v.a)).collect(),
                })
                .collect(),
            h: HexMat::from_mat(&self.topology.h.data),
            controllers: self.controllers.iter().map(SsRecord::from_ss).collect(),
            ht_y: self.interconnection.as_ref().map(|g| HexMat::from_mat(&g.ht_y())),
            ht_yhat: self.interconnection.as_ref().map(|g| HexMat::from_mat(&g.ht_yhat())),
        }
    }

    pub fn from_file(f: &ModelFile) -> Result<Self> {
        if f.format != MODEL_FORMAT {
            return Err(PlantError::Format(format!("unsupported format tag {:?}", f.format)));
        }
        let mut agents = Vec::new();
        for rec in &f.agents {
            let nominal = rec.nominal.to_ss()?;
            let mut vertices = Vec::new();
            for v in &rec.vertices {
                let mut ss = nominal.clone();
                ss.a = v.to_mat()?;
                vertices.push(ss);
            }
            agents.push(PolytopicAgent { nominal, vertices });
        }
        let topology = NetworkTopology::from_agents(&agents, f.h.to_mat()?)?;
        let controllers = f.controllers.iter().map(|c| c.to_ss()).collect::<Result<Vec<_>>>()?;
        let interconnection = match (&f.ht_y, &f.ht_yhat) {
            (Some(y), Some(yh)) => Some(GlobalInterconnection::new(&topology, &y.to_mat()?, &yh.to_mat()?)?),
            (None, None) => None,
            _ => return Err(PlantError::Format("ht_y and ht_yhat must appear together".into())),
        };
        Ok(Self { agents, topology, controllers, interconnection })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("model serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let f: ModelFile = toml::from_str(s).map_err(|e| PlantError::Format(e.to_string()))?;
        Self::from_file(&f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn nominal_agents(&self) -> Vec<StateSpace> {
        self.agents.iter().map(|a| a.nominal.clone()).collect()
    }
}
