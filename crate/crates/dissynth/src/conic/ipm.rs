//! Primal-dual interior-point method for
//!
//! ```text
//! min cᵀx + ½xᵀdiag(q)x   s.t.  S_k = C_k − A_k(x) ⪰ 0,  Ex = e
//! ```
//!
//! with `A_k(x) = Σ He(L V(x) R)`. HKM search direction, Mehrotra
//! predictor-corrector, infeasible start. The Schur complement is assembled
//! per pair of structured terms without ever forming the dense `F_i`.

use std::path::PathBuf;

use faer::prelude::Solve;
use nalgebra::Cholesky;

use super::{ConicError, Model, Solution, Status};
use crate::numlin::{self, Mat};

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub tol_gap: f64,
    pub tol_feas: f64,
    pub verbose: bool,
    /// When set, every solve writes its problem here in SDPA format.
    pub dump_dir: Option<PathBuf>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iter: 120, tol_gap: 1e-8, tol_feas: 1e-8, verbose: false, dump_dir: None }
    }
}

/// Row-major dense scratch matrix.
#[derive(Clone)]
struct Dm {
    c: usize,
    d: Vec<f64>,
}

impl Dm {
    fn zeros(r: usize, c: usize) -> Self {
        Self { c, d: vec![0.0; r * c] }
    }
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.c + j]
    }
    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.d[i * self.c + j] += v;
    }
}

pub(super) type Sparse = Vec<Vec<(usize, f64)>>;

pub(super) struct CTerm {
    p: usize,
    q: usize,
    /// column `a` of L as (row, value)
    pub(super) lcols: Sparse,
    /// row `b` of R as (col, value)
    pub(super) rrows: Sparse,
    pub(super) entries: Vec<(usize, usize, usize, f64)>,
}

pub(super) struct CBlock {
    pub(super) n: usize,
    pub(super) c: Mat,
    pub(super) terms: Vec<CTerm>,
}

pub(super) struct Compiled {
    pub(super) m: usize,
    pub(super) blocks: Vec<CBlock>,
    pub(super) c: Vec<f64>,
    pub(super) q: Vec<f64>,
    has_quad: bool,
    pub(super) e_rows: Vec<Vec<(usize, f64)>>,
    pub(super) e_rhs: Vec<f64>,
}

fn sparse_cols(m: &Mat) -> Sparse {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).filter(|&i| m[(i, j)] != 0.0).map(|i| (i, m[(i, j)])).collect())
        .collect()
}

fn sparse_rows(m: &Mat) -> Sparse {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).filter(|&j| m[(i, j)] != 0.0).map(|j| (j, m[(i, j)])).collect())
        .collect()
}

pub(super) fn compile(model: &Model) -> Compiled {
    let m = model.num_scalars();
    let mut blocks = Vec::new();
    for con in &model.constraints {
        let n = con.expr.dim();
        let c = -&con.expr.constant - Mat::identity(n, n) * con.margin;
        // normalize orientation, then merge terms sharing a variable and one side
        let mut raw: Vec<(usize, Mat, Mat)> = Vec::new();
        for t in &con.expr.terms {
            let (l, r) = if t.var.transposed {
                (t.right.transpose(), t.left.transpose())
            } else {
                (t.left.clone(), t.right.clone())
            };
            let id = t.var.id;
            if let Some(slot) = raw.iter_mut().find(|(i, _, rr)| *i == id && *rr == r) {
                slot.1 += &l;
            } else if let Some(slot) = raw.iter_mut().find(|(i, ll, _)| *i == id && *ll == l) {
                slot.2 += &r;
            } else {
                raw.push((id, l, r));
            }
        }
        let mut terms = Vec::new();
        for (id, l, r) in raw {
            let lcols = sparse_cols(&l);
            let rrows = sparse_rows(&r);
            let entries: Vec<_> = model
                .raw_entries(id)
                .iter()
                .filter(|e| !lcols[e.row].is_empty() && !rrows[e.col].is_empty() && e.coef != 0.0)
                .map(|e| (e.row, e.col, e.idx, e.coef))
                .collect();
            if entries.is_empty() {
                continue;
            }
            terms.push(CTerm { p: l.ncols(), q: r.nrows(), lcols, rrows, entries });
        }
        blocks.push(CBlock { n, c, terms });
    }
    let mut c = vec![0.0; m];
    for (&i, &v) in &model.c {
        c[i] += v;
    }
    let mut q = vec![0.0; m];
    for (&i, &v) in &model.quad {
        q[i] += v;
    }
    let cmax = c.iter().chain(q.iter()).fold(1.0f64, |a, v| a.max(v.abs()));
    for v in c.iter_mut().chain(q.iter_mut()) {
        *v /= cmax;
    }
    let has_quad = q.iter().any(|v| *v != 0.0);
    let e_rows = model.equalities.iter().map(|(r, _)| r.clone()).collect();
    let e_rhs = model.equalities.iter().map(|(_, b)| *b).collect();
    Compiled { m, blocks, c, q, has_quad, e_rows, e_rhs }
}

fn var_value(t: &CTerm, x: &[f64]) -> Dm {
    let mut v = Dm::zeros(t.p, t.q);
    for &(a, b, i, c) in &t.entries {
        v.add(a, b, c * x[i]);
    }
    v
}

/// `A_k(x)` as a dense symmetric matrix.
fn apply(b: &CBlock, x: &[f64]) -> Mat {
    let n = b.n;
    let mut out = Mat::zeros(n, n);
    for t in &b.terms {
        let v = var_value(t, x);
        // LV: n × q
        let mut lv = Mat::zeros(n, t.q);
        for a in 0..t.p {
            for &(r, lval) in &t.lcols[a] {
                for bb in 0..t.q {
                    let vv = v.at(a, bb);
                    if vv != 0.0 {
                        lv[(r, bb)] += lval * vv;
                    }
                }
            }
        }
        for bb in 0..t.q {
            for &(col, rval) in &t.rrows[bb] {
                let mut dst = out.column_mut(col);
                dst.axpy(rval, &lv.column(bb), 1.0);
            }
        }
    }
    let tr = out.transpose();
    out + tr
}

/// `out[idx] += ⟨F_idx, W⟩` for symmetric `W`.
fn adjoint(b: &CBlock, w: &Mat, out: &mut [f64]) {
    for t in &b.terms {
        let mut wr = Mat::zeros(b.n, t.q);
        for bb in 0..t.q {
            for &(col, rval) in &t.rrows[bb] {
                let mut dst = wr.column_mut(bb);
                dst.axpy(rval, &w.column(col), 1.0);
            }
        }
        for &(a, bb, i, c) in &t.entries {
            let mut s = 0.0;
            for &(r, lval) in &t.lcols[a] {
                s += lval * wr[(r, bb)];
            }
            out[i] += 2.0 * c * s;
        }
    }
}

/// Products of a dense n×n matrix with the sparse factors of a term.
struct Pre {
    /// X·L  (n × p), column-major in `Mat`
    xl: Mat,
    /// X·Rᵀ (n × q)
    xr: Mat,
}

fn pre(x: &Mat, t: &CTerm) -> Pre {
    let n = x.nrows();
    let mut xl = Mat::zeros(n, t.p);
    for a in 0..t.p {
        for &(r, v) in &t.lcols[a] {
            xl.column_mut(a).axpy(v, &x.column(r), 1.0);
        }
    }
    let mut xr = Mat::zeros(n, t.q);
    for b in 0..t.q {
        for &(c, v) in &t.rrows[b] {
            xr.column_mut(b).axpy(v, &x.column(c), 1.0);
        }
    }
    Pre { xl, xr }
}

/// `out[s, j] = Σ_{(r,v) ∈ sp[s]} v · dense[r, j]`.
fn sp_t_dense(sp: &Sparse, dense: &Mat) -> Dm {
    let cols = dense.ncols();
    let mut out = Dm::zeros(sp.len(), cols);
    for (s, list) in sp.iter().enumerate() {
        for &(r, v) in list {
            for j in 0..cols {
                out.d[s * cols + j] += v * dense[(r, j)];
            }
        }
    }
    out
}

fn schur_block(b: &CBlock, sinv: &Mat, z: &Mat, mm: &mut [f64], m: usize) {
    let sp: Vec<Pre> = b.terms.iter().map(|t| pre(sinv, t)).collect();
    let zp: Vec<Pre> = b.terms.iter().map(|t| pre(z, t)).collect();
    for (ti, t) in b.terms.iter().enumerate() {
        for (tj, u) in b.terms.iter().enumerate().skip(ti) {
            let a1 = sp_t_dense(&t.rrows, &sp[tj].xl); // q_t × p_u : R_t S⁻¹ L_u
            let b1 = sp_t_dense(&u.rrows, &zp[ti].xl); // q_u × p_t : R_u Z L_t
            let a2 = sp_t_dense(&t.rrows, &sp[tj].xr); // q_t × q_u
            let b2 = sp_t_dense(&u.lcols, &zp[ti].xl); // p_u × p_t
            let a3 = sp_t_dense(&t.lcols, &sp[tj].xl); // p_t × p_u
            let b3 = sp_t_dense(&u.rrows, &zp[ti].xr); // q_u × q_t
            let a4 = sp_t_dense(&t.lcols, &sp[tj].xr); // p_t × q_u
            let b4 = sp_t_dense(&u.lcols, &zp[ti].xr); // p_u × q_t
            let mirror = ti != tj;
            for &(a, bb, i, ce) in &t.entries {
                for &(c, d, j, cu) in &u.entries {
                    let val = a1.at(bb, c) * b1.at(d, a)
                        + a2.at(bb, d) * b2.at(c, a)
                        + a3.at(a, c) * b3.at(d, bb)
                        + a4.at(a, d) * b4.at(c, bb);
                    let w = ce * cu * val;
                    mm[i * m + j] += w;
                    if mirror {
                        mm[j * m + i] += w;
                    }
                }
            }
        }
    }
}

fn inner(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

/// Largest α with `X + αΔX ⪰ 0` (infinite if unbounded), `X = LLᵀ`.
fn max_step(chol: &Cholesky<f64, nalgebra::Dyn>, dx: &Mat) -> f64 {
    let n = dx.nrows();
    if n == 1 {
        let x = chol.l()[(0, 0)].powi(2);
        return if dx[(0, 0)] < 0.0 { -x / dx[(0, 0)] } else { f64::INFINITY };
    }
    let l = chol.l();
    let mut w = dx.clone();
    l.solve_lower_triangular_mut(&mut w);
    let mut wt = w.transpose();
    l.solve_lower_triangular_mut(&mut wt);
    let lmin = numlin::lambda_min(&wt);
    if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin }
}

struct Newton<'a> {
    prob: &'a Compiled,
    llt: faer::linalg::solvers::Llt<f64>,
    /// M⁻¹Eᵀ and the factor of E M⁻¹ Eᵀ
    me: Option<(faer::Mat<f64>, faer::linalg::solvers::PartialPivLu<f64>)>,
}

impl<'a> Newton<'a> {
    fn new(prob: &'a Compiled, mut mm: Vec<f64>) -> Result<Self, ConicError> {
        let m = prob.m;
        for i in 0..m {
            mm[i * m + i] += prob.q[i];
        }
        let maxd = (0..m).map(|i| mm[i * m + i].abs()).fold(0.0, f64::max).max(1.0);
        let mut reg = 1e-13 * maxd;
        let llt = loop {
            let f = faer::Mat::from_fn(m, m, |i, j| {
                let v = 0.5 * (mm[i * m + j] + mm[j * m + i]);
                if i == j { v + reg } else { v }
            });
            match f.llt(faer::Side::Lower) {
                Ok(l) => break l,
                Err(_) if reg < 1e-4 * maxd => reg *= 100.0,
                Err(_) => return Err(ConicError::NumericalFailure("Schur complement not positive definite".into())),
            }
        };
        let me = if prob.e_rows.is_empty() {
            None
        } else {
            let p = prob.e_rows.len();
            let mut et = faer::Mat::<f64>::zeros(m, p);
            for (k, row) in prob.e_rows.iter().enumerate() {
                for &(i, v) in row {
                    et[(i, k)] += v;
                }
            }
            let mie = llt.solve(&et);
            let mut s = faer::Mat::<f64>::zeros(p, p);
            for (k, row) in prob.e_rows.iter().enumerate() {
                for &(i, v) in row {
                    for l in 0..p {
                        s[(k, l)] += v * mie[(i, l)];
                    }
                }
            }
            Some((mie, s.partial_piv_lu()))
        };
        Ok(Self { prob, llt, me })
    }

    /// Solve `[M Eᵀ; E 0][dx; dy] = [r1; r2]`.
    fn solve(&self, r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.prob.m;
        let rhs = faer::Mat::from_fn(m, 1, |i, _| r1[i]);
        let mut dx = self.llt.solve(&rhs);
        let mut dy = Vec::new();
        if let Some((mie, lu)) = &self.me {
            let p = r2.len();
            let mut t = faer::Mat::<f64>::zeros(p, 1);
            for (k, row) in self.prob.e_rows.iter().enumerate() {
                let s: f64 = row.iter().map(|&(i, v)| v * dx[(i, 0)]).sum();
                t[(k, 0)] = s - r2[k];
            }
            let y = lu.solve(&t);
            for i in 0..m {
                let mut s = 0.0;
                for k in 0..p {
                    s += mie[(i, k)] * y[(k, 0)];
                }
                dx[(i, 0)] -= s;
            }
            dy = (0..p).map(|k| y[(k, 0)]).collect();
        }
        ((0..m).map(|i| dx[(i, 0)]).collect(), dy)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn accuracy(dinf: f64, opts: &SolverOptions) -> Status {
    if dinf <= opts.tol_feas.max(1e-6) {
        Status::Optimal
    } else {
        Status::Inaccurate
    }
}

pub(crate) fn solve(model: &Model, opts: &SolverOptions) -> Result<Solution, ConicError> {
    let prob = compile(model);
    let m = prob.m;
    let nb = prob.blocks.len();
    let ntot: usize = prob.blocks.iter().map(|b| b.n).sum::<usize>().max(1);
    let p = prob.e_rows.len();
    let mut x = model.x0.clone();
    let mut y = vec![0.0; p];

    let norm_c = norm(&prob.c);
    let norm_cc = prob.blocks.iter().map(|b| b.c.norm_squared()).sum::<f64>().sqrt();
    let norm_e = norm(&prob.e_rhs);

    let mut s: Vec<Mat> = Vec::with_capacity(nb);
    let mut z: Vec<Mat> = Vec::with_capacity(nb);
    for b in &prob.blocks {
        let r0 = &b.c - apply(b, &x);
        let lmin = numlin::lambda_min(&r0);
        let scale = (r0.norm() / (b.n as f64).sqrt()).max(1.0);
        let s0 = if lmin >= 1e-2 * scale { r0 } else { r0 + Mat::identity(b.n, b.n) * (0.1 * scale - lmin) };
        s.push(s0);
        z.push(Mat::identity(b.n, b.n));
    }

    let quad_obj = |x: &[f64]| -> f64 {
        prob.c.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
            + 0.5 * prob.q.iter().zip(x).map(|(q, v)| q * v * v).sum::<f64>()
    };

    let mut best: Option<(Vec<f64>, f64, f64, f64)> = None;
    let mut stall = 0;
    let mut flat = 0;
    let mut last_step = 1.0f64;
    for it in 0..opts.max_iter {
        let ax: Vec<Mat> = prob.blocks.iter().map(|b| apply(b, &x)).collect();
        let rp: Vec<Mat> = (0..nb).map(|k| &ax[k] + &s[k] - &prob.blocks[k].c).collect();
        let mut rd: Vec<f64> = (0..m).map(|i| prob.c[i] + prob.q[i] * x[i]).collect();
        for (k, b) in prob.blocks.iter().enumerate() {
            adjoint(b, &z[k], &mut rd);
        }
        for (k, row) in prob.e_rows.iter().enumerate() {
            for &(i, v) in row {
                rd[i] += v * y[k];
            }
        }
        let re: Vec<f64> = prob
            .e_rows
            .iter()
            .zip(&prob.e_rhs)
            .map(|(row, b)| row.iter().map(|&(i, v)| v * x[i]).sum::<f64>() - b)
            .collect();
        let gap: f64 = (0..nb).map(|k| inner(&s[k], &z[k])).sum();
        let mu = gap / ntot as f64;
        let pobj = quad_obj(&x);
        let pinf = rp.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / (1.0 + norm_cc);
        let dinf = norm(&rd) / (1.0 + norm_c);
        let einf = norm(&re) / (1.0 + norm_e);
        let relgap = gap / (1.0 + pobj.abs());
        if opts.verbose {
            eprintln!(
                "it {it:3} pobj {pobj:+.8e} gap {gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e} einf {einf:.2e} step {last_step:.3}"
            );
        }
        let feas = pinf.max(dinf).max(einf);
        if feas <= opts.tol_feas && relgap <= opts.tol_gap {
            return Ok(Solution { x, objective: pobj, iterations: it, status: Status::Optimal, gap: relgap });
        }
        if pinf <= 1e-9 && einf <= 1e-9 && dinf <= 1e-3 && relgap <= 1e-6 {
            let score = relgap.max(dinf);
            if best.as_ref().is_none_or(|b| score < b.1.max(b.2)) {
                best = Some((x.clone(), relgap, dinf, pobj));
                flat = 0;
            } else {
                flat += 1;
            }
            if flat >= 5 && relgap <= opts.tol_gap {
                let (bx, g, d, po) = best.take().unwrap_or_default();
                return Ok(Solution { x: bx, objective: po, iterations: it, status: accuracy(d, opts), gap: g });
            }
        }

        // primal infeasibility certificate: Z ⪰ 0, A*(Z) + Eᵀy = 0, ⟨C,Z⟩ + eᵀy < 0
        let trz: f64 = z.iter().map(|zk| zk.trace()).sum();
        if trz > 0.0 {
            let mut az = vec![0.0; m];
            for (k, b) in prob.blocks.iter().enumerate() {
                adjoint(b, &z[k], &mut az);
            }
            for (k, row) in prob.e_rows.iter().enumerate() {
                for &(i, v) in row {
                    az[i] += v * y[k];
                }
            }
            let cz: f64 = (0..nb).map(|k| inner(&prob.blocks[k].c, &z[k])).sum::<f64>()
                + prob.e_rhs.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
            let res = norm(&az) / trz;
            let czn = cz / trz;
            if czn < -1e-10 && res <= 1e-8 * czn.abs() && (it > 0 || m == 0) {
                return Err(ConicError::Infeasible);
            }
        }
        if trz > 1e12 * ntot as f64 {
            break;
        }
        // unboundedness: a feasible ray that decreases the objective
        let xn = norm(&x);
        if xn > 1e12 && !prob.has_quad {
            return Err(ConicError::Unbounded);
        }

        let mut chol_s = Vec::with_capacity(nb);
        let mut sinv = Vec::with_capacity(nb);
        for sk in &s {
            let ch = Cholesky::new(sk.clone())
                .ok_or_else(|| ConicError::NumericalFailure("slack lost definiteness".into()))?;
            sinv.push(ch.inverse());
            chol_s.push(ch);
        }
        let mut chol_z = Vec::with_capacity(nb);
        for zk in &z {
            chol_z.push(
                Cholesky::new(zk.clone())
                    .ok_or_else(|| ConicError::NumericalFailure("dual lost definiteness".into()))?,
            );
        }
        let mut mm = vec![0.0; m * m];
        for (k, b) in prob.blocks.iter().enumerate() {
            schur_block(b, &sinv[k], &z[k], &mut mm, m);
        }
        let newton = match Newton::new(&prob, mm) {
            Ok(nw) => nw,
            Err(e) => {
                if let Some((bx, g, d, po)) = best {
                    return Ok(Solution { x: bx, objective: po, iterations: it, status: accuracy(d, opts), gap: g });
                }
                return Err(e);
            }
        };

        let direction = |g: &[Mat]| -> (Vec<f64>, Vec<f64>, Vec<Mat>, Vec<Mat>) {
            let mut rhs: Vec<f64> = rd.iter().map(|v| -v).collect();
            let mut ag = vec![0.0; m];
            for (k, b) in prob.blocks.iter().enumerate() {
                adjoint(b, &numlin::symmetrize(&g[k]), &mut ag);
            }
            for i in 0..m {
                rhs[i] -= ag[i];
            }
            let r2: Vec<f64> = re.iter().map(|v| -v).collect();
            let (dx, dy) = newton.solve(&rhs, &r2);
            let mut ds = Vec::with_capacity(nb);
            let mut dz = Vec::with_capacity(nb);
            for (k, b) in prob.blocks.iter().enumerate() {
                let adx = apply(b, &dx);
                ds.push(-&rp[k] - &adx);
                dz.push(numlin::symmetrize(&(&g[k] + &sinv[k] * &adx * &z[k])));
            }
            (dx, dy, ds, dz)
        };
        let steps = |ds: &[Mat], dz: &[Mat]| -> (f64, f64) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..nb {
                ap = ap.min(max_step(&chol_s[k], &ds[k]));
                ad = ad.min(max_step(&chol_z[k], &dz[k]));
            }
            (ap, ad)
        };

        // predictor
        let g_aff: Vec<Mat> = (0..nb).map(|k| -&z[k] + &sinv[k] * &rp[k] * &z[k]).collect();
        let (_, _, ds_a, dz_a) = direction(&g_aff);
        let (ap_a, ad_a) = steps(&ds_a, &dz_a);
        let (ap_a, ad_a) = (ap_a.min(1.0), ad_a.min(1.0));
        let mu_aff: f64 = (0..nb)
            .map(|k| inner(&(&s[k] + &ds_a[k] * ap_a), &(&z[k] + &dz_a[k] * ad_a)))
            .sum::<f64>()
            / ntot as f64;
        let expo = (3.0 * ap_a.min(ad_a).powi(2)).max(1.0);
        let sigma = if mu > 0.0 { (mu_aff / mu).max(0.0).powf(expo).min(1.0) } else { 0.0 };

        // corrector
        let g: Vec<Mat> = (0..nb)
            .map(|k| {
                &sinv[k] * (sigma * mu) - &z[k] + &sinv[k] * &rp[k] * &z[k] - &sinv[k] * &ds_a[k] * &dz_a[k]
            })
            .collect();
        let (dx, dy, ds, dz) = direction(&g);
        let (ap_max, ad_max) = steps(&ds, &dz);
        let tau = 0.9 + 0.09 * last_step.min(1.0);
        let mut ap = (tau * ap_max).min(1.0);
        let mut ad = (tau * ad_max).min(1.0);
        if prob.has_quad {
            let a = ap.min(ad);
            ap = a;
            ad = a;
        }
        // guard against rounding at the boundary of the cone
        let mut tries = 0;
        let (s_new, z_new) = loop {
            let sn: Vec<Mat> = (0..nb).map(|k| numlin::symmetrize(&(&s[k] + &ds[k] * ap))).collect();
            let zn: Vec<Mat> = (0..nb).map(|k| numlin::symmetrize(&(&z[k] + &dz[k] * ad))).collect();
            let ok = sn.iter().chain(zn.iter()).all(|mk| Cholesky::new(mk.clone()).is_some());
            if ok {
                break (sn, zn);
            }
            tries += 1;
            if tries > 30 {
                return Err(ConicError::NumericalFailure("step length collapsed".into()));
            }
            ap *= 0.5;
            ad *= 0.5;
        };
        last_step = ap.min(ad);
        for i in 0..m {
            x[i] += ap * dx[i];
        }
        s = s_new;
        z = z_new;
        for k in 0..p {
            y[k] += ad * dy[k];
        }
        if last_step < 1e-8 {
            stall += 1;
            if stall > 5 {
                break;
            }
        } else {
            stall = 0;
        }
    }
    match best {
        Some((bx, g, d, po)) => Ok(Solution { x: bx, objective: po, iterations: opts.max_iter, status: accuracy(d, opts), gap: g }),
        None => Err(ConicError::NumericalFailure("interior-point method did not converge".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{AffineMat, LmiExpr};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn spd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        let a = rand_mat(rng, n, n);
        &a * a.transpose() + Mat::identity(n, n)
    }

    #[test]
    fn schur_matches_dense_trace_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut model = Model::new();
        let y = model.symmetric("Y", 3);
        let k = model.matrix("K", 2, 3, None);
        let nu = model.scalar("nu");
        let nui = model.scaled_identity(nu, 5);
        let mut e = LmiExpr::he(&AffineMat::product(&rand_mat(&mut rng, 5, 3), y, &rand_mat(&mut rng, 3, 5)));
        e.add_assign(&LmiExpr::he(&AffineMat::product(&rand_mat(&mut rng, 5, 2), k, &rand_mat(&mut rng, 3, 5))));
        e.add_assign(&LmiExpr::he(&AffineMat::product(&rand_mat(&mut rng, 5, 3), k.t(), &rand_mat(&mut rng, 2, 5))));
        e.add_assign(&LmiExpr::sym(&AffineMat::var(nui)).scale(-1.0));
        model.negdef("c", e, Some(0.0)).unwrap();
        let prob = compile(&model);
        let m = prob.m;
        let b = &prob.blocks[0];
        let sinv = spd(&mut rng, 5);
        let z = spd(&mut rng, 5);
        let mut mm = vec![0.0; m * m];
        schur_block(b, &sinv, &z, &mut mm, m);
        let basis: Vec<Mat> = (0..m)
            .map(|i| {
                let mut x = vec![0.0; m];
                x[i] = 1.0;
                apply(b, &x)
            })
            .collect();
        for i in 0..m {
            for j in 0..m {
                let want = (&basis[i] * &sinv * &basis[j] * &z).trace();
                assert!((mm[i * m + j] - want).abs() < 1e-10 * (1.0 + want.abs()), "({i},{j})");
            }
        }
        let w = numlin::symmetrize(&rand_mat(&mut rng, 5, 5));
        let mut adj = vec![0.0; m];
        adjoint(b, &w, &mut adj);
        for i in 0..m {
            assert!((adj[i] - basis[i].dot(&w)).abs() < 1e-12);
        }
    }
}
