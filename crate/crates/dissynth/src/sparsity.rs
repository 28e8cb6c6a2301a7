//! Block sparsity of the designable interconnection: penalties, the
//! cardinality proximal map, ADMM splitting and weighted ℓ1 descent.

use crate::conic::{AffineMat, LmiExpr, Mask};
use crate::ico::{self, FeasiblePoint, Freedom, IcoError, IcoOptions, Network, Residuals, Subproblem};
use crate::numlin::{BlockMat, Mat};
use crate::plant::GlobalInterconnection;

/// Default threshold below which a block counts as zero.
pub const ZERO_TOL: f64 = 1e-8;

/// Block mask over the `2N×2N` grid of `H̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    pub blocks: Mask,
}

impl SparsityPattern {
    /// Nonzero blocks of `g`: plant blocks where `H` is nonzero, designable
    /// blocks with norm above `tol`, never the controller-controller block.
    pub fn of(g: &GlobalInterconnection, tol: f64) -> Self {
        let n = g.agents();
        let blocks = Mask::from_fn(2 * n, 2 * n, |i, j| {
            if i < n && j < n {
                g.hbar.block_norm(i, j) > 0.0
            } else {
                g.designable[(i, j)] && g.hbar.block_norm(i, j) > tol
            }
        });
        Self { blocks }
    }

    /// Every designable block.
    pub fn dense(g: &GlobalInterconnection) -> Self {
        let mut p = Self::of(g, f64::INFINITY);
        for (b, d) in p.blocks.iter_mut().zip(g.designable.iter()) {
            *b |= *d;
        }
        p
    }

    /// Designable blocks linking agent `i` with controller `i` only.
    pub fn decentralized(g: &GlobalInterconnection) -> Self {
        let n = g.agents();
        let mut p = Self::of(g, f64::INFINITY);
        for i in 0..n {
            p.blocks[(i, n + i)] = true;
            p.blocks[(n + i, i)] = true;
        }
        p
    }

    /// Number of designable blocks in the pattern.
    pub fn nonzero_designable(&self, g: &GlobalInterconnection) -> usize {
        self.blocks.iter().zip(g.designable.iter()).filter(|(b, d)| **b && **d).count()
    }

    /// Entry mask of the free designable entries.
    pub fn entry_mask(&self, g: &GlobalInterconnection) -> Mask {
        g.entry_mask(&self.blocks)
    }

    /// Zero every designable block outside the pattern.
    pub fn project(&self, g: &GlobalInterconnection) -> Result<GlobalInterconnection, crate::plant::PlantError> {
        let mut h = g.hbar.clone();
        for i in 0..h.block_rows() {
            for j in 0..h.block_cols() {
                if g.designable[(i, j)] && !self.blocks[(i, j)] {
                    let (r, c) = (h.rows.sizes[i], h.cols.sizes[j]);
                    h.set_block(i, j, &Mat::zeros(r, c));
                }
            }
        }
        g.with_hbar(&h.data)
    }
}

/// Reweighting factors `min{‖H̄_ij‖⁻¹, ε_l⁻¹}` on designable blocks, zero elsewhere.
pub fn l1_weights(g: &GlobalInterconnection, eps_l: f64) -> Mat {
    let k = 2 * g.agents();
    Mat::from_fn(k, k, |i, j| {
        if !g.designable[(i, j)] {
            return 0.0;
        }
        let nrm = g.hbar.block_norm(i, j);
        if nrm > 0.0 {
            (1.0 / nrm).min(1.0 / eps_l)
        } else {
            1.0 / eps_l
        }
    })
}

/// `Σ w_ij ‖H̄_ij‖_F` over designable blocks.
pub fn weighted_l1_with(g: &GlobalInterconnection, w: &Mat) -> f64 {
    let k = 2 * g.agents();
    let mut s = 0.0;
    for i in 0..k {
        for j in 0..k {
            if g.designable[(i, j)] {
                s += w[(i, j)] * g.hbar.block_norm(i, j);
            }
        }
    }
    s
}

/// Weighted ℓ1 penalty with weights taken at `g` itself.
pub fn weighted_l1(g: &GlobalInterconnection, eps_l: f64) -> f64 {
    weighted_l1_with(g, &l1_weights(g, eps_l))
}

/// Designable blocks with norm above `tol`.
pub fn cardinality(g: &GlobalInterconnection, tol: f64) -> usize {
    SparsityPattern::of(g, tol).nonzero_designable(g)
}

/// Proximal map of `γ·card` at parameter `ρ`: each designable block is kept
/// when its norm exceeds `√(2γ/ρ)` and zeroed otherwise.
pub fn shrink_blocks(v: &BlockMat, designable: &Mask, gamma: f64, rho: f64) -> BlockMat {
    let thr = (2.0 * gamma / rho).sqrt();
    let mut out = v.clone();
    for i in 0..v.block_rows() {
        for j in 0..v.block_cols() {
            if designable[(i, j)] && v.block_norm(i, j) <= thr {
                out.set_block(i, j, &Mat::zeros(v.rows.sizes[i], v.cols.sizes[j]));
            }
        }
    }
    out
}

/// Splitting variables of the cardinality ADMM.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub z: BlockMat,
    pub lambda: BlockMat,
    pub rho: f64,
    pub r_p: f64,
    pub r_d: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmOptions {
    pub gamma: f64,
    pub rho: f64,
    pub eps_p: f64,
    pub eps_d: f64,
    pub max_iters: usize,
    pub ico: IcoOptions,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self { gamma: 0.0, rho: 1000.0, eps_p: 1e-3, eps_d: 1e-3, max_iters: 500, ico: IcoOptions::default() }
    }
}

/// One row of a sparsity-stage history.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityRow {
    pub iteration: usize,
    pub nu: f64,
    pub penalty: f64,
    pub r_p: f64,
    pub r_d: f64,
    pub nonzero: usize,
}

#[derive(Debug, Clone)]
pub struct SparsityOutcome {
    pub point: FeasiblePoint,
    pub residuals: Residuals,
    pub pattern: SparsityPattern,
    pub iterations: usize,
    pub converged: bool,
    /// Reason the loop ended early, if it did.
    pub flag: Option<String>,
    pub history: Vec<SparsityRow>,
    pub admm: Option<AdmmState>,
}

fn designable_freedom(g: &GlobalInterconnection) -> Freedom {
    Freedom { controllers: true, hbar: Some(g.entry_mask(&g.designable)) }
}

fn fro_diff(a: &BlockMat, b: &BlockMat) -> f64 {
    (&a.data - &b.data).norm()
}

/// Cardinality-penalized ADMM. Each `H̄` update is one overbounded step
/// from the latest verified point with the proximal term added to `ν`.
pub fn admm_run(net: &Network, base: &FeasiblePoint, opts: &AdmmOptions) -> Result<SparsityOutcome, IcoError> {
    let mut cur = base.clone();
    let mut res = ico::verify(net, &cur)?;
    let free = designable_freedom(&cur.hbar);
    let designable = cur.hbar.designable.clone();
    let mut st = AdmmState {
        z: cur.hbar.hbar.clone(),
        lambda: BlockMat::zeros(cur.hbar.hbar.rows.clone(), cur.hbar.hbar.cols.clone()),
        rho: opts.rho,
        r_p: f64::INFINITY,
        r_d: f64::INFINITY,
    };
    let mut history = vec![SparsityRow {
        iteration: 0,
        nu: cur.nu,
        penalty: cardinality(&cur.hbar, ZERO_TOL) as f64,
        r_p: f64::NAN,
        r_d: f64::NAN,
        nonzero: cardinality(&cur.hbar, ZERO_TOL),
    }];
    let mut converged = false;
    let mut flag = None;
    let mut iterations = 0;
    for r in 1..=opts.max_iters {
        let target = &st.z.data - &st.lambda.data - &cur.hbar.hbar.data;
        let rho = opts.rho;
        let step = ico::ico_step(net, &cur, &res, &free, &opts.ico, &mut |sp: &mut Subproblem| {
            if let Some(h) = sp.vars.h {
                sp.model.minimize_quadratic(h, rho, &target);
            }
        });
        let (cand, cres, _) = match step {
            Ok(v) => v,
            Err(e) => {
                log::warn!("admm {r}: update discarded: {e}");
                flag = Some(e.to_string());
                break;
            }
        };
        (cur, res) = ico::recenter(net, &cand, &opts.ico).unwrap_or((cand, cres));
        iterations = r;
        let h = &cur.hbar.hbar;
        let mut v = h.clone();
        v.data += &st.lambda.data;
        let z = shrink_blocks(&v, &designable, opts.gamma, opts.rho);
        st.lambda.data += &h.data - &z.data;
        let zn = z.data.norm().max(f64::MIN_POSITIVE);
        st.r_p = fro_diff(h, &z) / zn;
        st.r_d = fro_diff(&z, &st.z) / zn;
        st.z = z;
        let nz = (0..designable.nrows())
            .flat_map(|i| (0..designable.ncols()).map(move |j| (i, j)))
            .filter(|&(i, j)| designable[(i, j)] && st.z.block_norm(i, j) > 0.0)
            .count();
        history.push(SparsityRow { iteration: r, nu: cur.nu, penalty: nz as f64, r_p: st.r_p, r_d: st.r_d, nonzero: nz });
        log::info!("admm {r}: ν = {:.6} r_p = {:.2e} r_d = {:.2e} blocks = {nz}", cur.nu, st.r_p, st.r_d);
        if st.r_p <= opts.eps_p && st.r_d <= opts.eps_d {
            converged = true;
            break;
        }
    }
    if !converged && flag.is_none() {
        flag = Some(format!("no convergence in {} iterations", opts.max_iters));
    }
    let n = cur.hbar.agents();
    let mut pattern = SparsityPattern::of(&cur.hbar, f64::INFINITY);
    for i in 0..2 * n {
        for j in 0..2 * n {
            if designable[(i, j)] && st.z.block_norm(i, j) > 0.0 {
                pattern.blocks[(i, j)] = true;
            }
        }
    }
    Ok(SparsityOutcome { point: cur, residuals: res, pattern, iterations, converged, flag, history, admm: Some(st) })
}

#[derive(Debug, Clone)]
pub struct L1Options {
    pub gamma: f64,
    pub eps_l: f64,
    /// Refresh the weights at every step instead of keeping those of the base.
    pub reweight: bool,
    pub pattern_tol: f64,
    pub ico: IcoOptions,
}

impl Default for L1Options {
    fn default() -> Self {
        Self { gamma: 0.0, eps_l: 1e-3, reweight: false, pattern_tol: ZERO_TOL, ico: IcoOptions::default() }
    }
}

/// Epigraph variables `t_ij ≥ ‖(H̄⁰ + δH̄)_ij‖_F` with objective `γ·Σ w_ij t_ij`.
pub fn add_l1_objective(sp: &mut Subproblem, w: &Mat, gamma: f64) {
    let Some(h) = sp.vars.h else { return };
    let g = sp.base.hbar.clone();
    let (rt, ct) = (g.hbar.data.nrows(), g.hbar.data.ncols());
    let k = 2 * g.agents();
    for i in 0..k {
        for j in 0..k {
            if !g.designable[(i, j)] || w[(i, j)] == 0.0 {
                continue;
            }
            let (r0, c0) = (g.hbar.rows.offset(i), g.hbar.cols.offset(j));
            let (r, c) = (g.hbar.rows.sizes[i], g.hbar.cols.sizes[j]);
            let dim = 1 + r * c;
            let mut col = AffineMat::zeros(dim, dim);
            for q in 0..c {
                let mut left = Mat::zeros(dim, rt);
                left.view_mut((1 + q * r, r0), (r, r)).fill_with_identity();
                let mut right = Mat::zeros(ct, dim);
                right[(c0 + q, 0)] = 1.0;
                col = col.add(&AffineMat::product(&left, h, &right)).add_const(&(&left * &g.hbar.data * &right));
            }
            let t = sp.model.scalar(&format!("t[{i},{j}]"));
            let ti = sp.model.scaled_identity(t, dim);
            let expr = LmiExpr::he(&col).add(&LmiExpr::sym(&AffineMat::var(ti)));
            sp.model.posdef(&format!("l1[{i},{j}]"), expr, Some(0.0)).expect("epigraph shapes");
            sp.model.minimize_scalar(t, gamma * w[(i, j)]);
        }
    }
}

/// Weighted ℓ1 descent on `ν + γ·g₁`: overbounded steps from the latest
/// verified point until the relative decrease drops to `ε`.
pub fn l1_run(net: &Network, base: &FeasiblePoint, opts: &L1Options) -> Result<SparsityOutcome, IcoError> {
    let mut cur = base.clone();
    let mut res = ico::verify(net, &cur)?;
    let free = designable_freedom(&cur.hbar);
    let mut w = l1_weights(&cur.hbar, opts.eps_l);
    let cost = |p: &FeasiblePoint, w: &Mat| p.nu + opts.gamma * weighted_l1_with(&p.hbar, w);
    let mut history = vec![SparsityRow {
        iteration: 0,
        nu: cur.nu,
        penalty: weighted_l1_with(&cur.hbar, &w),
        r_p: f64::NAN,
        r_d: f64::NAN,
        nonzero: cardinality(&cur.hbar, opts.pattern_tol),
    }];
    let mut converged = false;
    let mut flag = None;
    let mut iterations = 0;
    for it in 1..=opts.ico.max_iters {
        let gamma = opts.gamma;
        let wk = w.clone();
        let step = ico::ico_step(net, &cur, &res, &free, &opts.ico, &mut |sp: &mut Subproblem| add_l1_objective(sp, &wk, gamma));
        let (mut cand, mut cres, _) = match step {
            Ok(v) => v,
            Err(e) => {
                log::warn!("l1 step {it} discarded: {e}");
                flag = Some(e.to_string());
                break;
            }
        };
        if let Some((q, r)) = ico::recenter(net, &cand, &opts.ico) {
            (cand, cres) = (q, r);
        }
        let (j0, j1) = (cost(&cur, &w), cost(&cand, &w));
        if j1 > j0 + 1e-9 {
            flag = Some(format!("cost rose from {j0} to {j1}"));
            break;
        }
        cur = cand;
        res = cres;
        iterations = it;
        history.push(SparsityRow {
            iteration: it,
            nu: cur.nu,
            penalty: weighted_l1_with(&cur.hbar, &w),
            r_p: f64::NAN,
            r_d: f64::NAN,
            nonzero: cardinality(&cur.hbar, opts.pattern_tol),
        });
        log::info!("l1 {it}: ν = {:.6} J = {j1:.6} blocks = {}", cur.nu, cardinality(&cur.hbar, opts.pattern_tol));
        if opts.reweight {
            w = l1_weights(&cur.hbar, opts.eps_l);
        }
        if (j0 - j1) / j1.abs().max(f64::MIN_POSITIVE) <= opts.ico.eps {
            converged = true;
            break;
        }
    }
    let pattern = SparsityPattern::of(&cur.hbar, opts.pattern_tol);
    Ok(SparsityOutcome { point: cur, residuals: res, pattern, iterations, converged, flag, history, admm: None })
}

/// Header of the sweep CSV.
pub const SWEEP_HEADER: &str = "# dissynth-sweep v1";

#[cfg(test)]
mod tests;
