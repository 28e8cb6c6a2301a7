//! LMI modeling layer.
//!
//! A [`Model`] owns scalar decision variables grouped into matrix-shaped
//! [`VarRef`]s. Constraints are symmetric affine expressions
//! `C + Σ He(L·V·R)` required to be negative definite with a margin; the
//! objective is linear plus an optional separable quadratic.

mod ipm;
mod sdpa;

use std::collections::BTreeMap;
use thiserror::Error;

use crate::numlin::{self, Mat};

pub use ipm::SolverOptions;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    /// Primal feasible with a closed gap but a dual residual above tolerance.
    Inaccurate,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Handle to a matrix-shaped group of scalar variables. A transposed handle
/// refers to the same scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarRef {
    id: usize,
    rows: usize,
    cols: usize,
    transposed: bool,
}

impl VarRef {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn t(self) -> VarRef {
        VarRef { id: self.id, rows: self.cols, cols: self.rows, transposed: !self.transposed }
    }
}

/// One entry of a variable matrix: position `(row, col)` holds `coef·x[idx]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub idx: usize,
    pub coef: f64,
}

#[derive(Debug, Clone)]
struct VarInfo {
    name: String,
    symmetric: bool,
    entries: Vec<Entry>,
}

/// `left · V · right` for one variable matrix `V`.
#[derive(Debug, Clone)]
pub struct Term {
    pub var: VarRef,
    pub left: Mat,
    pub right: Mat,
}

/// Non-symmetric affine matrix `constant + Σ left·V·right`.
#[derive(Debug, Clone)]
pub struct AffineMat {
    pub constant: Mat,
    pub terms: Vec<Term>,
}

impl AffineMat {
    pub fn constant(m: Mat) -> Self {
        Self { constant: m, terms: Vec::new() }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(Mat::zeros(rows, cols))
    }

    pub fn var(v: VarRef) -> Self {
        Self {
            constant: Mat::zeros(v.rows, v.cols),
            terms: vec![Term { var: v, left: numlin::eye(v.rows), right: numlin::eye(v.cols) }],
        }
    }

    /// `left · V · right` with no constant part.
    pub fn product(left: &Mat, v: VarRef, right: &Mat) -> Self {
        assert_eq!(left.ncols(), v.rows, "left factor");
        assert_eq!(right.nrows(), v.cols, "right factor");
        Self {
            constant: Mat::zeros(left.nrows(), right.ncols()),
            terms: vec![Term { var: v, left: left.clone(), right: right.clone() }],
        }
    }

    pub fn rows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn cols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn lmul(&self, t: &Mat) -> Self {
        assert_eq!(t.ncols(), self.rows(), "lmul");
        Self {
            constant: t * &self.constant,
            terms: self
                .terms
                .iter()
                .map(|tm| Term { var: tm.var, left: t * &tm.left, right: tm.right.clone() })
                .collect(),
        }
    }

    pub fn rmul(&self, t: &Mat) -> Self {
        assert_eq!(t.nrows(), self.cols(), "rmul");
        Self {
            constant: &self.constant * t,
            terms: self
                .terms
                .iter()
                .map(|tm| Term { var: tm.var, left: tm.left.clone(), right: &tm.right * t })
                .collect(),
        }
    }

    pub fn add(&self, o: &AffineMat) -> Self {
        assert_eq!(self.constant.shape(), o.constant.shape(), "add");
        let mut terms = self.terms.clone();
        terms.extend(o.terms.iter().cloned());
        Self { constant: &self.constant + &o.constant, terms }
    }

    pub fn add_const(&self, m: &Mat) -> Self {
        Self { constant: &self.constant + m, terms: self.terms.clone() }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            constant: &self.constant * s,
            terms: self
                .terms
                .iter()
                .map(|tm| Term { var: tm.var, left: &tm.left * s, right: tm.right.clone() })
                .collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            constant: self.constant.transpose(),
            terms: self
                .terms
                .iter()
                .map(|tm| Term { var: tm.var.t(), left: tm.right.transpose(), right: tm.left.transpose() })
                .collect(),
        }
    }

    /// Only the variable part.
    pub fn linear_part(&self) -> Self {
        Self { constant: Mat::zeros(self.rows(), self.cols()), terms: self.terms.clone() }
    }
}

/// Symmetric affine expression `constant + Σ He(left·V·right)`.
#[derive(Debug, Clone)]
pub struct LmiExpr {
    pub constant: Mat,
    pub terms: Vec<Term>,
}

impl LmiExpr {
    pub fn zeros(n: usize) -> Self {
        Self { constant: Mat::zeros(n, n), terms: Vec::new() }
    }

    pub fn affine(c: &Mat) -> Self {
        assert!(c.is_square(), "constant must be square");
        Self { constant: numlin::symmetrize(c), terms: Vec::new() }
    }

    /// `He(A) = A + Aᵀ`.
    pub fn he(a: &AffineMat) -> Self {
        assert_eq!(a.rows(), a.cols(), "he of non-square");
        Self { constant: numlin::he(&a.constant), terms: a.terms.clone() }
    }

    /// An affine matrix that is symmetric for every assignment, taken as is.
    pub fn sym(a: &AffineMat) -> Self {
        Self::he(&a.scale(0.5))
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn add(&self, o: &LmiExpr) -> Self {
        assert_eq!(self.dim(), o.dim(), "add");
        let mut terms = self.terms.clone();
        terms.extend(o.terms.iter().cloned());
        Self { constant: &self.constant + &o.constant, terms }
    }

    pub fn add_assign(&mut self, o: &LmiExpr) {
        assert_eq!(self.dim(), o.dim(), "add");
        self.constant += &o.constant;
        self.terms.extend(o.terms.iter().cloned());
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            constant: &self.constant * s,
            terms: self
                .terms
                .iter()
                .map(|tm| Term { var: tm.var, left: &tm.left * s, right: tm.right.clone() })
                .collect(),
        }
    }

    /// `T · expr · Tᵀ`.
    pub fn congruence(&self, t: &Mat) -> Self {
        assert_eq!(t.ncols(), self.dim(), "congruence");
        let tt = t.transpose();
        Self {
            constant: t * &self.constant * &tt,
            terms: self
                .terms
                .iter()
                .map(|tm| Term { var: tm.var, left: t * &tm.left, right: &tm.right * &tt })
                .collect(),
        }
    }

    /// Place this expression as the diagonal block at `offset` of a `dim`-square zero matrix.
    pub fn embed(&self, offset: usize, dim: usize) -> Self {
        let mut e = Mat::zeros(dim, self.dim());
        e.view_mut((offset, 0), (self.dim(), self.dim())).fill_with_identity();
        self.congruence(&e)
    }

    /// Symmetric block matrix from its lower triangle. `blocks[i][j]` for
    /// `j ≤ i`; diagonal blocks must be symmetric-valued; `None` is zero.
    pub fn stack(sizes: &[usize], blocks: &[Vec<Option<AffineMat>>]) -> Self {
        let total: usize = sizes.iter().sum();
        let offs: Vec<usize> = sizes.iter().scan(0, |acc, s| {
            let o = *acc;
            *acc += s;
            Some(o)
        }).collect();
        let sel = |i: usize| {
            let mut e = Mat::zeros(total, sizes[i]);
            e.view_mut((offs[i], 0), (sizes[i], sizes[i])).fill_with_identity();
            e
        };
        let mut out = LmiExpr::zeros(total);
        for (i, row) in blocks.iter().enumerate() {
            for (j, b) in row.iter().enumerate().take(i + 1) {
                let Some(b) = b else { continue };
                assert_eq!((b.rows(), b.cols()), (sizes[i], sizes[j]), "block ({i},{j})");
                let placed = b.lmul(&sel(i)).rmul(&sel(j).transpose());
                if i == j {
                    out.add_assign(&LmiExpr::sym(&placed));
                } else {
                    out.add_assign(&LmiExpr::he(&placed));
                }
            }
        }
        out
    }
}

/// Boolean mask; `true` marks a free entry.
pub type Mask = nalgebra::DMatrix<bool>;

#[derive(Debug, Clone)]
pub(crate) struct Constraint {
    pub expr: LmiExpr,
    pub margin: f64,
    pub name: String,
}

/// Returned assignment of a successful solve.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub status: Status,
    pub gap: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Model {
    n: usize,
    vars: Vec<VarInfo>,
    pub(crate) constraints: Vec<Constraint>,
    pub(crate) equalities: Vec<(Vec<(usize, f64)>, f64)>,
    pub(crate) c: BTreeMap<usize, f64>,
    pub(crate) quad: BTreeMap<usize, f64>,
    pub(crate) obj_const: f64,
    pub(crate) x0: Vec<f64>,
}

/// Default strictness margin for a constraint with constant part `c`.
pub fn default_margin(c: &Mat) -> f64 {
    1e-7 * (1.0 + c.norm())
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_scalars(&self) -> usize {
        self.n
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn push_var(&mut self, name: &str, rows: usize, cols: usize, symmetric: bool, entries: Vec<Entry>) -> VarRef {
        let id = self.vars.len();
        self.vars.push(VarInfo { name: name.to_string(), symmetric, entries });
        VarRef { id, rows, cols, transposed: false }
    }

    fn fresh(&mut self) -> usize {
        self.n += 1;
        self.x0.push(0.0);
        self.n - 1
    }

    pub fn scalar(&mut self, name: &str) -> VarRef {
        let idx = self.fresh();
        self.push_var(name, 1, 1, true, vec![Entry { row: 0, col: 0, idx, coef: 1.0 }])
    }

    /// Full matrix variable; entries where `mask` is false are fixed at zero.
    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize, mask: Option<&Mask>) -> VarRef {
        if let Some(m) = mask {
            assert_eq!(m.shape(), (rows, cols), "mask shape");
        }
        let mut entries = Vec::new();
        for j in 0..cols {
            for i in 0..rows {
                if mask.is_none_or(|m| m[(i, j)]) {
                    let idx = self.fresh();
                    entries.push(Entry { row: i, col: j, idx, coef: 1.0 });
                }
            }
        }
        self.push_var(name, rows, cols, false, entries)
    }

    /// Symmetric matrix variable with `n(n+1)/2` scalars.
    pub fn symmetric(&mut self, name: &str, n: usize) -> VarRef {
        self.symmetric_masked(name, n, None)
    }

    pub fn symmetric_masked(&mut self, name: &str, n: usize, mask: Option<&Mask>) -> VarRef {
        let mut entries = Vec::new();
        for j in 0..n {
            for i in j..n {
                if mask.is_some_and(|m| !(m[(i, j)] || m[(j, i)])) {
                    continue;
                }
                let idx = self.fresh();
                entries.push(Entry { row: i, col: j, idx, coef: 1.0 });
                if i != j {
                    entries.push(Entry { row: j, col: i, idx, coef: 1.0 });
                }
            }
        }
        self.push_var(name, n, n, true, entries)
    }

    /// `k×k` view `v·I` of a scalar variable.
    pub fn scaled_identity(&mut self, v: VarRef, k: usize) -> VarRef {
        assert_eq!(v.shape(), (1, 1), "scaled_identity needs a scalar");
        let e = self.vars[v.id].entries[0];
        let entries = (0..k).map(|i| Entry { row: i, col: i, idx: e.idx, coef: e.coef }).collect();
        let name = format!("{}*I", self.vars[v.id].name);
        self.push_var(&name, k, k, true, entries)
    }

    /// Sub-matrix view sharing scalars with `v`.
    pub fn view(&mut self, v: VarRef, r0: usize, c0: usize, rows: usize, cols: usize) -> VarRef {
        let entries = self
            .entries(v)
            .into_iter()
            .filter(|e| (r0..r0 + rows).contains(&e.row) && (c0..c0 + cols).contains(&e.col))
            .map(|e| Entry { row: e.row - r0, col: e.col - c0, ..e })
            .collect();
        let sym = r0 == c0 && rows == cols && self.vars[v.id].symmetric;
        let name = format!("{}[{r0}+{rows},{c0}+{cols}]", self.vars[v.id].name);
        self.push_var(&name, rows, cols, sym, entries)
    }

    /// A `rows×cols` variable assembled from placed parts (shared scalars).
    pub fn compose(&mut self, name: &str, rows: usize, cols: usize, parts: &[(VarRef, usize, usize)]) -> VarRef {
        let mut entries = Vec::new();
        for &(v, r0, c0) in parts {
            assert!(r0 + v.rows <= rows && c0 + v.cols <= cols, "part out of range");
            for e in self.entries(v) {
                entries.push(Entry { row: e.row + r0, col: e.col + c0, ..e });
            }
        }
        self.push_var(name, rows, cols, false, entries)
    }

    /// Entries of `v` in its own (possibly transposed) orientation.
    pub fn entries(&self, v: VarRef) -> Vec<Entry> {
        let info = &self.vars[v.id];
        if v.transposed {
            info.entries.iter().map(|e| Entry { row: e.col, col: e.row, ..*e }).collect()
        } else {
            info.entries.clone()
        }
    }

    pub(crate) fn raw_entries(&self, id: usize) -> &[Entry] {
        &self.vars[id].entries
    }

    pub fn var_name(&self, v: VarRef) -> &str {
        &self.vars[v.id].name
    }

    pub fn is_symmetric_var(&self, v: VarRef) -> bool {
        self.vars[v.id].symmetric
    }

    /// Scalar indices used by `v`, deduplicated.
    pub fn indices(&self, v: VarRef) -> Vec<usize> {
        let mut ix: Vec<usize> = self.vars[v.id].entries.iter().map(|e| e.idx).collect();
        ix.sort_unstable();
        ix.dedup();
        ix
    }

    /// Starting value for the solver (default zero).
    pub fn set_initial(&mut self, v: VarRef, value: &Mat) {
        for e in self.entries(v) {
            self.x0[e.idx] = value[(e.row, e.col)] / e.coef;
        }
    }

    pub fn value(&self, v: VarRef, x: &[f64]) -> Mat {
        let mut m = Mat::zeros(v.rows, v.cols);
        for e in self.entries(v) {
            m[(e.row, e.col)] += e.coef * x[e.idx];
        }
        m
    }

    pub fn eval_affine(&self, a: &AffineMat, x: &[f64]) -> Mat {
        let mut out = a.constant.clone();
        for t in &a.terms {
            out += &t.left * self.value(t.var, x) * &t.right;
        }
        out
    }

    pub fn eval(&self, e: &LmiExpr, x: &[f64]) -> Mat {
        let mut out = e.constant.clone();
        for t in &e.terms {
            out += numlin::he(&(&t.left * self.value(t.var, x) * &t.right));
        }
        out
    }

    fn check_expr(&self, e: &LmiExpr) -> Result<(), ConicError> {
        let n = e.dim();
        if !e.constant.is_square() {
            return Err(ConicError::Dimension("constant not square".into()));
        }
        for t in &e.terms {
            if t.var.id >= self.vars.len() {
                return Err(ConicError::Dimension("undeclared variable".into()));
            }
            if t.left.shape() != (n, t.var.rows) || t.right.shape() != (t.var.cols, n) {
                return Err(ConicError::Dimension(format!(
                    "term on {}: left {:?} right {:?} var {:?} dim {n}",
                    self.vars[t.var.id].name,
                    t.left.shape(),
                    t.right.shape(),
                    t.var.shape()
                )));
            }
        }
        Ok(())
    }

    /// Require `expr ⪯ −margin·I` (default margin when `None`).
    pub fn negdef(&mut self, name: &str, expr: LmiExpr, margin: Option<f64>) -> Result<(), ConicError> {
        self.check_expr(&expr)?;
        let margin = margin.unwrap_or_else(|| default_margin(&expr.constant));
        self.constraints.push(Constraint { expr, margin, name: name.to_string() });
        Ok(())
    }

    /// Require `expr ⪰ margin·I`.
    pub fn posdef(&mut self, name: &str, expr: LmiExpr, margin: Option<f64>) -> Result<(), ConicError> {
        self.negdef(name, expr.scale(-1.0), margin)
    }

    /// `Σ coef·x[idx] = rhs`.
    pub fn equality(&mut self, row: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push((row, rhs));
    }

    /// Entrywise `V = value`.
    pub fn fix(&mut self, v: VarRef, value: &Mat) {
        let mut seen = std::collections::BTreeSet::new();
        for e in self.entries(v) {
            if seen.insert(e.idx) {
                self.equalities.push((vec![(e.idx, e.coef)], value[(e.row, e.col)]));
            }
        }
    }

    /// Add `⟨W, V⟩` to the objective.
    pub fn minimize_linear(&mut self, v: VarRef, w: &Mat) {
        for e in self.entries(v) {
            *self.c.entry(e.idx).or_insert(0.0) += w[(e.row, e.col)] * e.coef;
        }
    }

    /// Add `coef·v` for a scalar variable.
    pub fn minimize_scalar(&mut self, v: VarRef, coef: f64) {
        self.minimize_linear(v, &Mat::from_element(1, 1, coef));
    }

    /// Add `(weight/2)‖V − target‖_F²` to the objective.
    pub fn minimize_quadratic(&mut self, v: VarRef, weight: f64, target: &Mat) {
        let mut covered = Mask::from_element(v.rows, v.cols, false);
        for e in self.entries(v) {
            *self.quad.entry(e.idx).or_insert(0.0) += weight * e.coef * e.coef;
            *self.c.entry(e.idx).or_insert(0.0) -= weight * e.coef * target[(e.row, e.col)];
            self.obj_const += 0.5 * weight * target[(e.row, e.col)].powi(2);
            covered[(e.row, e.col)] = true;
        }
        for j in 0..v.cols {
            for i in 0..v.rows {
                if !covered[(i, j)] {
                    self.obj_const += 0.5 * weight * target[(i, j)].powi(2);
                }
            }
        }
    }

    pub fn add_objective_constant(&mut self, c: f64) {
        self.obj_const += c;
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let mut v = self.obj_const;
        for (&i, &c) in &self.c {
            v += c * x[i];
        }
        for (&i, &q) in &self.quad {
            v += 0.5 * q * x[i] * x[i];
        }
        v
    }

    /// Largest value of `λ_max(expr) + margin` over all constraints; negative
    /// means every constraint holds at its margin.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| numlin::lambda_max(&self.eval(&c.expr, x)) + c.margin)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Check every constraint at `fraction` of its margin.
    pub fn verify(&self, x: &[f64], fraction: f64) -> Result<(), String> {
        for c in &self.constraints {
            let m = self.eval(&c.expr, x);
            if !numlin::is_negdef(&m, c.margin * fraction) {
                return Err(format!("{}: λ_max {:.3e} margin {:.3e}", c.name, numlin::lambda_max(&m), c.margin));
            }
        }
        for (row, rhs) in &self.equalities {
            let lhs: f64 = row.iter().map(|(i, c)| c * x[*i]).sum();
            if (lhs - rhs).abs() > 1e-6 * (1.0 + rhs.abs()) {
                return Err(format!("equality residual {:.3e}", lhs - rhs));
            }
        }
        Ok(())
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<Solution, ConicError> {
        if let Some(dir) = &opts.dump_dir {
            let path = sdpa::next_dump_path(dir);
            sdpa::write(self, &path).map_err(|e| ConicError::NumericalFailure(format!("dump: {e}")))?;
        }
        let mut sol = match ipm::solve(self, opts) {
            Err(ConicError::NumericalFailure(msg)) => return Err(self.classify_failure(opts, msg)),
            other => other?,
        };
        if let Err(msg) = self.verify(&sol.x, 0.5) {
            return Err(ConicError::NumericalFailure(format!("verification failed: {msg}")));
        }
        sol.objective = self.objective_value(&sol.x);
        Ok(sol)
    }

    /// Phase I after a failed solve: minimize `t` with every constraint
    /// relaxed to `expr + margin·I ⪯ t·I`. A nonnegative optimum means no
    /// point satisfies the constraints at their margins.
    fn classify_failure(&self, opts: &SolverOptions, msg: String) -> ConicError {
        let mut p1 = Model {
            n: self.n,
            vars: self.vars.clone(),
            constraints: Vec::new(),
            equalities: self.equalities.clone(),
            c: BTreeMap::new(),
            quad: BTreeMap::new(),
            obj_const: 0.0,
            x0: self.x0.clone(),
        };
        let t = p1.scalar("phase1_t");
        for c in &self.constraints {
            let n = c.expr.dim();
            let ti = p1.scaled_identity(t, n);
            let mut e = c.expr.add(&LmiExpr::affine(&(Mat::identity(n, n) * c.margin)));
            e.add_assign(&LmiExpr::sym(&AffineMat::var(ti)).scale(-1.0));
            p1.constraints.push(Constraint { expr: e, margin: 0.0, name: c.name.clone() });
        }
        let floor = LmiExpr::affine(&Mat::from_element(1, 1, -1.0)).add(&LmiExpr::sym(&AffineMat::var(t)).scale(-1.0));
        p1.constraints.push(Constraint { expr: floor, margin: 0.0, name: "phase1_floor".into() });
        p1.minimize_scalar(t, 1.0);
        for i in 0..self.n {
            p1.quad.insert(i, 1e-12);
        }
        match ipm::solve(&p1, opts) {
            Ok(sol) => {
                let tv = p1.value(t, &sol.x)[(0, 0)];
                if tv >= -1e-9 {
                    ConicError::Infeasible
                } else {
                    ConicError::NumericalFailure(format!("{msg} (phase I optimum {tv:.3e})"))
                }
            }
            Err(e) => ConicError::NumericalFailure(format!("{msg}; phase I: {e}")),
        }
    }

    /// Write the problem in SDPA sparse format.
    pub fn write_sdpa(&self, path: &std::path::Path) -> std::io::Result<()> {
        sdpa::write(self, path)
    }
}

#[cfg(test)]
mod tests;
