//! Convex overbounding of products of affine matrix factors.
//!
//! A factor is either a leaf `F⁰ + ΔF` with `ΔF` linear in the decision
//! variables, or a product of two factors. `He(Jl·T·Jr)` for a product tree
//! `T` is expanded into its base value, its first-order part and a remainder;
//! every bilinear remainder `He(a·b)` is replaced by the Schur block
//! `[[·, a + bᵀ], [∗, −2I]]`, and the off-diagonal entries are expanded the
//! same way until only affine terms remain.

use crate::conic::{AffineMat, LmiExpr};
use crate::numlin::{self, Mat};

#[derive(Debug, Clone)]
pub enum Factor {
    Leaf { base: Mat, delta: AffineMat },
    Prod(Box<Factor>, Box<Factor>),
}

impl Factor {
    /// `base + delta`; the constant part of `delta` is discarded.
    pub fn leaf(base: Mat, delta: AffineMat) -> Self {
        assert_eq!((base.nrows(), base.ncols()), (delta.rows(), delta.cols()), "leaf shape");
        Factor::Leaf { base, delta: delta.linear_part() }
    }

    pub fn constant(base: Mat) -> Self {
        let (r, c) = base.shape();
        Factor::Leaf { base, delta: AffineMat::zeros(r, c) }
    }

    pub fn prod(l: Factor, r: Factor) -> Self {
        assert_eq!(l.cols(), r.rows(), "product shape");
        Factor::Prod(Box::new(l), Box::new(r))
    }

    /// Left-to-right product of a chain.
    pub fn chain(mut fs: Vec<Factor>) -> Self {
        let mut acc = fs.remove(0);
        for f in fs {
            acc = Factor::prod(acc, f);
        }
        acc
    }

    pub fn rows(&self) -> usize {
        match self {
            Factor::Leaf { base, .. } => base.nrows(),
            Factor::Prod(l, _) => l.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Factor::Leaf { base, .. } => base.ncols(),
            Factor::Prod(_, r) => r.cols(),
        }
    }

    pub fn transpose(&self) -> Self {
        match self {
            Factor::Leaf { base, delta } => Factor::Leaf { base: base.transpose(), delta: delta.transpose() },
            Factor::Prod(l, r) => Factor::Prod(Box::new(r.transpose()), Box::new(l.transpose())),
        }
    }

    pub fn base(&self) -> Mat {
        match self {
            Factor::Leaf { base, .. } => base.clone(),
            Factor::Prod(l, r) => l.base() * r.base(),
        }
    }

    /// First-order part of the product in the decision variables.
    pub fn lin(&self) -> AffineMat {
        match self {
            Factor::Leaf { delta, .. } => delta.clone(),
            Factor::Prod(l, r) => r.lin().lmul(&l.base()).add(&l.lin().rmul(&r.base())),
        }
    }

    /// Value at a given assignment of the deltas (`eval` maps an affine
    /// matrix to its numeric value).
    pub fn value(&self, eval: &dyn Fn(&AffineMat) -> Mat) -> Mat {
        match self {
            Factor::Leaf { base, delta } => base + eval(delta),
            Factor::Prod(l, r) => l.value(eval) * r.value(eval),
        }
    }

    /// Rows and columns where the perturbation `T − T⁰` can be nonzero.
    fn support(&self) -> (Vec<bool>, Vec<bool>) {
        match self {
            Factor::Leaf { delta, .. } => {
                let mut rows = vec![false; delta.rows()];
                let mut cols = vec![false; delta.cols()];
                for t in &delta.terms {
                    for (i, r) in rows.iter_mut().enumerate() {
                        *r |= t.left.row(i).iter().any(|v| *v != 0.0);
                    }
                    for (j, c) in cols.iter_mut().enumerate() {
                        *c |= t.right.column(j).iter().any(|v| *v != 0.0);
                    }
                }
                (rows, cols)
            }
            Factor::Prod(l, r) => {
                let (lr, lc) = l.support();
                let (rr, rc) = r.support();
                let (l0, r0) = (l.base(), r.base());
                let rows = (0..l.rows()).map(|i| lr[i] || (0..l.cols()).any(|k| rr[k] && l0[(i, k)] != 0.0)).collect();
                let cols = (0..r.cols()).map(|j| rc[j] || (0..r.rows()).any(|k| lc[k] && r0[(k, j)] != 0.0)).collect();
                (rows, cols)
            }
        }
    }
}

/// Accumulates `Σ He(E_iᵀ·A·E_j)` over a growing list of diagonal blocks;
/// block 0 is the original matrix.
#[derive(Debug, Clone)]
pub struct Overbound {
    sizes: Vec<usize>,
    parts: Vec<(usize, usize, AffineMat)>,
}

impl Overbound {
    pub fn new(dim: usize) -> Self {
        Self { sizes: vec![dim], parts: Vec::new() }
    }

    /// Dimension of the original inequality.
    pub fn dim(&self) -> usize {
        self.sizes[0]
    }

    /// Number of rows added by overbounding so far.
    pub fn lifted(&self) -> usize {
        self.sizes[1..].iter().sum()
    }

    /// Add a symmetric-valued affine matrix.
    pub fn add_sym(&mut self, a: &AffineMat) {
        self.parts.push((0, 0, a.scale(0.5)));
    }

    /// Add `He(a)`.
    pub fn add_he(&mut self, a: &AffineMat) {
        self.parts.push((0, 0, a.clone()));
    }

    /// Add `He(Jl·T·Jr)`.
    pub fn add_product(&mut self, jl: &Mat, t: &Factor, jr: &Mat) {
        self.he_tree(0, jl, t, 0, jr, true);
    }

    fn he_tree(&mut self, i: usize, jl: &Mat, t: &Factor, j: usize, jr: &Mat, with_base: bool) {
        if with_base {
            self.parts.push((i, j, AffineMat::constant(jl * t.base() * jr)));
        }
        let lin = t.lin();
        if !lin.is_constant() {
            self.parts.push((i, j, lin.lmul(jl).rmul(jr)));
        }
        self.remainder(i, jl, t, j, jr);
    }

    fn remainder(&mut self, i: usize, jl: &Mat, t: &Factor, j: usize, jr: &Mat) {
        let Factor::Prod(l, r) = t else { return };
        self.remainder(i, &(jl * l.base()), r, j, jr);
        self.remainder(i, jl, l, j, &(r.base() * jr));
        let (_, lc) = l.support();
        let (rr, _) = r.support();
        let active: Vec<usize> = (0..lc.len()).filter(|&k| lc[k] && rr[k]).collect();
        if active.is_empty() {
            return;
        }
        let k = active.len();
        let mut sel = Mat::zeros(k, lc.len());
        for (a, &c) in active.iter().enumerate() {
            sel[(a, c)] = 1.0;
        }
        let b = self.sizes.len();
        self.sizes.push(k);
        self.parts.push((b, b, AffineMat::constant(-numlin::eye(k))));
        self.he_tree(i, jl, l, b, &sel.transpose(), false);
        self.he_tree(b, &sel, r, j, jr, false);
    }

    pub fn finish(&self) -> LmiExpr {
        let total: usize = self.sizes.iter().sum();
        let mut offs = Vec::with_capacity(self.sizes.len());
        let mut acc = 0;
        for s in &self.sizes {
            offs.push(acc);
            acc += s;
        }
        let sel = |b: usize| {
            let mut e = Mat::zeros(self.sizes[b], total);
            e.view_mut((0, offs[b]), (self.sizes[b], self.sizes[b])).fill_with_identity();
            e
        };
        let sels: Vec<Mat> = (0..self.sizes.len()).map(sel).collect();
        let mut out = LmiExpr::zeros(total);
        for (i, j, a) in &self.parts {
            out.add_assign(&LmiExpr::he(&a.lmul(&sels[*i].transpose()).rmul(&sels[*j])));
        }
        out
    }
}

/// `Q + He(X·N·Y)` with `X = X⁰ + δX`, `Y = Y⁰ + δY`.
#[derive(Debug, Clone)]
pub struct BmiTerm {
    pub q: Mat,
    pub x: Factor,
    pub n: Mat,
    pub y: Factor,
}

impl BmiTerm {
    pub fn new(q: Mat, x0: Mat, dx: AffineMat, n: Mat, y0: Mat, dy: AffineMat) -> Self {
        assert!(q.is_square() && x0.nrows() == q.nrows() && y0.ncols() == q.ncols(), "BMI shapes");
        assert!(x0.ncols() == n.nrows() && n.ncols() == y0.nrows(), "BMI inner shapes");
        Self { q, x: Factor::leaf(x0, dx), n, y: Factor::leaf(y0, dy) }
    }

    /// Numeric `Q + He(XNY)` for given perturbations.
    pub fn value(&self, eval: &dyn Fn(&AffineMat) -> Mat) -> Mat {
        &self.q + numlin::he(&(self.x.value(eval) * &self.n * self.y.value(eval)))
    }
}

/// `[[Q + He(X⁰NY⁰ + δXNY⁰ + X⁰NδY), δXN + δYᵀ], [∗, −2I]]`.
pub fn overbound(term: &BmiTerm) -> LmiExpr {
    let mut ob = Overbound::new(term.q.nrows());
    ob.add_sym(&AffineMat::constant(term.q.clone()));
    let t = Factor::prod(Factor::prod(term.x.clone(), Factor::constant(term.n.clone())), term.y.clone());
    ob.add_product(&numlin::eye(term.q.nrows()), &t, &numlin::eye(term.q.ncols()));
    ob.finish()
}
