//! Iterative convex overbounding of the synthesis inequalities: feasible
//! points, original-constraint residuals, the linearized subproblem around a
//! base point and the descent loop.

mod overbound;

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

pub use overbound::{overbound, BmiTerm, Factor, Overbound};

use crate::conic::{default_margin, AffineMat, ConicError, LmiExpr, Mask, Model, SolverOptions, VarRef};
use crate::dissipativity::{self, QsrAffine, QsrTriple, QsrVars};
use crate::hinf::{self, br_selectors};
use crate::numlin::{self, Mat};
use crate::plant::{self, GlobalInterconnection, LoopData, NetworkTopology, PlantError, PolytopicAgent, StateSpace};

#[derive(Debug, Error)]
pub enum IcoError {
    #[error("base point violates {0}")]
    InfeasibleBase(String),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, IcoError>;

/// How the exogenous controller-side input enters the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExogenousChannel {
    /// `(n, H̃_y n̂)`.
    #[default]
    ThroughHy,
    /// `(n, n̂)`.
    Direct,
}

/// Agents, fixed plant coupling and loop conventions.
#[derive(Debug, Clone)]
pub struct Network {
    pub agents: Vec<PolytopicAgent>,
    pub topology: NetworkTopology,
    pub channel: ExogenousChannel,
}

impl Network {
    pub fn new(agents: Vec<PolytopicAgent>, topology: NetworkTopology) -> Self {
        Self { agents, topology, channel: ExogenousChannel::default() }
    }

    pub fn nominal(&self) -> Vec<StateSpace> {
        self.agents.iter().map(|a| a.nominal.clone()).collect()
    }

    fn dims(&self) -> (usize, usize, usize) {
        let n = self.agents.iter().map(|a| a.states()).sum();
        let m = self.agents.iter().map(|a| a.inputs()).sum();
        let l = self.agents.iter().map(|a| a.outputs()).sum();
        (n, m, l)
    }

    pub fn loop_data(&self, agents: &[StateSpace], nhat: usize, hbar: &GlobalInterconnection) -> Result<LoopData> {
        let mut data = LoopData::new(agents, &hbar.h(), nhat, &hbar.ht_y(), &hbar.ht_yhat())?;
        if self.channel == ExogenousChannel::Direct {
            let (_, m, l) = self.dims();
            data.h_tilde = numlin::blkdiag(&[Mat::zeros(nhat, m), numlin::eye(l)]);
        }
        Ok(data)
    }

    /// Nominal closed loop of a point.
    pub fn closed_loop(&self, p: &FeasiblePoint) -> Result<StateSpace> {
        Ok(self.loop_data(&self.nominal(), p.nhat(), &p.hbar)?.close(&p.khat))
    }

    /// Closed loop for other agent realizations with the same controllers.
    pub fn closed_loop_with(&self, agents: &[StateSpace], p: &FeasiblePoint) -> Result<StateSpace> {
        Ok(self.loop_data(agents, p.nhat(), &p.hbar)?.close(&p.khat))
    }
}

/// Complete assignment of the synthesis variables. Points without storage
/// data carry only the H∞ certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasiblePoint {
    /// `(states, inputs, outputs)` per controller.
    pub shapes: Vec<(usize, usize, usize)>,
    pub khat: Mat,
    pub hbar: GlobalInterconnection,
    pub y: Mat,
    pub nu: f64,
    pub agent_storage: Vec<Mat>,
    pub agent_supply: Vec<QsrTriple>,
    pub ctrl_storage: Vec<Mat>,
    pub ctrl_supply: Vec<QsrTriple>,
}

impl FeasiblePoint {
    pub fn nhat(&self) -> usize {
        self.shapes.iter().map(|s| s.0).sum()
    }

    pub fn certified(&self) -> bool {
        !self.agent_storage.is_empty()
    }

    pub fn controllers(&self) -> Vec<StateSpace> {
        plant::unstack_bank(&self.khat, &self.shapes)
    }

    /// Common positive rescaling of every storage and supply matrix so the
    /// largest has unit norm. All dissipativity inequalities are homogeneous
    /// in this scaling.
    pub fn normalized(mut self) -> Self {
        let mut big: f64 = 0.0;
        for m in self.agent_storage.iter().chain(&self.ctrl_storage) {
            big = big.max(m.norm());
        }
        for t in self.agent_supply.iter().chain(&self.ctrl_supply) {
            big = big.max(t.q.norm()).max(t.s.norm()).max(t.r.norm());
        }
        if big > 0.0 && big.is_finite() {
            let s = 1.0 / big;
            self.agent_storage.iter_mut().chain(self.ctrl_storage.iter_mut()).for_each(|m| *m *= s);
            self.agent_supply = self.agent_supply.iter().map(|t| t.scaled(s)).collect();
            self.ctrl_supply = self.ctrl_supply.iter().map(|t| t.scaled(s)).collect();
        }
        self
    }
}

/// Packed-bank entry mask of block-diagonal controllers.
pub fn bank_mask(shapes: &[(usize, usize, usize)]) -> Mask {
    let nt: usize = shapes.iter().map(|s| s.0).sum();
    let it: usize = shapes.iter().map(|s| s.1).sum();
    let ot: usize = shapes.iter().map(|s| s.2).sum();
    let mut mask = Mask::from_element(nt + ot, nt + it, false);
    let (mut xo, mut uo, mut yo) = (0, 0, 0);
    for &(n, i, o) in shapes {
        let rows: Vec<usize> = (xo..xo + n).chain(nt + yo..nt + yo + o).collect();
        let cols: Vec<usize> = (xo..xo + n).chain(nt + uo..nt + uo + i).collect();
        for &r in &rows {
            for &c in &cols {
                mask[(r, c)] = true;
            }
        }
        xo += n;
        uo += i;
        yo += o;
    }
    mask
}

/// `λ_max` of every original inequality, keyed by constraint name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Residuals {
    pub values: BTreeMap<String, f64>,
}

impl Residuals {
    pub fn worst(&self) -> (String, f64) {
        self.values
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .fold((String::new(), f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn all_negative(&self) -> bool {
        self.values.values().all(|v| *v < 0.0)
    }
}

fn sel(total: usize, off: usize, size: usize) -> Mat {
    let mut e = Mat::zeros(size, total);
    e.view_mut((0, off), (size, size)).fill_with_identity();
    e
}

/// Row and column selectors of controller `i` inside the packed bank.
fn ctrl_selectors(shapes: &[(usize, usize, usize)], i: usize) -> (Mat, Mat) {
    let nt: usize = shapes.iter().map(|s| s.0).sum();
    let it: usize = shapes.iter().map(|s| s.1).sum();
    let ot: usize = shapes.iter().map(|s| s.2).sum();
    let xo: usize = shapes[..i].iter().map(|s| s.0).sum();
    let uo: usize = shapes[..i].iter().map(|s| s.1).sum();
    let yo: usize = shapes[..i].iter().map(|s| s.2).sum();
    let (n, ni, no) = shapes[i];
    let mut r = Mat::zeros(n + no, nt + ot);
    r.view_mut((0, xo), (n, n)).fill_with_identity();
    r.view_mut((n, nt + yo), (no, no)).fill_with_identity();
    let mut c = Mat::zeros(nt + it, n + ni);
    c.view_mut((xo, 0), (n, n)).fill_with_identity();
    c.view_mut((nt + uo, n), (ni, ni)).fill_with_identity();
    (r, c)
}

/// Evaluate every original inequality at a point.
pub fn residuals(net: &Network, p: &FeasiblePoint) -> Result<Residuals> {
    let mut v = BTreeMap::new();
    let cl = net.closed_loop(p)?;
    v.insert("hinf".to_string(), numlin::lambda_max(&hinf::bounded_real_matrix(&cl, &p.y, p.nu)));
    v.insert("Y".to_string(), -numlin::lambda_min(&p.y));
    if p.certified() {
        for (i, a) in net.agents.iter().enumerate() {
            v.insert(format!("agent{i}.P"), -numlin::lambda_min(&p.agent_storage[i]));
            for (k, vert) in a.vertices.iter().enumerate() {
                let m = dissipativity::kyp_matrix(vert, &p.agent_storage[i], &p.agent_supply[i]);
                v.insert(format!("agent{i}.v{k}"), numlin::lambda_max(&m));
            }
        }
        for (i, &(n, _, _)) in p.shapes.iter().enumerate() {
            let (r, c) = ctrl_selectors(&p.shapes, i);
            let k = &r * &p.khat * &c;
            v.insert(format!("ctrl{i}.P"), if n == 0 { f64::NEG_INFINITY } else { -numlin::lambda_min(&p.ctrl_storage[i]) });
            let m = dissipativity::controller_diss_matrix(&k, n, &p.ctrl_supply[i], &p.ctrl_storage[i]);
            v.insert(format!("ctrl{i}.kyp"), numlin::lambda_max(&m));
        }
        let all: Vec<QsrTriple> = p.agent_supply.iter().chain(&p.ctrl_supply).cloned().collect();
        v.insert("ndt".to_string(), numlin::lambda_max(&dissipativity::ndt_matrix(&QsrTriple::stack(&all), &p.hbar.hbar.data)));
    }
    v.retain(|_, x| *x != f64::NEG_INFINITY);
    for x in v.values_mut() {
        if x.is_nan() {
            *x = f64::INFINITY;
        }
    }
    Ok(Residuals { values: v })
}

/// Which variable families move in a subproblem.
#[derive(Debug, Clone)]
pub struct Freedom {
    pub controllers: bool,
    /// Entry mask of free `H̄` entries; `None` keeps `H̄` fixed.
    pub hbar: Option<Mask>,
}

/// Margin of each subproblem inequality.
#[derive(Debug, Clone)]
pub enum Margins {
    /// Scale-aware default for every constraint.
    Default,
    /// `min(default, 0.99·slack)` of the original inequality at the base.
    FromBase(Residuals),
}

impl Margins {
    fn pick(&self, name: &str, expr: &LmiExpr) -> f64 {
        let d = default_margin(&expr.constant);
        match self {
            Margins::Default => d,
            Margins::FromBase(r) => match r.get(name) {
                Some(s) if s < 0.0 => d.min(-0.99 * s),
                _ => d,
            },
        }
    }
}

/// Perturbation variables of one subproblem.
#[derive(Debug, Clone)]
pub struct DeltaVars {
    pub k: Option<VarRef>,
    pub h: Option<VarRef>,
    pub y: VarRef,
    pub nu: VarRef,
    pub agent_p: Vec<VarRef>,
    pub agent_t: Vec<QsrVars>,
    pub ctrl_p: Vec<VarRef>,
    pub ctrl_t: Vec<QsrVars>,
}

/// Convex subproblem around a base point, in perturbation variables.
pub struct Subproblem {
    pub model: Model,
    pub vars: DeltaVars,
    pub base: FeasiblePoint,
    /// Rows added by overbounding, per constraint.
    pub lifted: BTreeMap<String, usize>,
}

fn opt_var(v: Option<VarRef>, r: usize, c: usize) -> AffineMat {
    v.map(AffineMat::var).unwrap_or_else(|| AffineMat::zeros(r, c))
}

fn plus(base: &Mat, v: VarRef) -> AffineMat {
    AffineMat::var(v).add_const(base)
}

/// Block-diagonal affine matrix from per-operator parts.
fn blkdiag_affine(parts: &[AffineMat]) -> AffineMat {
    let rt: usize = parts.iter().map(|p| p.rows()).sum();
    let ct: usize = parts.iter().map(|p| p.cols()).sum();
    let mut out = AffineMat::zeros(rt, ct);
    let (mut ro, mut co) = (0, 0);
    for p in parts {
        let l = sel(rt, ro, p.rows()).transpose();
        let r = sel(ct, co, p.cols());
        out = out.add(&p.lmul(&l).rmul(&r));
        ro += p.rows();
        co += p.cols();
    }
    out
}

impl Subproblem {
    /// Build every overbounded inequality around `base`. The objective is
    /// `ν + reg·‖δ‖²` over all perturbations.
    pub fn build(net: &Network, base: &FeasiblePoint, free: &Freedom, margins: &Margins, reg: f64) -> Result<Self> {
        let mut model = Model::new();
        let (n, m, l) = net.dims();
        let nhat = base.nhat();
        let k = if free.controllers && base.khat.nrows() > 0 {
            Some(model.matrix("dK", base.khat.nrows(), base.khat.ncols(), Some(&bank_mask(&base.shapes))))
        } else {
            None
        };
        let h = match &free.hbar {
            Some(mask) if mask.iter().any(|b| *b) => Some(model.matrix("dH", m + l, l + m, Some(mask))),
            _ => None,
        };
        let y = model.symmetric("dY", n + nhat);
        let nu = model.scalar("dnu");
        let mut vars = DeltaVars { k, h, y, nu, agent_p: vec![], agent_t: vec![], ctrl_p: vec![], ctrl_t: vec![] };
        if base.certified() {
            for (i, a) in net.agents.iter().enumerate() {
                vars.agent_p.push(model.symmetric(&format!("agent{i}.dP"), a.states()));
                vars.agent_t.push(QsrVars::declare(&mut model, &format!("agent{i}.d"), a.outputs(), a.inputs()));
            }
            for (i, &(cn, ci, co)) in base.shapes.iter().enumerate() {
                vars.ctrl_p.push(model.symmetric(&format!("ctrl{i}.dP"), cn));
                vars.ctrl_t.push(QsrVars::declare(&mut model, &format!("ctrl{i}.d"), co, ci));
            }
        }
        let mut sp = Subproblem { model, vars, base: base.clone(), lifted: BTreeMap::new() };
        sp.add_hinf(net, margins)?;
        if base.certified() {
            sp.add_agents(net, margins)?;
            sp.add_controllers(margins)?;
            sp.add_ndt(margins)?;
        }
        sp.model.minimize_scalar(sp.vars.nu, 1.0);
        if reg > 0.0 {
            let v = sp.vars.clone();
            let mut all: Vec<VarRef> = vec![v.y];
            all.extend(v.k);
            all.extend(v.h);
            all.extend(v.agent_p.iter().chain(&v.ctrl_p));
            for t in v.agent_t.iter().chain(&v.ctrl_t) {
                all.extend([t.q, t.s, t.r]);
            }
            for var in all {
                sp.model.minimize_quadratic(var, 2.0 * reg, &Mat::zeros(var.rows(), var.cols()));
            }
        }
        Ok(sp)
    }

    fn constrain(&mut self, name: &str, ob: &Overbound, margins: &Margins) -> Result<()> {
        let expr = ob.finish();
        let mu = margins.pick(name, &expr);
        self.lifted.insert(name.to_string(), ob.lifted());
        self.model.negdef(name, expr, Some(mu))?;
        Ok(())
    }

    fn posdef(&mut self, name: &str, base: &Mat, v: VarRef, margins: &Margins) -> Result<()> {
        if base.nrows() == 0 {
            return Ok(());
        }
        let expr = LmiExpr::sym(&plus(base, v)).scale(-1.0);
        let mu = margins.pick(name, &expr);
        self.model.negdef(name, expr, Some(mu))?;
        Ok(())
    }

    fn dh_block(&self, m: usize, l: usize, r0: usize, c0: usize, rows: usize, cols: usize, lead: usize) -> AffineMat {
        // places δH̄[r0.., c0..] (rows×cols) at (lead.., lead..) of a (lead+rows)×(lead+cols) matrix
        let Some(h) = self.vars.h else { return AffineMat::zeros(lead + rows, lead + cols) };
        let mut pr = Mat::zeros(lead + rows, m + l);
        pr.view_mut((lead, r0), (rows, rows)).fill_with_identity();
        let mut pc = Mat::zeros(l + m, lead + cols);
        pc.view_mut((c0, lead), (cols, cols)).fill_with_identity();
        AffineMat::product(&pr, h, &pc)
    }

    fn add_hinf(&mut self, net: &Network, margins: &Margins) -> Result<()> {
        let (n, m, l) = net.dims();
        let b = self.base.clone();
        let nhat = b.nhat();
        let ncl = n + nhat;
        let data = net.loop_data(&net.nominal(), nhat, &b.hbar)?;
        let (_, bd, cd) = plant::stack_agents(&net.nominal());
        let [e1, e2, e3] = br_selectors(ncl, m + l, l + m);
        let dim = ncl + 2 * (m + l);
        let mut ob = Overbound::new(dim);
        let ya = plus(&b.y, self.vars.y);
        ob.add_he(&ya.lmul(&e1.transpose()).rmul(&(&data.a_bar * &e1 + &data.b_bar * &e2)));
        ob.add_he(&AffineMat::constant(e3.transpose() * &data.c_bar * &e1));
        let nu_i = self.model.scaled_identity(self.vars.nu, 2 * (m + l));
        let mut pad = Mat::zeros(dim, 2 * (m + l));
        pad.view_mut((ncl, 0), (2 * (m + l), 2 * (m + l))).fill_with_identity();
        let nu_part = AffineMat::product(&pad, nu_i, &pad.transpose()).add_const(&(&pad * &pad.transpose() * b.nu));
        ob.add_sym(&nu_part.scale(-1.0));

        let z = |r, c| Mat::zeros(r, c);
        let bt0 = numlin::block_grid(&[vec![z(n, nhat), bd.clone()], vec![numlin::eye(nhat), z(nhat, m)]]);
        let ct0 = numlin::block_grid(&[vec![z(nhat, n), numlin::eye(nhat)], vec![cd.clone(), z(l, nhat)]]);
        let hh0 = numlin::blkdiag(&[z(l, nhat), numlin::eye(m)]);
        let dyhat0 = numlin::blkdiag(&[numlin::eye(nhat), b.hbar.ht_yhat()]);
        let dy0 = numlin::blkdiag(&[numlin::eye(nhat), b.hbar.ht_y()]);
        let f1 = Factor::leaf(
            e1.transpose() * &b.y * &bt0 + e3.transpose() * &hh0,
            AffineMat::product(&e1.transpose(), self.vars.y, &bt0),
        );
        let f2 = Factor::leaf(dyhat0.clone(), self.dh_block(m, l, 0, l, m, m, nhat));
        let f3 = Factor::leaf(b.khat.clone(), opt_var(self.vars.k, b.khat.nrows(), b.khat.ncols()));
        let ddy = self.dh_block(m, l, m, 0, l, l, nhat);
        let f4 = match net.channel {
            ExogenousChannel::ThroughHy => {
                let w0 = &ct0 * &e1 + numlin::blkdiag(&[z(nhat, m), numlin::eye(l)]) * &e2;
                Factor::leaf(&dy0 * &w0, ddy.rmul(&w0))
            }
            ExogenousChannel::Direct => {
                let w = &dy0 * &ct0 * &e1 + &data.h_tilde * &e2;
                Factor::leaf(w, ddy.rmul(&(&ct0 * &e1)))
            }
        };
        let tree = Factor::prod(Factor::prod(f1, f2), Factor::prod(f3, f4));
        ob.add_product(&numlin::eye(dim), &tree, &numlin::eye(dim));
        self.constrain("hinf", &ob, margins)?;
        self.posdef("Y", &b.y, self.vars.y, margins)
    }

    fn add_agents(&mut self, net: &Network, margins: &Margins) -> Result<()> {
        let b = self.base.clone();
        for (i, a) in net.agents.iter().enumerate() {
            let p = plus(&b.agent_storage[i], self.vars.agent_p[i]);
            let tv = self.vars.agent_t[i];
            let t = &b.agent_supply[i];
            let ta = QsrAffine { q: plus(&t.q, tv.q), s: plus(&t.s, tv.s), r: plus(&t.r, tv.r) };
            for (k, e) in dissipativity::certify_polytopic(a, &p, &ta).map_err(dim_err)?.into_iter().enumerate() {
                let name = format!("agent{i}.v{k}");
                let mu = margins.pick(&name, &e);
                self.model.negdef(&name, e, Some(mu))?;
            }
            self.posdef(&format!("agent{i}.P"), &b.agent_storage[i], self.vars.agent_p[i], margins)?;
        }
        Ok(())
    }

    fn add_controllers(&mut self, margins: &Margins) -> Result<()> {
        let b = self.base.clone();
        for (i, &(cn, ci, co)) in b.shapes.iter().enumerate() {
            let (rs, cs) = ctrl_selectors(&b.shapes, i);
            let k0 = &rs * &b.khat * &cs;
            let dk = match self.vars.k {
                Some(v) => AffineMat::product(&rs, v, &cs),
                None => AffineMat::zeros(cn + co, cn + ci),
            };
            let kf = Factor::leaf(k0.clone(), dk.clone());
            let t = &b.ctrl_supply[i];
            let tv = self.vars.ctrl_t[i];
            let top = sel(cn + ci, 0, cn).transpose();
            let bot = sel(cn + ci, cn, ci).transpose();
            let left = sel(cn + co, 0, cn);
            let right = sel(cn + co, cn, co);
            let pd = numlin::blkdiag(&[b.ctrl_storage[i].clone(), -t.s.transpose()]);
            let dpd = AffineMat::product(&top, self.vars.ctrl_p[i], &left)
                .add(&AffineMat::product(&bot, tv.s.t(), &right).scale(-1.0));
            let dim = cn + ci;
            let mut ob = Overbound::new(dim);
            ob.add_product(&numlin::eye(dim), &Factor::prod(Factor::leaf(pd, dpd), kf), &numlin::eye(dim));
            ob.add_sym(&plus(&t.r, tv.r).lmul(&bot).rmul(&bot.transpose()).scale(-1.0));
            let wsel = sel(cn + co, cn, co);
            let w = Factor::leaf(&wsel * &k0, dk.lmul(&wsel));
            let q = Factor::leaf(t.q.clone(), AffineMat::var(tv.q));
            ob.add_product(&(-0.5 * numlin::eye(dim)), &Factor::prod(w.transpose(), Factor::prod(q, w)), &numlin::eye(dim));
            self.constrain(&format!("ctrl{i}.kyp"), &ob, margins)?;
            self.posdef(&format!("ctrl{i}.P"), &b.ctrl_storage[i], self.vars.ctrl_p[i], margins)?;
        }
        Ok(())
    }

    fn add_ndt(&mut self, margins: &Margins) -> Result<()> {
        let b = self.base.clone();
        let tv: Vec<QsrVars> = self.vars.agent_t.iter().chain(&self.vars.ctrl_t).copied().collect();
        let t0: Vec<QsrTriple> = b.agent_supply.iter().chain(&b.ctrl_supply).cloned().collect();
        let q = blkdiag_affine(&tv.iter().zip(&t0).map(|(v, t)| plus(&t.q, v.q)).collect::<Vec<_>>());
        let s = blkdiag_affine(&tv.iter().zip(&t0).map(|(v, t)| plus(&t.s, v.s)).collect::<Vec<_>>());
        let r = blkdiag_affine(&tv.iter().zip(&t0).map(|(v, t)| plus(&t.r, v.r)).collect::<Vec<_>>());
        let hb = &b.hbar.hbar.data;
        let hf = Factor::leaf(hb.clone(), opt_var(self.vars.h, hb.nrows(), hb.ncols()));
        let sf = Factor::leaf(s.constant.clone(), s.linear_part());
        let rf = Factor::leaf(r.constant.clone(), r.linear_part());
        let dim = q.rows();
        let mut ob = Overbound::new(dim);
        ob.add_sym(&q);
        ob.add_product(&numlin::eye(dim), &Factor::prod(sf, hf.clone()), &numlin::eye(dim));
        ob.add_product(&(0.5 * numlin::eye(dim)), &Factor::prod(hf.transpose(), Factor::prod(rf, hf)), &numlin::eye(dim));
        self.constrain("ndt", &ob, margins)
    }

    /// Base plus the perturbations of a solution vector.
    pub fn candidate(&self, x: &[f64]) -> Result<FeasiblePoint> {
        let b = &self.base;
        let val = |v: VarRef| self.model.value(v, x);
        let mut p = b.clone();
        if let Some(k) = self.vars.k {
            p.khat = &b.khat + val(k);
        }
        if let Some(h) = self.vars.h {
            p.hbar = b.hbar.with_hbar(&(&b.hbar.hbar.data + val(h)))?;
        }
        p.y = numlin::symmetrize(&(&b.y + val(self.vars.y)));
        p.nu = b.nu + val(self.vars.nu)[(0, 0)];
        for i in 0..self.vars.agent_p.len() {
            p.agent_storage[i] = numlin::symmetrize(&(&b.agent_storage[i] + val(self.vars.agent_p[i])));
            let d = self.vars.agent_t[i].value(&self.model, x);
            let t = &b.agent_supply[i];
            p.agent_supply[i] = QsrTriple::new(&t.q + d.q, &t.s + d.s, &t.r + d.r).expect("shapes");
        }
        for i in 0..self.vars.ctrl_p.len() {
            p.ctrl_storage[i] = numlin::symmetrize(&(&b.ctrl_storage[i] + val(self.vars.ctrl_p[i])));
            let d = self.vars.ctrl_t[i].value(&self.model, x);
            let t = &b.ctrl_supply[i];
            p.ctrl_supply[i] = QsrTriple::new(&t.q + d.q, &t.s + d.s, &t.r + d.r).expect("shapes");
        }
        Ok(p)
    }

    /// Frobenius norms of the perturbation families.
    pub fn step_norms(&self, x: &[f64]) -> StepNorms {
        let nrm = |v: Option<VarRef>| v.map(|v| self.model.value(v, x).norm()).unwrap_or(0.0);
        let mut cert: f64 = 0.0;
        for v in self.vars.agent_p.iter().chain(&self.vars.ctrl_p) {
            cert += self.model.value(*v, x).norm_squared();
        }
        for t in self.vars.agent_t.iter().chain(&self.vars.ctrl_t) {
            let d = t.value(&self.model, x);
            cert += d.q.norm_squared() + d.s.norm_squared() + d.r.norm_squared();
        }
        StepNorms { k: nrm(self.vars.k), h: nrm(self.vars.h), y: nrm(Some(self.vars.y)), certificates: cert.sqrt() }
    }
}

fn dim_err(e: dissipativity::DissError) -> IcoError {
    match e {
        dissipativity::DissError::Conic(c) => IcoError::Conic(c),
        dissipativity::DissError::Dimension(d) => IcoError::Conic(ConicError::Dimension(d)),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepNorms {
    pub k: f64,
    pub h: f64,
    pub y: f64,
    pub certificates: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub nu: f64,
    pub max_residual: f64,
    pub step: StepNorms,
}

pub const TRACE_HEADER: &str = "# dissynth-trace v1";

pub fn write_trace<W: Write>(w: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = w;
    writeln!(w, "{TRACE_HEADER}")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["iteration", "nu", "max_residual", "dK", "dH", "dY", "dcert"]).map_err(csv_err)?;
    for r in rows {
        csv.write_record(&[
            r.iteration.to_string(),
            format!("{:.12e}", r.nu),
            format!("{:.6e}", r.max_residual),
            format!("{:.6e}", r.step.k),
            format!("{:.6e}", r.step.h),
            format!("{:.6e}", r.step.y),
            format!("{:.6e}", r.step.certificates),
        ])
        .map_err(csv_err)?;
    }
    csv.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> IcoError {
    IcoError::Io(std::io::Error::other(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct IcoOptions {
    pub eps: f64,
    pub max_iters: usize,
    pub regularization: f64,
    pub solver: SolverOptions,
}

impl Default for IcoOptions {
    fn default() -> Self {
        Self { eps: 1e-3, max_iters: 200, regularization: 1e-6, solver: SolverOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IcoStatus {
    Converged,
    MaxIterations,
    /// The last step was discarded; the point is the last verified one.
    Stopped(String),
}

#[derive(Debug, Clone)]
pub struct IcoOutcome {
    pub point: FeasiblePoint,
    pub residuals: Residuals,
    pub trace: Vec<TraceRow>,
    pub status: IcoStatus,
}

/// One verified step from `base`. `extra` may add objective terms.
pub fn ico_step(
    net: &Network,
    base: &FeasiblePoint,
    base_res: &Residuals,
    free: &Freedom,
    opts: &IcoOptions,
    extra: &mut dyn FnMut(&mut Subproblem),
) -> Result<(FeasiblePoint, Residuals, StepNorms)> {
    let mut sp = Subproblem::build(net, base, free, &Margins::FromBase(base_res.clone()), opts.regularization)?;
    extra(&mut sp);
    let sol = sp.model.solve(&opts.solver)?;
    let cand = sp.candidate(&sol.x)?.normalized();
    let res = residuals(net, &cand)?;
    if !res.all_negative() {
        let (name, v) = res.worst();
        return Err(IcoError::InfeasibleBase(format!("{name} after step (λ_max {v:.3e})")));
    }
    Ok((cand, res, sp.step_norms(&sol.x)))
}

/// Zero-valued point with the given controllers and interconnection; the
/// starting base of [`certify_fixed`].
pub fn zero_point(net: &Network, shapes: &[(usize, usize, usize)], khat: &Mat, hbar: &GlobalInterconnection, certified: bool) -> FeasiblePoint {
    let (n, _, _) = net.dims();
    let nhat: usize = shapes.iter().map(|s| s.0).sum();
    let z = |k: usize| Mat::zeros(k, k);
    let zt = |l: usize, m: usize| QsrTriple { q: z(l), s: Mat::zeros(l, m), r: z(m) };
    let (mut ap, mut at, mut cp, mut ct) = (vec![], vec![], vec![], vec![]);
    if certified {
        ap = net.agents.iter().map(|a| z(a.states())).collect();
        at = net.agents.iter().map(|a| zt(a.outputs(), a.inputs())).collect();
        cp = shapes.iter().map(|s| z(s.0)).collect();
        ct = shapes.iter().map(|s| zt(s.2, s.1)).collect();
    }
    FeasiblePoint {
        shapes: shapes.to_vec(),
        khat: khat.clone(),
        hbar: hbar.clone(),
        y: z(n + nhat),
        nu: 0.0,
        agent_storage: ap,
        agent_supply: at,
        ctrl_storage: cp,
        ctrl_supply: ct,
    }
}

/// With controllers and interconnection fixed every inequality is linear in
/// the certificates; solve for them and the smallest `ν`.
pub fn certify_fixed(
    net: &Network,
    shapes: &[(usize, usize, usize)],
    khat: &Mat,
    hbar: &GlobalInterconnection,
    certified: bool,
    opts: &IcoOptions,
) -> Result<FeasiblePoint> {
    let base = zero_point(net, shapes, khat, hbar, certified);
    let free = Freedom { controllers: false, hbar: None };
    let sp = Subproblem::build(net, &base, &free, &Margins::Default, opts.regularization)?;
    let sol = sp.model.solve(&opts.solver)?;
    let p = sp.candidate(&sol.x)?.normalized();
    verify(net, &p)?;
    Ok(p)
}

/// Check a point against the original inequalities.
pub fn verify(net: &Network, p: &FeasiblePoint) -> Result<Residuals> {
    let res = residuals(net, p)?;
    if !res.all_negative() {
        let (name, v) = res.worst();
        return Err(IcoError::InfeasibleBase(format!("{name} (λ_max {v:.3e})")));
    }
    Ok(res)
}

/// Descent loop on `ν` with the given freedom until the relative decrease
/// drops to `eps`.
pub fn ico_iterate(net: &Network, base: &FeasiblePoint, free: &Freedom, opts: &IcoOptions) -> Result<IcoOutcome> {
    let mut cur = base.clone();
    let mut res = verify(net, &cur)?;
    let mut trace = vec![TraceRow { iteration: 0, nu: cur.nu, max_residual: res.worst().1, step: StepNorms::default() }];
    let mut status = IcoStatus::MaxIterations;
    for it in 1..=opts.max_iters {
        let (cand, cres, step) = match ico_step(net, &cur, &res, free, opts, &mut |_| {}) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("ico step {it} discarded: {e}");
                status = IcoStatus::Stopped(e.to_string());
                break;
            }
        };
        if cand.nu > cur.nu + 1e-9 {
            status = IcoStatus::Stopped(format!("ν rose from {} to {}", cur.nu, cand.nu));
            break;
        }
        let rel = (cur.nu - cand.nu) / cand.nu;
        trace.push(TraceRow { iteration: it, nu: cand.nu, max_residual: cres.worst().1, step });
        log::info!("ico {it}: ν = {:.6}", cand.nu);
        cur = cand;
        res = cres;
        if rel <= opts.eps {
            status = IcoStatus::Converged;
            break;
        }
    }
    Ok(IcoOutcome { point: cur, residuals: res, trace, status })
}

/// Re-solve every certificate of `p` at fixed controllers and
/// interconnection with default margins. The result replaces `p` only when
/// it verifies with a lower `ν`.
pub fn recenter(net: &Network, p: &FeasiblePoint, opts: &IcoOptions) -> Option<(FeasiblePoint, Residuals)> {
    match certify_fixed(net, &p.shapes, &p.khat, &p.hbar, p.certified(), opts) {
        Ok(q) if q.nu < p.nu => {
            let res = verify(net, &q).ok()?;
            Some((q, res))
        }
        Ok(_) => None,
        Err(e) => {
            log::warn!("recentering discarded: {e}");
            None
        }
    }
}

/// Final re-centering of a descent outcome, recorded as one more trace row.
pub fn polish(net: &Network, mut out: IcoOutcome, opts: &IcoOptions) -> IcoOutcome {
    let Some((q, res)) = recenter(net, &out.point, opts) else { return out };
    let step = StepNorms { y: (&q.y - &out.point.y).norm(), ..StepNorms::default() };
    let iteration = out.trace.last().map_or(0, |r| r.iteration) + 1;
    out.trace.push(TraceRow { iteration, nu: q.nu, max_residual: res.worst().1, step });
    out.point = q;
    out.residuals = res;
    out
}
