//! SDPA sparse-format export (`.dat-s`).
//!
//! SDPA reads `min cᵀx s.t. Σ F_i x_i − F_0 ⪰ 0`; with our slack
//! `S = C − A(x)` that is `F_i = −A_i`, `F_0 = −C`. Equalities become a pair
//! of LP rows each. A quadratic objective part is only recorded in comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use super::ipm::compile;
use super::Model;

static COUNTER: AtomicUsize = AtomicUsize::new(0);

pub(super) fn next_dump_path(dir: &Path) -> PathBuf {
    let k = COUNTER.fetch_add(1, Ordering::SeqCst);
    dir.join(format!("solve_{k:05}.dat-s"))
}

pub(super) fn write(model: &Model, path: &Path) -> std::io::Result<()> {
    let prob = compile(model);
    let mut out = String::new();
    let _ = writeln!(out, "\"dissynth conic dump: {} scalars, {} LMI blocks", prob.m, prob.blocks.len());
    for (i, q) in prob.q.iter().enumerate() {
        if *q != 0.0 {
            let _ = writeln!(out, "* quadratic 0.5*{q:e}*x{}^2", i + 1);
        }
    }
    let neq = prob.e_rows.len();
    let nblk = prob.blocks.len() + usize::from(neq > 0);
    let _ = writeln!(out, "{}", prob.m);
    let _ = writeln!(out, "{nblk}");
    let mut sizes: Vec<String> = prob.blocks.iter().map(|b| b.n.to_string()).collect();
    if neq > 0 {
        sizes.push(format!("-{}", 2 * neq));
    }
    let _ = writeln!(out, "{}", sizes.join(" "));
    let cs: Vec<String> = prob.c.iter().map(|v| format!("{v:e}")).collect();
    let _ = writeln!(out, "{}", cs.join(" "));

    let mut ent: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
    for (k, b) in prob.blocks.iter().enumerate() {
        for i in 0..b.n {
            for j in i..b.n {
                let v = b.c[(i, j)];
                if v != 0.0 {
                    *ent.entry((0, k + 1, i + 1, j + 1)).or_insert(0.0) -= v;
                }
            }
        }
        for t in &b.terms {
            for &(a, bb, idx, coef) in &t.entries {
                for &(r1, v1) in &t.lcols[a] {
                    for &(r2, v2) in &t.rrows[bb] {
                        let (i, j) = (r1.min(r2), r1.max(r2));
                        *ent.entry((idx + 1, k + 1, i + 1, j + 1)).or_insert(0.0) -= coef * v1 * v2;
                        if r1 == r2 {
                            *ent.entry((idx + 1, k + 1, i + 1, j + 1)).or_insert(0.0) -= coef * v1 * v2;
                        }
                    }
                }
            }
        }
    }
    if neq > 0 {
        let blk = prob.blocks.len() + 1;
        for (r, (row, rhs)) in prob.e_rows.iter().zip(&prob.e_rhs).enumerate() {
            let (lo, hi) = (2 * r + 1, 2 * r + 2);
            *ent.entry((0, blk, lo, lo)).or_insert(0.0) -= rhs;
            *ent.entry((0, blk, hi, hi)).or_insert(0.0) += rhs;
            for &(i, v) in row {
                *ent.entry((i + 1, blk, lo, lo)).or_insert(0.0) -= v;
                *ent.entry((i + 1, blk, hi, hi)).or_insert(0.0) += v;
            }
        }
    }
    for ((mat, blk, i, j), v) in ent {
        if v != 0.0 {
            let _ = writeln!(out, "{mat} {blk} {i} {j} {v:e}");
        }
    }
    std::fs::write(path, out)
}
