//! Dense linear algebra and control primitives.
//!
//! Everything here is a pure function over owned `nalgebra` matrices. The
//! heavier kernels (general and symmetric eigenvalues) go through `faer`.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::plant::StateSpace;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMat = DMatrix<Complex<f64>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),
    #[error("system matrix is not Hurwitz (max real part {0:.3e})")]
    NotHurwitz(f64),
    #[error("eigenvalue computation failed")]
    Eigen,
    #[error("matrix is singular")]
    Singular,
}

pub type Result<T> = std::result::Result<T, NumError>;

/// Sizes of consecutive diagonal blocks of a partitioned dimension.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BlockPartition {
    pub sizes: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Self {
        Self { sizes }
    }

    pub fn uniform(count: usize, size: usize) -> Self {
        Self { sizes: vec![size; count] }
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn offset(&self, i: usize) -> usize {
        self.sizes[..i].iter().sum()
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        let o = self.offset(i);
        o..o + self.sizes[i]
    }

    pub fn concat(&self, other: &BlockPartition) -> BlockPartition {
        let mut sizes = self.sizes.clone();
        sizes.extend_from_slice(&other.sizes);
        BlockPartition { sizes }
    }
}

/// Dense matrix together with a row and column block partition.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMat {
    pub data: Mat,
    pub rows: BlockPartition,
    pub cols: BlockPartition,
}

impl BlockMat {
    pub fn zeros(rows: BlockPartition, cols: BlockPartition) -> Self {
        let data = Mat::zeros(rows.total(), cols.total());
        Self { data, rows, cols }
    }

    pub fn from_mat(data: Mat, rows: BlockPartition, cols: BlockPartition) -> Result<Self> {
        if data.nrows() != rows.total() || data.ncols() != cols.total() {
            return Err(NumError::Dimension(format!(
                "{}x{} matrix vs partition {}x{}",
                data.nrows(),
                data.ncols(),
                rows.total(),
                cols.total()
            )));
        }
        Ok(Self { data, rows, cols })
    }

    pub fn block_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn block_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn block(&self, i: usize, j: usize) -> Mat {
        let (r, c) = (self.rows.range(i), self.cols.range(j));
        self.data.view((r.start, c.start), (r.len(), c.len())).into_owned()
    }

    pub fn set_block(&mut self, i: usize, j: usize, b: &Mat) {
        let (r, c) = (self.rows.range(i), self.cols.range(j));
        assert_eq!((b.nrows(), b.ncols()), (r.len(), c.len()), "block shape");
        self.data.view_mut((r.start, c.start), (r.len(), c.len())).copy_from(b);
    }

    pub fn block_norm(&self, i: usize, j: usize) -> f64 {
        let (r, c) = (self.rows.range(i), self.cols.range(j));
        self.data.view((r.start, c.start), (r.len(), c.len())).norm()
    }
}

pub fn eye(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> Mat {
    Mat::zeros(r, c)
}

/// `M + Mᵀ`.
pub fn he(m: &Mat) -> Mat {
    m + m.transpose()
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Mat) -> bool {
    m.is_square() && (m - m.transpose()).norm() <= 1e-12 * (1.0 + m.norm())
}

/// Block-diagonal concatenation.
pub fn blkdiag(blocks: &[Mat]) -> Mat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), (b.nrows(), b.ncols())).copy_from(b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

/// Assemble a dense matrix from a grid of blocks. Row heights and column
/// widths are taken from the first block that fixes them.
pub fn block_grid(grid: &[Vec<Mat>]) -> Mat {
    if grid.is_empty() {
        return Mat::zeros(0, 0);
    }
    let heights: Vec<usize> = grid.iter().map(|row| row[0].nrows()).collect();
    let widths: Vec<usize> = grid[0].iter().map(|b| b.ncols()).collect();
    let mut out = Mat::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r = 0;
    for (i, row) in grid.iter().enumerate() {
        let mut c = 0;
        for (j, b) in row.iter().enumerate() {
            assert_eq!((b.nrows(), b.ncols()), (heights[i], widths[j]), "block ({i},{j})");
            out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
            c += widths[j];
        }
        r += heights[i];
    }
    out
}

pub(crate) fn to_faer(m: &Mat) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Eigenvalues of a general real square matrix, unordered.
pub fn eigvals(m: &Mat) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(NumError::NotSquare(m.nrows(), m.ncols()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(NumError::Eigen);
    }
    let ev = to_faer(m).eigenvalues().map_err(|_| NumError::Eigen)?;
    Ok(ev.into_iter().map(|z| Complex::new(z.re, z.im)).collect())
}

/// Eigenvalues of a symmetric matrix in nondecreasing order.
pub fn sym_eigvals(m: &Mat) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(NumError::NotSquare(m.nrows(), m.ncols()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(NumError::Eigen);
    }
    to_faer(&symmetrize(m))
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|_| NumError::Eigen)
}

/// Largest eigenvalue of a symmetric matrix (`-inf` for an empty matrix,
/// `+inf` when the matrix holds non-finite entries).
pub fn lambda_max(m: &Mat) -> f64 {
    match sym_eigvals(m) {
        Ok(ev) => ev.last().copied().unwrap_or(f64::NEG_INFINITY),
        Err(_) => f64::INFINITY,
    }
}

pub fn lambda_min(m: &Mat) -> f64 {
    match sym_eigvals(m) {
        Ok(ev) => ev.first().copied().unwrap_or(f64::INFINITY),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// True iff `λ_max(M) < -margin`.
pub fn is_negdef(m: &Mat, margin: f64) -> bool {
    lambda_max(m) < -margin
}

pub fn spectral_abscissa(a: &Mat) -> Result<f64> {
    Ok(eigvals(a)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_hurwitz(a: &Mat) -> bool {
    a.nrows() == 0 || spectral_abscissa(a).map(|s| s < 0.0).unwrap_or(false)
}

/// Largest singular value.
pub fn sigma_max(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

fn sigma_max_c(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Matrix sign function by the scaled Newton iteration.
pub fn sign_function(m: &Mat) -> Result<Mat> {
    let n = m.nrows();
    let mut z = m.clone();
    for _ in 0..100 {
        let lu = z.clone().lu();
        let logdet: f64 = lu.u().diagonal().iter().map(|d| d.abs().ln()).sum();
        if !logdet.is_finite() {
            return Err(NumError::Singular);
        }
        let zi = lu.try_inverse().ok_or(NumError::Singular)?;
        let c = (logdet / n as f64).exp().sqrt();
        let next = (&z / c + &zi * c) * 0.5;
        let diff = (&next - &z).norm();
        z = next;
        if diff <= 1e-13 * z.norm() {
            break;
        }
    }
    Ok(z)
}

/// Stabilizing solution of `AᵀX + XA − X B Rw⁻¹ Bᵀ X + Qw = 0`.
pub fn care_solve(a: &Mat, b: &Mat, qw: &Mat, rw: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || qw.shape() != (n, n) || rw.shape() != (b.ncols(), b.ncols()) {
        return Err(NumError::Dimension("care_solve operands".into()));
    }
    let rinv = rw.clone().try_inverse().ok_or(NumError::Singular)?;
    let g = b * &rinv * b.transpose();
    let ham = block_grid(&[vec![a.clone(), -&g], vec![-qw, -a.transpose()]]);
    let scale = 1.0 + ham.norm();
    let ev = eigvals(&ham)?;
    if ev.iter().any(|z| z.re.abs() <= 1e-10 * scale) {
        return Err(NumError::NoStabilizingSolution(
            "Hamiltonian has eigenvalues on the imaginary axis".into(),
        ));
    }
    let w = sign_function(&ham)?;
    let w11 = w.view((0, 0), (n, n));
    let w12 = w.view((0, n), (n, n));
    let w21 = w.view((n, 0), (n, n));
    let w22 = w.view((n, n), (n, n));
    let lhs = block_grid(&[vec![w12.into_owned()], vec![w22 + eye(n)]]);
    let rhs = -block_grid(&[vec![w11 + eye(n)], vec![w21.into_owned()]]);
    let svd = lhs.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-10 * smax.max(1.0) {
        return Err(NumError::NoStabilizingSolution("stable subspace is not a graph".into()));
    }
    let x = symmetrize(&svd.solve(&rhs, 0.0).map_err(|_| NumError::Singular)?);
    let res = a.transpose() * &x + &x * a - &x * &g * &x + qw;
    if res.norm() > 1e-8 * (1.0 + x.norm()) {
        return Err(NumError::NoStabilizingSolution(format!("residual {:.3e}", res.norm())));
    }
    if !is_hurwitz(&(a - &g * &x)) {
        return Err(NumError::NoStabilizingSolution("closed loop not Hurwitz".into()));
    }
    Ok(x)
}

/// Solution of `AᵀX + XA + Q = 0` by Kronecker vectorization (small n).
pub fn lyap_solve(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let at = a.transpose();
    let i = eye(n);
    let k = at.kronecker(&i) + i.kronecker(&at);
    let rhs = -Vector::from_column_slice(q.as_slice());
    let sol = k.lu().solve(&rhs).ok_or(NumError::Singular)?;
    Ok(symmetrize(&Mat::from_column_slice(n, n, sol.as_slice())))
}

/// `C (jωI − A)⁻¹ B + D`.
pub fn freq_response(ss: &StateSpace, w: f64) -> Result<CMat> {
    let n = ss.a.nrows();
    let cd = ss.d.map(|v| Complex::new(v, 0.0));
    if n == 0 {
        return Ok(cd);
    }
    let m = CMat::from_fn(n, n, |i, j| {
        let re = -ss.a[(i, j)];
        Complex::new(re, if i == j { w } else { 0.0 })
    });
    let bc = ss.b.map(|v| Complex::new(v, 0.0));
    let x = m.lu().solve(&bc).ok_or(NumError::Singular)?;
    Ok(ss.c.map(|v| Complex::new(v, 0.0)) * x + cd)
}

pub fn gain_at(ss: &StateSpace, w: f64) -> f64 {
    freq_response(ss, w).map(|g| sigma_max_c(&g)).unwrap_or(f64::INFINITY)
}

/// Frequencies at which the γ-Hamiltonian has imaginary-axis eigenvalues.
fn crossing_freqs(ss: &StateSpace, gamma: f64) -> Result<Vec<f64>> {
    let (a, b, c, d) = (&ss.a, &ss.b, &ss.c, &ss.d);
    let m = b.ncols();
    let l = c.nrows();
    let r = eye(m) * (gamma * gamma) - d.transpose() * d;
    let ri = r.try_inverse().ok_or(NumError::Singular)?;
    let ac = a + b * &ri * d.transpose() * c;
    let top_right = b * &ri * b.transpose();
    let bot_left = -(c.transpose() * (eye(l) + d * &ri * d.transpose()) * c);
    let ham = block_grid(&[vec![ac.clone(), top_right], vec![bot_left, -ac.transpose()]]);
    let scale = 1.0 + ham.norm();
    let mut ws: Vec<f64> = eigvals(&ham)?
        .into_iter()
        .filter(|z| z.re.abs() <= 1e-8 * scale.max(z.norm()) && z.im >= 0.0)
        .map(|z| z.im)
        .collect();
    ws.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(ws)
}

/// H∞ norm by Hamiltonian bisection with relative accuracy `tol`.
pub fn hinf_norm(ss: &StateSpace, tol: f64) -> Result<f64> {
    let n = ss.a.nrows();
    let dnorm = sigma_max(&ss.d);
    if n == 0 {
        return Ok(dnorm);
    }
    let abscissa = spectral_abscissa(&ss.a)?;
    if abscissa >= 0.0 {
        return Err(NumError::NotHurwitz(abscissa));
    }
    let mut lb = dnorm.max(gain_at(ss, 0.0));
    for z in eigvals(&ss.a)? {
        lb = lb.max(gain_at(ss, z.norm())).max(gain_at(ss, z.im.abs()));
    }
    if lb <= f64::MIN_POSITIVE {
        let probe = (0..40).map(|k| gain_at(ss, 10f64.powf(-4.0 + 0.2 * k as f64))).fold(0.0, f64::max);
        if probe <= f64::MIN_POSITIVE {
            return Ok(0.0);
        }
        lb = probe;
    }
    let tol = tol.max(1e-14);
    let mut ub = lb * 2.0;
    let mut guard = 0;
    while !crossing_freqs(ss, ub)?.is_empty() {
        lb = ub;
        ub *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(NumError::Eigen);
        }
    }
    while ub - lb > tol * lb {
        let mid = 0.5 * (lb + ub);
        let ws = crossing_freqs(ss, mid)?;
        if ws.is_empty() {
            ub = mid;
        } else {
            let mut best = lb.max(mid);
            for w in &ws {
                best = best.max(gain_at(ss, *w));
            }
            for pair in ws.windows(2) {
                best = best.max(gain_at(ss, 0.5 * (pair[0] + pair[1])));
            }
            lb = best.min(ub);
        }
    }
    Ok(0.5 * (lb + ub))
}

/// Exact hexadecimal rendering of an `f64`, e.g. `0x1.8p+1` for 3.0.
pub fn fmt_hex(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let man = bits & ((1u64 << 52) - 1);
    if exp == 0 && man == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, e) = if exp == 0 { (0, -1022) } else { (1, exp - 1023) };
    let mut digits = format!("{man:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let frac = if digits.is_empty() { String::new() } else { format!(".{digits}") };
    let esign = if e >= 0 { "+" } else { "-" };
    format!("{sign}0x{lead}{frac}p{esign}{}", e.abs())
}

/// Inverse of [`fmt_hex`]. Also accepts plain decimal literals.
pub fn parse_hex(s: &str) -> Option<f64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let apply = |v: f64| if neg { -v } else { v };
    match body {
        "nan" => return Some(f64::NAN),
        "inf" => return Some(apply(f64::INFINITY)),
        _ => {}
    }
    let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) else {
        return s.parse().ok();
    };
    let (mant, exp) = hex.split_once(['p', 'P'])?;
    let exp: i64 = exp.parse().ok()?;
    let (int_part, frac_part) = mant.split_once('.').unwrap_or((mant, ""));
    let lead = u64::from_str_radix(int_part, 16).ok()?;
    if frac_part.len() > 13 || lead > 1 {
        return None;
    }
    let mut frac = if frac_part.is_empty() { 0 } else { u64::from_str_radix(frac_part, 16).ok()? };
    frac <<= 4 * (13 - frac_part.len());
    let bits = if lead == 0 {
        if frac == 0 {
            0
        } else if exp == -1022 {
            frac
        } else {
            return None;
        }
    } else {
        let be = exp + 1023;
        if !(1..=2046).contains(&be) {
            return None;
        }
        ((be as u64) << 52) | frac
    };
    Some(apply(f64::from_bits(bits)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ss(a: f64, b: f64, c: f64, d: f64) -> StateSpace {
        StateSpace::new(
            Mat::from_element(1, 1, a),
            Mat::from_element(1, 1, b),
            Mat::from_element(1, 1, c),
            Mat::from_element(1, 1, d),
        )
        .unwrap()
    }

    fn sorted_re(mut v: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
        v.sort_by(|x, y| (x.re, x.im).partial_cmp(&(y.re, y.im)).unwrap());
        v
    }

    #[test]
    fn eigvals_examples() {
        let e = eigvals(&eye(2)).unwrap();
        assert!(e.iter().all(|z| (z.re - 1.0).abs() < 1e-12 && z.im.abs() < 1e-12));
        let rot = Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let e = sorted_re(eigvals(&rot).unwrap());
        let mut ims: Vec<f64> = e.iter().map(|z| z.im).collect();
        ims.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ims[0] + 1.0).abs() < 1e-12 && (ims[1] - 1.0).abs() < 1e-12);
        let an = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        let e = sorted_re(eigvals(&an).unwrap());
        let r5 = 5f64.sqrt();
        assert!((e[0].re - (3.0 - r5) / 2.0).abs() < 1e-12);
        assert!((e[1].re - (3.0 + r5) / 2.0).abs() < 1e-12);
        assert!(eigvals(&Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn negdef_examples() {
        assert!(is_negdef(&(-eye(3)), 0.0));
        assert!(!is_negdef(&Mat::zeros(2, 2), 0.0));
        let m = Mat::from_diagonal(&Vector::from_vec(vec![-1.0, -1e-9]));
        assert!(!is_negdef(&m, 1e-8));
    }

    #[test]
    fn care_examples() {
        let one = Mat::from_element(1, 1, 1.0);
        let x = care_solve(&Mat::zeros(1, 1), &one, &one, &one).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-10);
        let x = care_solve(&(-&one), &Mat::zeros(1, 1), &one, &one).unwrap();
        assert!((x[(0, 0)] - 0.5).abs() < 1e-10);
        assert!(care_solve(&one, &Mat::zeros(1, 1), &one, &one).is_err());
    }

    #[test]
    fn care_double_integrator() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let x = care_solve(&a, &b, &eye(2), &eye(1)).unwrap();
        let s3 = 3f64.sqrt();
        let expect = Mat::from_row_slice(2, 2, &[s3, 1.0, 1.0, s3]);
        assert!((x - expect).norm() < 1e-9);
    }

    #[test]
    fn lyapunov_residual() {
        let a = Mat::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let x = lyap_solve(&a, &eye(2)).unwrap();
        let r = a.transpose() * &x + &x * &a + eye(2);
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn hinf_examples() {
        assert!((hinf_norm(&ss(-1.0, 1.0, 1.0, 0.0), 1e-9).unwrap() - 1.0).abs() < 1e-8);
        assert!((hinf_norm(&ss(-1.0, 1.0, 1.0, 1.0), 1e-9).unwrap() - 2.0).abs() < 1e-8);
        let stat = StateSpace::new(
            Mat::zeros(0, 0),
            Mat::zeros(0, 2),
            Mat::zeros(2, 0),
            Mat::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        assert!((hinf_norm(&stat, 1e-9).unwrap() - 3.0).abs() < 1e-12);
        assert!(matches!(hinf_norm(&ss(1.0, 1.0, 1.0, 0.0), 1e-6), Err(NumError::NotHurwitz(_))));
    }

    #[test]
    fn hinf_resonant_peak() {
        // lightly damped oscillator: peak 1/(2ζ sqrt(1-ζ²)) at ω_n = 1
        let z = 0.05;
        let sys = StateSpace::new(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0 * z]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
            Mat::zeros(1, 1),
        )
        .unwrap();
        let expect = 1.0 / (2.0 * z * (1.0 - z * z).sqrt());
        assert!((hinf_norm(&sys, 1e-10).unwrap() - expect).abs() < 1e-7 * expect);
    }

    #[test]
    fn hex_examples() {
        assert_eq!(fmt_hex(3.0), "0x1.8p+1");
        assert_eq!(fmt_hex(-0.5), "-0x1p-1");
        assert_eq!(fmt_hex(0.0), "0x0p+0");
        assert_eq!(parse_hex("0x1.8p+1"), Some(3.0));
        assert_eq!(parse_hex("2.5"), Some(2.5));
        assert_eq!(parse_hex("-inf"), Some(f64::NEG_INFINITY));
    }

    proptest! {
        #[test]
        fn hex_roundtrip(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(!v.is_nan());
            let back = parse_hex(&fmt_hex(v)).unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
        }

        #[test]
        fn eigvals_transpose_agree(entries in proptest::collection::vec(-5.0f64..5.0, 16)) {
            let m = Mat::from_row_slice(4, 4, &entries);
            let a = sorted_re(eigvals(&m).unwrap());
            let b = sorted_re(eigvals(&m.transpose()).unwrap());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).norm() < 1e-9 * (1.0 + x.norm()));
            }
        }

        #[test]
        fn care_closed_loop_hurwitz(entries in proptest::collection::vec(-3.0f64..3.0, 12)) {
            let a = Mat::from_row_slice(3, 3, &entries[..9]);
            let b = Mat::from_row_slice(3, 1, &entries[9..]);
            if let Ok(x) = care_solve(&a, &b, &eye(3), &eye(1)) {
                prop_assert!(is_hurwitz(&(&a - &b * b.transpose() * &x)));
                prop_assert!(lambda_min(&x) > -1e-9);
            }
        }
    }
}
