//! Dense complex linear algebra shared by every construction in the crate.
//!
//! Operators are stored as [`CMatrix`] (an `nalgebra` dense matrix of
//! `Complex64`). Spaces of operators are vectorized by column stacking, which
//! is also `nalgebra`'s native storage order, so `as_slice` of a matrix is its
//! vectorization.
//!
//! Every rank decision goes through [`RankCut`], which records the cut and the
//! spectral gap around it so callers and tests can see how well separated the
//! decision was.

use nalgebra::{DMatrix, DVector, Dyn, SymmetricEigen, SVD};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative tolerance used for rank decisions unless a caller overrides it.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Absolute noise level, relative to input magnitude, below which a singular
/// value is treated as zero regardless of the relative cut.
pub const NOISE_FLOOR: f64 = 1e-13;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Matrix unit `E_{ij}` (zero-based) of the given shape.
pub fn matrix_unit(rows: usize, cols: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols);
    m[(i, j)] = c(1.0);
    m
}

pub fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &[C64], rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_column_slice(rows, cols, v)
}

/// Hilbert–Schmidt inner product `trace(a* b)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x.conj() * y).sum()
}

/// Largest singular value.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    svd(m, false, false).singular_values.iter().cloned().fold(0.0, f64::max)
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `a ⊗ I_m`.
pub fn kron_identity(a: &CMatrix, m: usize) -> CMatrix {
    a.kronecker(&identity(m))
}

pub fn hcat(blocks: &[CMatrix]) -> CMatrix {
    assert!(!blocks.is_empty());
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows);
        out.view_mut((0, at), (rows, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    out
}

pub fn vcat(blocks: &[CMatrix]) -> CMatrix {
    assert!(!blocks.is_empty());
    let cols = blocks[0].ncols();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols);
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(b);
        at += b.nrows();
    }
    out
}

pub fn block_diag(blocks: &[CMatrix]) -> CMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let (mut r, mut k) = (0, 0);
    for b in blocks {
        out.view_mut((r, k), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        k += b.ncols();
    }
    out
}

pub(crate) fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5)
}

/// Deterministic generator for the internal randomized steps (generating sets,
/// spectral separation). Seeded by a per-call-site tag.
pub(crate) fn seeded_rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x7e1a_5eed ^ tag)
}

/// Iteration cap for the implicit QR sweeps; `nalgebra` loops forever by
/// default. Convergent runs need a small multiple of the dimension.
fn qr_max_iter(n: usize) -> usize {
    200 + 30 * n
}
const QR_EPS: f64 = 5.0 * f64::EPSILON;

/// Accepted backward error of a decomposition, relative to the input norm.
fn decomp_accept(n: usize) -> f64 {
    1e-11 * (n as f64).max(1.0)
}

fn svd_backward(m: &CMatrix, s: &SVD<C64, Dyn, Dyn>) -> Option<f64> {
    let (u, v_t) = (s.u.as_ref()?, s.v_t.as_ref()?);
    let k = s.singular_values.len();
    let sigma = CMatrix::from_diagonal(&s.singular_values.map(|x| C64::new(x, 0.0)));
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let backward = (u * sigma * v_t - m).norm() / scale;
    let orth = (u.adjoint() * u - identity(k))
        .norm()
        .max((v_t * v_t.adjoint() - identity(k)).norm());
    Some(backward.max(orth))
}

/// One-sided Jacobi SVD of a matrix with at least as many rows as columns.
/// Slow but unconditionally convergent and accurate; used when the
/// bidiagonal QR iteration misbehaves.
fn jacobi_svd_tall(m: &CMatrix) -> SVD<C64, Dyn, Dyn> {
    let (r, n) = m.shape();
    let mut a = m.clone();
    let mut v = identity(n);
    let negligible = (m.norm() * NOISE_FLOOR * 0.1).powi(2);
    for _ in 0..100 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let (alpha, beta, gamma) = {
                    let s = a.as_slice();
                    let (ci, cj) = (&s[i * r..(i + 1) * r], &s[j * r..(j + 1) * r]);
                    let mut g = C64::new(0.0, 0.0);
                    let (mut al, mut be) = (0.0, 0.0);
                    for (x, y) in ci.iter().zip(cj) {
                        al += x.norm_sqr();
                        be += y.norm_sqr();
                        g += x.conj() * y;
                    }
                    (al, be, g)
                };
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() || alpha.min(beta) <= negligible {
                    continue;
                }
                rotated = true;
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate_columns(&mut a, i, j, cs, sn, phase);
                rotate_columns(&mut v, i, j, cs, sn, phase);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|k| a.column(k).norm()).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let top = norms.iter().cloned().fold(0.0, f64::max);
    let mut u_cols: Vec<CVector> = Vec::new();
    for &k in &order {
        if norms[k] > top * 1e-10 {
            let mut x = a.column(k) / c(norms[k]);
            for q in &u_cols {
                x -= q * q.dotc(&x);
            }
            let nx = x.norm();
            if nx > 0.5 {
                u_cols.push(x / c(nx));
                continue;
            }
        }
        break;
    }
    // Complete to an orthonormal family of `n` columns; the trailing
    // Householder vectors of `[U | 1]` span the orthogonal complement.
    if u_cols.len() < n {
        let k = u_cols.len();
        let mut ext = CMatrix::zeros(r, k + r);
        for (col, q) in u_cols.iter().enumerate() {
            ext.set_column(col, q);
        }
        ext.view_mut((0, k), (r, r)).fill_with_identity();
        let q = ext.qr().q();
        u_cols.extend((k..n).map(|col| q.column(col).into_owned()));
    }
    let u = CMatrix::from_columns(&u_cols);
    let v_sorted = CMatrix::from_columns(&order.iter().map(|&k| v.column(k).into_owned()).collect::<Vec<_>>());
    let sv = DVector::from_iterator(n, order.iter().map(|&k| norms[k]));
    SVD {
        u: Some(u),
        v_t: Some(v_sorted.adjoint()),
        singular_values: sv,
    }
}

fn rotate_columns(mat: &mut CMatrix, i: usize, j: usize, cs: f64, sn: f64, phase: C64) {
    let r = mat.nrows();
    let (head, tail) = mat.as_mut_slice().split_at_mut(j * r);
    for (x, y) in head[i * r..(i + 1) * r].iter_mut().zip(&mut tail[..r]) {
        let (xi, yj) = (*x, *y * phase);
        *x = xi * cs - yj * sn;
        *y = xi * sn + yj * cs;
    }
}

fn jacobi_svd(m: &CMatrix) -> SVD<C64, Dyn, Dyn> {
    if m.nrows() >= m.ncols() {
        jacobi_svd_tall(m)
    } else {
        let t = jacobi_svd_tall(&m.adjoint());
        SVD {
            u: t.v_t.map(|vt| vt.adjoint()),
            v_t: t.u.map(|u| u.adjoint()),
            singular_values: t.singular_values,
        }
    }
}

/// Singular value decomposition (thin, descending) that always terminates
/// and is checked for backward error. `nalgebra`'s QR iteration is tried
/// first and replaced by one-sided Jacobi when it stalls or is inaccurate.
pub fn svd(m: &CMatrix, want_u: bool, want_v: bool) -> SVD<C64, Dyn, Dyn> {
    let accept = decomp_accept(m.nrows().max(m.ncols()));
    let mut s = SVD::try_new(m.clone(), true, true, QR_EPS, qr_max_iter(m.nrows().max(m.ncols())))
        .filter(|s| svd_backward(m, s).is_some_and(|b| b < accept))
        .unwrap_or_else(|| jacobi_svd(m));
    if !want_u {
        s.u = None;
    }
    if !want_v {
        s.v_t = None;
    }
    s
}

/// Eigendecomposition of the Hermitian part of `m`, with the same
/// guarantees as [`svd`]. The fallback diagonalizes the shifted positive
/// matrix `h + ‖h‖·1` by Jacobi SVD and reads eigenvalues off as Rayleigh
/// quotients.
pub fn hermitian_eigen(m: &CMatrix) -> SymmetricEigen<C64, Dyn> {
    let h = hermitian_part(m);
    let n = h.nrows();
    let scale = h.norm().max(f64::MIN_POSITIVE);
    let accept = decomp_accept(n);
    if let Some(e) = SymmetricEigen::try_new(h.clone(), QR_EPS, qr_max_iter(n)) {
        let v = &e.eigenvectors;
        let lambda = CMatrix::from_diagonal(&e.eigenvalues.map(|x| C64::new(x, 0.0)));
        let backward = (&h * v - v * lambda).norm() / scale;
        let orth = (v.adjoint() * v - identity(n)).norm();
        if backward.max(orth) < accept {
            return e;
        }
    }
    jacobi_eigen(&h)
}

fn jacobi_eigen(h: &CMatrix) -> SymmetricEigen<C64, Dyn> {
    let n = h.nrows();
    let s = jacobi_svd(&(h + identity(n) * c(h.norm())));
    let v = s.v_t.expect("computed").adjoint();
    let eigenvalues = DVector::from_iterator(n, (0..n).map(|k| v.column(k).dotc(&(h * v.column(k))).re));
    SymmetricEigen {
        eigenvectors: v,
        eigenvalues,
    }
}

/// Outcome of a rank decision against a relative cut.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankCut {
    pub rank: usize,
    pub cut: f64,
    pub largest: f64,
    pub smallest_kept: Option<f64>,
    pub largest_dropped: Option<f64>,
}

impl RankCut {
    /// Decide the rank of a list of nonnegative spectral values.
    ///
    /// With `strict` set, a value inside `(cut/10, 10*cut)` is an error.
    pub fn decide(values: &[f64], tol: f64, context: &str, strict: bool) -> Result<RankCut> {
        Self::decide_with_floor(values, tol, 0.0, context, strict)
    }

    /// As [`RankCut::decide`], with an absolute lower bound on the cut so
    /// that a list consisting only of rounding noise has rank zero.
    pub fn decide_with_floor(values: &[f64], tol: f64, floor: f64, context: &str, strict: bool) -> Result<RankCut> {
        let largest = values.iter().cloned().fold(0.0, f64::max);
        let cut = (tol * largest).max(floor);
        let mut kept: Option<f64> = None;
        let mut dropped: Option<f64> = None;
        let mut rank = 0;
        for &v in values {
            if largest > 0.0 && v > cut {
                rank += 1;
                kept = Some(kept.map_or(v, |k: f64| k.min(v)));
            } else {
                dropped = Some(dropped.map_or(v, |d: f64| d.max(v)));
            }
            if strict && largest > 0.0 && v > cut / 10.0 && v < cut * 10.0 {
                return Err(Error::ToleranceAmbiguity {
                    context: context.to_string(),
                    value: v,
                    cut,
                });
            }
        }
        Ok(RankCut {
            rank,
            cut,
            largest,
            smallest_kept: kept,
            largest_dropped: dropped,
        })
    }

    /// Ratio between the smallest kept and the largest dropped value.
    pub fn gap(&self) -> f64 {
        match (self.smallest_kept, self.largest_dropped) {
            (Some(k), Some(d)) if d > 0.0 => k / d,
            _ => f64::INFINITY,
        }
    }
}

/// A subspace of `B(C^cols, C^rows)` with a Hilbert–Schmidt orthonormal basis.
#[derive(Debug, Clone)]
pub struct OperatorSpace {
    rows: usize,
    cols: usize,
    basis: Vec<CMatrix>,
    /// Vectorized basis, one column per basis element.
    vecs: CMatrix,
}

impl OperatorSpace {
    /// Span of `mats`, orthonormalized. Rank is decided by singular values.
    pub fn span(rows: usize, cols: usize, mats: &[CMatrix], tol: f64) -> Result<Self> {
        for m in mats {
            if m.shape() != (rows, cols) {
                return Err(Error::dims(
                    "hs_orthonormalize",
                    format!("{rows}x{cols}"),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ));
            }
            if !all_finite(m) {
                return Err(Error::Validation("non-finite matrix entry".into()));
            }
        }
        let (space, _) = orthonormalize_checked(rows, cols, mats, tol)?;
        Ok(space)
    }

    /// Builds a space from a basis already known to be HS-orthonormal.
    pub(crate) fn from_orthonormal(rows: usize, cols: usize, basis: Vec<CMatrix>) -> Self {
        let n = rows * cols;
        let mut vecs = CMatrix::zeros(n, basis.len());
        for (k, b) in basis.iter().enumerate() {
            vecs.column_mut(k).copy_from_slice(b.as_slice());
        }
        OperatorSpace {
            rows,
            cols,
            basis,
            vecs,
        }
    }

    pub(crate) fn from_vecs(rows: usize, cols: usize, vecs: CMatrix) -> Self {
        let basis = (0..vecs.ncols())
            .map(|k| unvectorize(vecs.column(k).as_slice(), rows, cols))
            .collect();
        OperatorSpace {
            rows,
            cols,
            basis,
            vecs,
        }
    }

    /// All of `B(C^cols, C^rows)`, basis of matrix units in column-stacked order.
    pub fn full(rows: usize, cols: usize) -> Self {
        let mut basis = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                basis.push(matrix_unit(rows, cols, i, j));
            }
        }
        Self::from_orthonormal(rows, cols, basis)
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        Self::from_orthonormal(rows, cols, Vec::new())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    pub fn vecs(&self) -> &CMatrix {
        &self.vecs
    }

    /// HS coefficients of `m` against the basis.
    pub fn coeffs(&self, m: &CMatrix) -> CVector {
        debug_assert_eq!(m.shape(), (self.rows, self.cols));
        let v = CVector::from_column_slice(m.as_slice());
        self.vecs.ad_mul(&v)
    }

    pub fn combine(&self, coeffs: &[C64]) -> CMatrix {
        let v = &self.vecs * CVector::from_column_slice(coeffs);
        unvectorize(v.as_slice(), self.rows, self.cols)
    }

    pub fn project(&self, m: &CMatrix) -> CMatrix {
        let k = self.coeffs(m);
        self.combine(k.as_slice())
    }

    /// Frobenius distance from `m` to the space.
    pub fn residual(&self, m: &CMatrix) -> f64 {
        if m.shape() != (self.rows, self.cols) {
            return f64::INFINITY;
        }
        (m - self.project(m)).norm()
    }

    pub fn contains(&self, m: &CMatrix, tol: f64) -> bool {
        self.residual(m) <= tol * m.norm().max(1.0)
    }

    /// Applies `f` to every basis element and returns the images.
    pub fn map_basis<F: FnMut(&CMatrix) -> CMatrix>(&self, f: F) -> Vec<CMatrix> {
        self.basis.iter().map(f).collect()
    }
}

/// Orthonormalizes `mats`, returning the space and the rank decision.
///
/// Inputs are processed in order by two-pass Gram–Schmidt so that a list that
/// is already orthonormal comes back unchanged; the number kept is checked
/// against the SVD rank and the SVD basis is used if they disagree.
pub fn orthonormalize_checked(
    rows: usize,
    cols: usize,
    mats: &[CMatrix],
    tol: f64,
) -> Result<(OperatorSpace, RankCut)> {
    let n = rows * cols;
    if mats.is_empty() || n == 0 {
        let cut = RankCut::decide(&[], tol, "hs_orthonormalize", true)?;
        return Ok((OperatorSpace::zero(rows, cols), cut));
    }
    let mut a = CMatrix::zeros(n, mats.len());
    for (k, m) in mats.iter().enumerate() {
        a.column_mut(k).copy_from_slice(m.as_slice());
    }
    let need_u = mats.len() > 1;
    let svd = svd(&a, need_u, false);
    let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let cut = RankCut::decide(&sv, tol, "hs_orthonormalize", true)?;

    let mut kept: Vec<CVector> = Vec::new();
    for k in 0..mats.len() {
        let mut v: CVector = a.column(k).into_owned();
        for _ in 0..2 {
            for q in &kept {
                let p = q.dotc(&v);
                v -= q * p;
            }
        }
        let r = v.norm();
        if r > cut.cut && cut.largest > 0.0 {
            kept.push(v / c(r));
        }
    }
    let vecs = if kept.len() == cut.rank {
        if kept.is_empty() {
            CMatrix::zeros(n, 0)
        } else {
            CMatrix::from_columns(&kept)
        }
    } else {
        let u = svd.u.expect("left singular vectors requested");
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
        let cols_u: Vec<CVector> = order[..cut.rank].iter().map(|&i| u.column(i).into_owned()).collect();
        if cols_u.is_empty() {
            CMatrix::zeros(n, 0)
        } else {
            CMatrix::from_columns(&cols_u)
        }
    };
    Ok((OperatorSpace::from_vecs(rows, cols, vecs), cut))
}

/// Orthonormalizes a nonempty list of equally shaped matrices.
pub fn hs_orthonormalize(mats: &[CMatrix], tol: f64) -> Result<OperatorSpace> {
    let first = mats
        .first()
        .ok_or_else(|| Error::dims("hs_orthonormalize", "at least one matrix", "none"))?;
    OperatorSpace::span(first.nrows(), first.ncols(), mats, tol)
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn nullspace(m: &CMatrix, tol: f64) -> (CMatrix, RankCut) {
    nullspace_with_floor(m, tol, 0.0)
}

/// Null space where singular values below `floor` always count as zero.
pub fn nullspace_with_floor(m: &CMatrix, tol: f64, floor: f64) -> (CMatrix, RankCut) {
    let cols = m.ncols();
    if cols == 0 {
        let cut = RankCut::decide(&[], tol, "nullspace", false).expect("non-strict");
        return (CMatrix::zeros(0, 0), cut);
    }
    let padded = if m.nrows() < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = svd(&padded, false, true);
    let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let cut = RankCut::decide_with_floor(&sv, tol, floor, "nullspace", false).expect("non-strict");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut null_cols: Vec<(usize, CVector)> = Vec::new();
    for (i, &s) in sv.iter().enumerate() {
        if !(cut.largest > 0.0 && s > cut.cut) {
            null_cols.push((i, v_t.row(i).adjoint()));
        }
    }
    null_cols.sort_by_key(|(i, _)| *i);
    let basis = if null_cols.is_empty() {
        CMatrix::zeros(cols, 0)
    } else {
        let cs: Vec<CVector> = null_cols.into_iter().map(|(_, v)| v).collect();
        CMatrix::from_columns(&cs)
    };
    (basis, cut)
}

/// Solution space of an intertwiner system.
#[derive(Debug, Clone)]
pub struct Intertwiners {
    pub space: OperatorSpace,
    pub cut: RankCut,
}

/// Orthonormal basis of `{X : lefts[i] X = X rights[i] for all i}`.
///
/// `lefts[i]` act on the codomain `H2`, `rights[i]` on the domain `H1`.
pub fn solve_intertwiners(lefts: &[CMatrix], rights: &[CMatrix], tol: f64) -> Result<Intertwiners> {
    if lefts.len() != rights.len() {
        return Err(Error::dims(
            "solve_intertwiners: list lengths",
            lefts.len(),
            rights.len(),
        ));
    }
    if lefts.is_empty() {
        return Err(Error::dims("solve_intertwiners", "at least one constraint", "none"));
    }
    let n2 = lefts[0].nrows();
    let n1 = rights[0].nrows();
    for (a, b) in lefts.iter().zip(rights) {
        if a.shape() != (n2, n2) {
            return Err(Error::dims(
                "solve_intertwiners: left operator",
                format!("{n2}x{n2}"),
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        if b.shape() != (n1, n1) {
            return Err(Error::dims(
                "solve_intertwiners: right operator",
                format!("{n1}x{n1}"),
                format!("{}x{}", b.nrows(), b.ncols()),
            ));
        }
    }
    let nu = n1 * n2;
    let id1 = identity(n1);
    let id2 = identity(n2);
    // Rows are compressed by QR whenever the stack grows past 2*nu; QR keeps
    // the singular values of the stacked system.
    let mut acc: Option<CMatrix> = None;
    for (a, b) in lefts.iter().zip(rights) {
        let m = id1.kronecker(a) - b.transpose().kronecker(&id2);
        let stacked = match acc.take() {
            None => m,
            Some(r) => vcat(&[r, m]),
        };
        acc = Some(if stacked.nrows() > 2 * nu {
            stacked.qr().r()
        } else {
            stacked
        });
    }
    let system = acc.expect("nonempty");
    let scale = lefts
        .iter()
        .zip(rights)
        .map(|(a, b)| a.norm() * (n1 as f64).sqrt() + b.norm() * (n2 as f64).sqrt())
        .fold(0.0, f64::max);
    let (null, cut) = nullspace_with_floor(&system, tol, NOISE_FLOOR * scale);
    Ok(Intertwiners {
        space: OperatorSpace::from_vecs(n2, n1, null),
        cut,
    })
}

/// Square root, pseudo-inverse square root and support projection of a PSD matrix.
#[derive(Debug, Clone)]
pub struct PsdRoots {
    pub sqrt: CMatrix,
    pub pinv_sqrt: CMatrix,
    pub support: CMatrix,
    pub cut: RankCut,
}

pub fn psd_sqrt_pinv(m: &CMatrix, tol: f64) -> Result<PsdRoots> {
    if m.nrows() != m.ncols() {
        return Err(Error::dims(
            "psd_sqrt_pinv",
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    let n = m.nrows();
    let scale = m.norm().max(1.0);
    if (m - m.adjoint()).norm() > tol * scale * 1e3 {
        return Err(Error::Validation("psd_sqrt_pinv: matrix is not Hermitian".into()));
    }
    let eig = hermitian_eigen(m);
    let vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    if let Some(&neg) = vals.iter().find(|&&v| v < -tol * scale) {
        return Err(Error::NotPsd { eigenvalue: neg });
    }
    let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let cut = RankCut::decide(&clipped, tol, "psd_sqrt_pinv", false)?;
    let q = &eig.eigenvectors;
    let keep = |v: f64| cut.largest > 0.0 && v > cut.cut;
    let diag =
        |f: &dyn Fn(f64) -> f64| CMatrix::from_diagonal(&DVector::from_iterator(n, clipped.iter().map(|&v| c(f(v)))));
    let sqrt = q * diag(&|v| v.sqrt()) * q.adjoint();
    let pinv_sqrt = q * diag(&|v| if keep(v) { 1.0 / v.sqrt() } else { 0.0 }) * q.adjoint();
    let support = q * diag(&|v| if keep(v) { 1.0 } else { 0.0 }) * q.adjoint();
    Ok(PsdRoots {
        sqrt,
        pinv_sqrt,
        support,
        cut,
    })
}

/// Compares two operator spaces by the operator norm of the difference of
/// their HS-orthogonal projections.
pub fn subspace_equal(s1: &OperatorSpace, s2: &OperatorSpace, tol: f64) -> Result<(bool, f64)> {
    if (s1.rows, s1.cols) != (s2.rows, s2.cols) {
        return Err(Error::dims(
            "subspace_equal",
            format!("{}x{}", s1.rows, s1.cols),
            format!("{}x{}", s2.rows, s2.cols),
        ));
    }
    let distance = if s1.dim() != s2.dim() {
        1.0
    } else if s1.dim() == 0 {
        0.0
    } else {
        // For equal dimensions ||P1 - P2|| = ||(I - P2) P1||.
        let rest = s1.vecs() - s2.vecs() * s2.vecs().ad_mul(s1.vecs());
        op_norm(&rest).min(1.0)
    };
    Ok((distance <= tol, distance))
}

/// Moore–Penrose pseudo-inverse with relative singular-value cut.
pub fn pinv(m: &CMatrix, tol: f64) -> (CMatrix, RankCut) {
    if m.is_empty() {
        let cut = RankCut::decide(&[], tol, "pinv", false).expect("non-strict");
        return (CMatrix::zeros(m.ncols(), m.nrows()), cut);
    }
    let svd = svd(m, true, true);
    let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let cut = RankCut::decide(&sv, tol, "pinv", false).expect("non-strict");
    let u = svd.u.expect("u");
    let v_t = svd.v_t.expect("v_t");
    let mut out = CMatrix::zeros(m.ncols(), m.nrows());
    for (i, &s) in sv.iter().enumerate() {
        if cut.largest > 0.0 && s > cut.cut {
            out += v_t.row(i).adjoint() * u.column(i).adjoint() * c(1.0 / s);
        }
    }
    (out, cut)
}

/// Isometry onto the range of `m` (columns form an orthonormal basis).
pub fn range_isometry(m: &CMatrix, tol: f64) -> (CMatrix, RankCut) {
    range_isometry_with_floor(m, tol, 0.0)
}

/// Range where singular values below `floor` always count as zero, so that
/// a matrix of pure rounding noise has an empty range.
pub fn range_isometry_with_floor(m: &CMatrix, tol: f64, floor: f64) -> (CMatrix, RankCut) {
    if m.ncols() == 0 {
        let cut = RankCut::decide(&[], tol, "range", false).expect("non-strict");
        return (CMatrix::zeros(m.nrows(), 0), cut);
    }
    let svd = svd(m, true, false);
    let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let cut = RankCut::decide_with_floor(&sv, tol, floor, "range", false).expect("non-strict");
    let u = svd.u.expect("u");
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let cols: Vec<CVector> = order[..cut.rank].iter().map(|&i| u.column(i).into_owned()).collect();
    let w = if cols.is_empty() {
        CMatrix::zeros(m.nrows(), 0)
    } else {
        CMatrix::from_columns(&cols)
    };
    (w, cut)
}

/// Factorization `gram = v* v` with `v` of full row rank, obtained from the
/// eigendecomposition of a PSD Gram matrix with its numerical kernel removed.
#[derive(Debug, Clone)]
pub struct GramQuotient {
    /// `rank x n`; column `k` is the class of the `k`-th spanning vector.
    pub v: CMatrix,
    /// `n x rank`; right inverse of `v`, giving coefficients of quotient vectors.
    pub v_pinv: CMatrix,
    pub cut: RankCut,
}

pub fn gram_quotient(gram: &CMatrix, tol: f64, context: &str) -> Result<GramQuotient> {
    let n = gram.nrows();
    if n == 0 {
        return Ok(GramQuotient {
            v: CMatrix::zeros(0, 0),
            v_pinv: CMatrix::zeros(0, 0),
            cut: RankCut::decide(&[], tol, context, true)?,
        });
    }
    let eig = hermitian_eigen(gram);
    let vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    let largest = vals.iter().cloned().fold(0.0, f64::max);
    if let Some(&neg) = vals.iter().find(|&&v| v < -tol * largest.max(1.0) * 10.0) {
        return Err(Error::NotPsd { eigenvalue: neg });
    }
    let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let cut = RankCut::decide(&clipped, tol, context, true)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| clipped[j].total_cmp(&clipped[i]));
    let r = cut.rank;
    let mut v = CMatrix::zeros(r, n);
    let mut v_pinv = CMatrix::zeros(n, r);
    for (row, &i) in order[..r].iter().enumerate() {
        let s = clipped[i].sqrt();
        let q = eig.eigenvectors.column(i);
        v.row_mut(row).copy_from(&(q.adjoint() * c(s)));
        v_pinv.column_mut(row).copy_from(&(q * c(1.0 / s)));
    }
    Ok(GramQuotient { v, v_pinv, cut })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn e(n: usize, i: usize, j: usize) -> CMatrix {
        matrix_unit(n, n, i, j)
    }

    fn random_matrix(rng: &mut impl Rng, r: usize, k: usize) -> CMatrix {
        CMatrix::from_fn(r, k, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn dependent_inputs_collapse() {
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 0)] = c(1.0);
        let s = hs_orthonormalize(&[a.clone(), a * c(2.0)], DEFAULT_TOL).unwrap();
        assert_eq!(s.dim(), 1);
    }

    #[test]
    fn matrix_units_stay_orthonormal() {
        let s = hs_orthonormalize(&[e(2, 0, 0), e(2, 1, 1)], DEFAULT_TOL).unwrap();
        assert_eq!(s.dim(), 2);
        assert!((s.basis()[0].clone() - e(2, 0, 0)).norm() < 1e-15);
        assert!(hs_inner(&s.basis()[0], &s.basis()[1]).norm() < 1e-15);
    }

    #[test]
    fn rank_matches_svd_oracle() {
        let mut rng = seeded_rng(1);
        let gens: Vec<CMatrix> = (0..3).map(|_| random_matrix(&mut rng, 3, 3)).collect();
        let mats: Vec<CMatrix> = (0..5)
            .map(|_| {
                let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                &gens[0] * c(w[0]) + &gens[1] * c(w[1]) + &gens[2] * c(w[2])
            })
            .collect();
        // Oracle: rank of the stacked vectorizations via an independent SVD.
        let stacked = CMatrix::from_columns(&mats.iter().map(vectorize).collect::<Vec<_>>());
        let sv = stacked.singular_values();
        let oracle = sv.iter().filter(|&&s| s > 1e-9 * sv.max()).count();
        assert_eq!(oracle, 3);
        let s = hs_orthonormalize(&mats, DEFAULT_TOL).unwrap();
        assert_eq!(s.dim(), oracle);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let err = hs_orthonormalize(&[CMatrix::zeros(2, 2), CMatrix::zeros(3, 2)], DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn near_cut_value_is_ambiguous() {
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 0)] = c(1.0);
        let mut b = CMatrix::zeros(2, 2);
        b[(1, 1)] = c(2e-9);
        let err = hs_orthonormalize(&[a, b], DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::ToleranceAmbiguity { .. }));
    }

    #[test]
    fn intertwiners_of_full_matrix_algebra_are_scalars() {
        let basis: Vec<CMatrix> = OperatorSpace::full(3, 3).basis().to_vec();
        let sol = solve_intertwiners(&basis, &basis, DEFAULT_TOL).unwrap();
        assert_eq!(sol.space.dim(), 1);
        let x = &sol.space.basis()[0];
        let scaled = x * (c(1.0) / x[(0, 0)]);
        assert!((scaled - identity(3)).norm() < 1e-10);
    }

    #[test]
    fn intertwiners_of_identity_are_everything() {
        let sol = solve_intertwiners(&[identity(2)], &[identity(3)], DEFAULT_TOL).unwrap();
        assert_eq!(sol.space.dim(), 6);
    }

    #[test]
    fn intertwiners_of_c_plus_m2() {
        let basis = vec![e(3, 0, 0), e(3, 1, 1), e(3, 1, 2), e(3, 2, 1), e(3, 2, 2)];
        let sol = solve_intertwiners(&basis, &basis, DEFAULT_TOL).unwrap();
        // Oracle: brute-force null space of the explicitly vectorized system.
        let mut rows = Vec::new();
        for b in &basis {
            for j in 0..3 {
                for i in 0..3 {
                    let x = e(3, i, j);
                    rows.push(vectorize(&(b * &x - &x * b)));
                }
            }
        }
        let m = CMatrix::from_columns(&rows).transpose();
        let sv = m.clone().singular_values();
        let oracle_null = 9 - sv.iter().filter(|&&s| s > 1e-9).count();
        assert_eq!(oracle_null, 2);
        assert_eq!(sol.space.dim(), 2);
        let expected = OperatorSpace::span(3, 3, &[e(3, 0, 0), e(3, 1, 1) + e(3, 2, 2)], DEFAULT_TOL).unwrap();
        let (eq, d) = subspace_equal(&sol.space, &expected, 1e-10).unwrap();
        assert!(eq, "distance {d}");
    }

    #[test]
    fn intertwiner_residuals_are_small() {
        let mut rng = seeded_rng(2);
        let u = random_matrix(&mut rng, 4, 4);
        let a = vec![u.clone() + u.adjoint()];
        let sol = solve_intertwiners(&a, &a, DEFAULT_TOL).unwrap();
        for x in sol.space.basis() {
            assert!((&a[0] * x - x * &a[0]).norm() <= DEFAULT_TOL * x.norm());
        }
    }

    #[test]
    fn psd_roots_diagonal_and_identity() {
        let id = psd_sqrt_pinv(&identity(3), DEFAULT_TOL).unwrap();
        assert!((id.sqrt - identity(3)).norm() < 1e-12);
        assert!((id.pinv_sqrt - identity(3)).norm() < 1e-12);
        assert!((id.support - identity(3)).norm() < 1e-12);
        let mut d = CMatrix::zeros(2, 2);
        d[(0, 0)] = c(4.0);
        let r = psd_sqrt_pinv(&d, DEFAULT_TOL).unwrap();
        assert!((r.sqrt[(0, 0)] - c(2.0)).norm() < 1e-12);
        assert!((r.pinv_sqrt[(0, 0)] - c(0.5)).norm() < 1e-12);
        assert!((r.support.clone() - e(2, 0, 0)).norm() < 1e-12);
        assert!(r.sqrt[(1, 1)].norm() < 1e-12);
    }

    #[test]
    fn psd_roots_random_gram() {
        let mut rng = seeded_rng(3);
        let a = random_matrix(&mut rng, 2, 4);
        let m = a.adjoint() * &a;
        let r = psd_sqrt_pinv(&m, DEFAULT_TOL).unwrap();
        assert!((&r.sqrt * &r.sqrt - &m).norm() <= 1e-8);
        assert!((&r.support * &m - &m).norm() <= 1e-9);
        assert!((&m * &r.support - &m).norm() <= 1e-9);
        assert!((&r.pinv_sqrt * &m * &r.pinv_sqrt - &r.support).norm() <= 1e-9);
        assert_eq!(r.cut.rank, 2);
    }

    #[test]
    fn negative_eigenvalue_is_not_psd() {
        let err = psd_sqrt_pinv(&(-identity(2)), DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::NotPsd { .. }));
    }

    #[test]
    fn subspace_distances() {
        let s = OperatorSpace::span(2, 2, &[e(2, 0, 0)], DEFAULT_TOL).unwrap();
        let t = OperatorSpace::span(2, 2, &[e(2, 1, 1)], DEFAULT_TOL).unwrap();
        assert_eq!(subspace_equal(&s, &s, 1e-12).unwrap(), (true, 0.0));
        let (eq, d) = subspace_equal(&s, &t, 1e-12).unwrap();
        assert!(!eq);
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_basis_spans_same_space() {
        let mut rng = seeded_rng(4);
        let mats: Vec<CMatrix> = (0..3).map(|_| random_matrix(&mut rng, 3, 2)).collect();
        let s = hs_orthonormalize(&mats, DEFAULT_TOL).unwrap();
        // Random unitary change of basis on the coefficient side.
        let g = random_matrix(&mut rng, 3, 3);
        let q = g.qr().q();
        let rotated: Vec<CMatrix> = (0..3)
            .map(|k| {
                let col: Vec<C64> = q.column(k).iter().cloned().collect();
                s.combine(&col)
            })
            .collect();
        let t = OperatorSpace::span(3, 2, &rotated, DEFAULT_TOL).unwrap();
        let (eq, d) = subspace_equal(&s, &t, 1e-10).unwrap();
        assert!(eq && d <= 1e-10);
    }

    #[test]
    fn gram_quotient_factors_gram() {
        let mut rng = seeded_rng(5);
        let a = random_matrix(&mut rng, 3, 5);
        let g = a.adjoint() * &a;
        let q = gram_quotient(&g, DEFAULT_TOL, "test").unwrap();
        assert_eq!(q.cut.rank, 3);
        assert!((q.v.adjoint() * &q.v - &g).norm() < 1e-10);
        assert!((&q.v * &q.v_pinv - identity(3)).norm() < 1e-10);
    }

    fn svd_backward_error(m: &CMatrix, s: &SVD<C64, Dyn, Dyn>) -> f64 {
        let sigma = CMatrix::from_diagonal(&s.singular_values.map(|x| C64::new(x, 0.0)));
        let (u, v_t) = (s.u.as_ref().unwrap(), s.v_t.as_ref().unwrap());
        let k = sigma.nrows();
        (u * sigma * v_t - m).norm() / m.norm().max(1.0)
            + (u.adjoint() * u - identity(k)).norm()
            + (v_t * v_t.adjoint() - identity(k)).norm()
    }

    #[test]
    fn range_of_rounding_noise_is_empty() {
        let noise = matrix_unit(3, 3, 1, 1) * c(1e-17);
        assert_eq!(range_isometry(&noise, DEFAULT_TOL).0.ncols(), 1);
        assert_eq!(range_isometry_with_floor(&noise, DEFAULT_TOL, NOISE_FLOOR).0.ncols(), 0);
        let p = matrix_unit(3, 3, 0, 0) + matrix_unit(3, 3, 2, 2);
        assert_eq!(range_isometry_with_floor(&p, DEFAULT_TOL, NOISE_FLOOR).0.ncols(), 2);
    }

    #[test]
    fn jacobi_svd_is_accurate_on_all_shapes() {
        let mut rng = seeded_rng(7);
        for (r, k, rank) in [(6, 6, 6), (9, 4, 2), (4, 9, 3), (12, 12, 5), (3, 3, 0)] {
            let m = random_matrix(&mut rng, r, rank) * random_matrix(&mut rng, rank, k);
            let s = jacobi_svd(&m);
            assert_eq!(s.singular_values.len(), r.min(k));
            assert!(svd_backward_error(&m, &s) < 1e-12, "{r}x{k} rank {rank}");
            assert!(s.singular_values.as_slice().windows(2).all(|w| w[0] >= w[1]));
            let nonzero = s.singular_values.iter().filter(|&&x| x > 1e-10).count();
            assert_eq!(nonzero, rank);
        }
    }

    #[test]
    fn checked_svd_matches_jacobi_values() {
        let mut rng = seeded_rng(8);
        let m = random_matrix(&mut rng, 7, 3) * random_matrix(&mut rng, 3, 5);
        let a = svd(&m, true, true);
        let b = jacobi_svd(&m);
        assert!(svd_backward_error(&m, &a) < 1e-12);
        assert!((a.singular_values - b.singular_values).norm() < 1e-12);
    }

    #[test]
    fn jacobi_eigen_of_projection_and_random_hermitian() {
        let mut rng = seeded_rng(9);
        let x = random_matrix(&mut rng, 6, 2);
        let p = &x * pinv(&(x.adjoint() * &x), DEFAULT_TOL).0 * x.adjoint();
        let g = random_matrix(&mut rng, 6, 6);
        for h in [p, hermitian_part(&g)] {
            let e = jacobi_eigen(&h);
            let v = &e.eigenvectors;
            let lambda = CMatrix::from_diagonal(&e.eigenvalues.map(|x| C64::new(x, 0.0)));
            assert!((&h * v - v * lambda).norm() < 1e-12);
            assert!((v.adjoint() * v - identity(6)).norm() < 1e-12);
            assert!((e.eigenvalues.sum() - h.trace().re).abs() < 1e-12);
        }
    }
}
