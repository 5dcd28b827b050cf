//! Finite-dimensional C*-algebras, always carried with a concrete unital
//! representation on some `C^n`, together with unital *-homomorphisms between
//! them.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numkernel::{
    c, hermitian_part, identity, kron_identity, matrix_unit, nullspace, nullspace_with_floor, op_norm, seeded_rng,
    solve_intertwiners, subspace_equal, unvectorize, vectorize, CMatrix, CVector, OperatorSpace, C64, NOISE_FLOOR,
};

/// Residual threshold for closure checks, relative to the size of the
/// element being tested.
pub fn check_tol(tol: f64) -> f64 {
    (tol * 100.0).max(1e-12)
}

/// A *-closed unital subalgebra of `M_n`, `n = ambient_dim`.
#[derive(Debug, Clone)]
pub struct FiniteCStarAlgebra {
    ambient_dim: usize,
    space: OperatorSpace,
    /// A small set of self-adjoint elements generating the algebra together
    /// with the identity; used to keep commutant systems small.
    gens: Vec<CMatrix>,
}

impl FiniteCStarAlgebra {
    /// Validates a spanning set as a unital *-algebra on `C^ambient_dim`.
    pub fn from_basis(ambient_dim: usize, mats: &[CMatrix], tol: f64) -> Result<Self> {
        let space = OperatorSpace::span(ambient_dim, ambient_dim, mats, tol)?;
        let alg = Self::trusted(space, tol);
        alg.validate(tol)?;
        Ok(alg)
    }

    /// The unital *-algebra generated by `gens`.
    pub fn generated_by(ambient_dim: usize, gens: &[CMatrix], tol: f64) -> Result<Self> {
        for g in gens {
            if g.shape() != (ambient_dim, ambient_dim) {
                return Err(Error::dims(
                    "generated algebra",
                    format!("{ambient_dim}x{ambient_dim}"),
                    format!("{}x{}", g.nrows(), g.ncols()),
                ));
            }
        }
        let mut sa: Vec<CMatrix> = Vec::new();
        for g in gens {
            sa.push(hermitian_part(g));
            sa.push((g - g.adjoint()) * C64::new(0.0, -0.5));
        }
        let space = word_closure(ambient_dim, &sa, tol);
        Ok(Self::trusted(space, tol))
    }

    /// Wraps a space known to be a unital *-algebra.
    pub(crate) fn trusted(space: OperatorSpace, tol: f64) -> Self {
        let gens = find_generators(&space, tol);
        FiniteCStarAlgebra {
            ambient_dim: space.rows(),
            space,
            gens,
        }
    }

    /// `⊕ M_{n_i} ⊗ I_{m_i}` acting block-diagonally.
    pub fn build_algebra(blocks: &[(usize, usize)]) -> Self {
        let ambient: usize = blocks.iter().map(|&(n, m)| n * m).sum();
        let mut basis = Vec::new();
        let mut offset = 0;
        for &(n, m) in blocks {
            assert!(n >= 1 && m >= 1, "block sizes and multiplicities must be positive");
            let scale = c(1.0 / (m as f64).sqrt());
            for i in 0..n {
                for j in 0..n {
                    let unit = kron_identity(&matrix_unit(n, n, i, j), m);
                    let mut full = CMatrix::zeros(ambient, ambient);
                    full.view_mut((offset, offset), (n * m, n * m))
                        .copy_from(&(unit * scale));
                    basis.push(full);
                }
            }
            offset += n * m;
        }
        Self::trusted(
            OperatorSpace::from_orthonormal(ambient, ambient, basis),
            crate::numkernel::DEFAULT_TOL,
        )
    }

    pub fn full(n: usize) -> Self {
        Self::build_algebra(&[(n, 1)])
    }

    pub fn scalars(n: usize) -> Self {
        Self::build_algebra(&[(1, n)])
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn space(&self) -> &OperatorSpace {
        &self.space
    }

    pub fn basis(&self) -> &[CMatrix] {
        self.space.basis()
    }

    pub fn generators(&self) -> &[CMatrix] {
        &self.gens
    }

    pub fn unit(&self) -> CMatrix {
        identity(self.ambient_dim)
    }

    pub fn contains(&self, m: &CMatrix, tol: f64) -> bool {
        m.shape() == (self.ambient_dim, self.ambient_dim)
            && self.space.residual(m) <= check_tol(tol) * m.norm().max(1.0)
    }

    /// Checks unit, adjoint closure and product closure.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let ct = check_tol(tol);
        let id = self.unit();
        let r = self.space.residual(&id);
        if r > ct * id.norm() {
            return Err(Error::Validation(format!(
                "algebra does not contain the identity (residual {r:.3e})"
            )));
        }
        for (k, b) in self.basis().iter().enumerate() {
            let r = self.space.residual(&b.adjoint());
            if r > ct {
                return Err(Error::Validation(format!(
                    "algebra not closed under adjoint at basis element {k} (residual {r:.3e})"
                )));
            }
        }
        // Products of random combinations detect non-closure with
        // probability one; pairwise products locate the failing pair.
        let mut rng = seeded_rng(11);
        let mut ok = true;
        for _ in 0..3 {
            let x = self.random_element(&mut rng);
            let y = self.random_element(&mut rng);
            let p = &x * &y;
            if self.space.residual(&p) > ct * p.norm().max(1.0) {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(());
        }
        for (i, a) in self.basis().iter().enumerate() {
            for (j, b) in self.basis().iter().enumerate() {
                let p = a * b;
                let r = self.space.residual(&p);
                if r > ct * p.norm().max(1.0) {
                    return Err(Error::Validation(format!(
                        "algebra not closed under products: basis pair ({i}, {j}) leaves the span (residual {r:.3e})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Random element with standard Gaussian complex coefficients.
    pub(crate) fn random_element(&self, rng: &mut impl Rng) -> CMatrix {
        let coeffs: Vec<C64> = (0..self.dim())
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        self.space.combine(&coeffs)
    }

    pub(crate) fn random_self_adjoint(&self, rng: &mut impl Rng) -> CMatrix {
        hermitian_part(&self.random_element(rng))
    }
}

/// Span of all words in `gens` (and the identity), grown breadth-first with
/// incremental orthogonalization.
fn word_closure(n: usize, gens: &[CMatrix], tol: f64) -> OperatorSpace {
    let mut q: Vec<CVector> = Vec::new();
    let mut frontier: Vec<CMatrix> = Vec::new();
    let add = |q: &mut Vec<CVector>, m: &CMatrix| -> Option<CMatrix> {
        let v0 = vectorize(m);
        let scale = v0.norm();
        if scale == 0.0 {
            return None;
        }
        let mut v = v0;
        for _ in 0..2 {
            for b in q.iter() {
                let p = b.dotc(&v);
                v -= b * p;
            }
        }
        let r = v.norm();
        if r > 1e3 * tol * scale {
            let v = v / c(r);
            let m = unvectorize(v.as_slice(), n, n);
            q.push(v);
            Some(m)
        } else {
            None
        }
    };
    if let Some(m) = add(&mut q, &identity(n)) {
        frontier.push(m);
    }
    for g in gens {
        if let Some(m) = add(&mut q, g) {
            frontier.push(m);
        }
    }
    while !frontier.is_empty() && q.len() < n * n {
        let mut next = Vec::new();
        for f in &frontier {
            for g in gens {
                if let Some(m) = add(&mut q, &(g * f)) {
                    next.push(m);
                }
            }
        }
        frontier = next;
    }
    let basis: Vec<CMatrix> = q.iter().map(|v| unvectorize(v.as_slice(), n, n)).collect();
    OperatorSpace::from_orthonormal(n, n, basis)
}

/// Self-adjoint parts of the basis, dropping numerically vanishing ones.
fn self_adjoint_parts(space: &OperatorSpace) -> Vec<CMatrix> {
    let mut out = Vec::new();
    for b in space.basis() {
        for part in [hermitian_part(b), (b - b.adjoint()) * C64::new(0.0, -0.5)] {
            let norm = part.norm();
            if norm > 1e-6 * b.norm() {
                out.push(part * c(1.0 / norm));
            }
        }
    }
    out
}

fn find_generators(space: &OperatorSpace, tol: f64) -> Vec<CMatrix> {
    let n = space.rows();
    if space.dim() <= 2 {
        return self_adjoint_parts(space);
    }
    let mut rng = seeded_rng(space.dim() as u64);
    for _ in 0..3 {
        let gens: Vec<CMatrix> = (0..2)
            .map(|_| {
                let coeffs: Vec<C64> = (0..space.dim())
                    .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                    .collect();
                let h = hermitian_part(&space.combine(&coeffs));
                let norm = h.norm();
                h * c(1.0 / norm)
            })
            .collect();
        if word_closure(n, &gens, tol).dim() == space.dim() {
            return gens;
        }
    }
    self_adjoint_parts(space)
}

/// `{X : XA = AX for all A in alg}`.
pub fn commutant(alg: &FiniteCStarAlgebra, tol: f64) -> Result<FiniteCStarAlgebra> {
    let gens = alg.generators();
    if gens.is_empty() {
        return Ok(FiniteCStarAlgebra::full(alg.ambient_dim()));
    }
    let sol = solve_intertwiners(gens, gens, tol)?;
    Ok(FiniteCStarAlgebra::trusted(sol.space, tol))
}

/// Commutant of an arbitrary self-adjoint set of operators.
pub fn commutant_of_set(n: usize, set: &[CMatrix], tol: f64) -> Result<FiniteCStarAlgebra> {
    if set.is_empty() {
        return Ok(FiniteCStarAlgebra::full(n));
    }
    let sol = solve_intertwiners(set, set, tol)?;
    Ok(FiniteCStarAlgebra::trusted(sol.space, tol))
}

/// `A ∩ A'`, computed in coefficient space.
pub fn center(alg: &FiniteCStarAlgebra, tol: f64) -> Result<FiniteCStarAlgebra> {
    let n = alg.ambient_dim();
    let d = alg.dim();
    let gens = alg.generators();
    let mut system = CMatrix::zeros(n * n * gens.len(), d);
    for (k, b) in alg.basis().iter().enumerate() {
        for (g_idx, g) in gens.iter().enumerate() {
            let comm = b * g - g * b;
            system
                .view_mut((g_idx * n * n, k), (n * n, 1))
                .copy_from_slice(comm.as_slice());
        }
    }
    let scale = 2.0 * gens.iter().map(|g| g.norm()).fold(0.0, f64::max);
    let (coeffs, _) = nullspace_with_floor(&system, tol, NOISE_FLOOR * scale);
    let mats: Vec<CMatrix> = (0..coeffs.ncols())
        .map(|j| {
            let col: Vec<C64> = coeffs.column(j).iter().cloned().collect();
            alg.space().combine(&col)
        })
        .collect();
    let space = OperatorSpace::span(n, n, &mats, tol)?;
    Ok(FiniteCStarAlgebra::trusted(space, tol))
}

/// Minimal central projections of `alg`, in ascending `(size, multiplicity)` order.
pub fn central_projections(alg: &FiniteCStarAlgebra, tol: f64) -> Result<Vec<(CMatrix, usize, usize)>> {
    let z = center(alg, tol)?;
    let k = z.dim();
    let n = alg.ambient_dim();
    if k == 1 {
        let size = isqrt(alg.dim());
        return Ok(vec![(identity(n), size, n / size)]);
    }
    let mut rng = seeded_rng(0xce17);
    let mut last_err = None;
    for _ in 0..5 {
        let h = z.random_self_adjoint(&mut rng);
        let h = &h * c(1.0 / op_norm(&h).max(f64::MIN_POSITIVE));
        let eig = crate::numkernel::hermitian_eigen(&h);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut gaps: Vec<(f64, usize)> = vals.windows(2).enumerate().map(|(i, w)| (w[1] - w[0], i)).collect();
        gaps.sort_by(|a, b| b.0.total_cmp(&a.0));
        let smallest_split = gaps[k - 2].0;
        let largest_inner = gaps.get(k - 1).map_or(0.0, |g| g.0);
        if smallest_split <= 1e3 * largest_inner.max(tol) {
            last_err = Some(Error::ToleranceAmbiguity {
                context: "block_decomposition: central spectrum".into(),
                value: smallest_split,
                cut: largest_inner,
            });
            continue;
        }
        let mut splits: Vec<usize> = gaps[..k - 1].iter().map(|g| g.1 + 1).collect();
        splits.sort();
        let mut bounds = vec![0];
        bounds.extend(splits);
        bounds.push(n);
        let mut out = Vec::new();
        for w in bounds.windows(2) {
            let mut p = CMatrix::zeros(n, n);
            for &i in &order[w[0]..w[1]] {
                let v = eig.eigenvectors.column(i);
                p += v * v.adjoint();
            }
            let rank = w[1] - w[0];
            let compressed: Vec<CMatrix> = alg.basis().iter().map(|b| b * &p).collect();
            let block_dim = OperatorSpace::span(n, n, &compressed, tol)?.dim();
            let size = isqrt(block_dim);
            if size * size != block_dim || rank % size != 0 {
                return Err(Error::Validation(format!(
                    "central block of dimension {block_dim} and rank {rank} is not a full matrix block"
                )));
            }
            out.push((p, size, rank / size));
        }
        out.sort_by_key(|(_, s, m)| (*s, *m));
        return Ok(out);
    }
    Err(last_err.expect("at least one attempt"))
}

/// Wedderburn data `[(size, multiplicity)]`, sorted ascending.
pub fn block_decomposition(alg: &FiniteCStarAlgebra, tol: f64) -> Result<Vec<(usize, usize)>> {
    Ok(central_projections(alg, tol)?
        .into_iter()
        .map(|(_, s, m)| (s, m))
        .collect())
}

/// *-isomorphism test: equal multisets of block sizes.
pub fn star_isomorphic(a1: &FiniteCStarAlgebra, a2: &FiniteCStarAlgebra, tol: f64) -> Result<bool> {
    let mut s1: Vec<usize> = block_decomposition(a1, tol)?.into_iter().map(|b| b.0).collect();
    let mut s2: Vec<usize> = block_decomposition(a2, tol)?.into_iter().map(|b| b.0).collect();
    s1.sort();
    s2.sort();
    Ok(s1 == s2)
}

/// Compares two algebras on the same ambient space as subspaces.
pub fn algebras_equal(a1: &FiniteCStarAlgebra, a2: &FiniteCStarAlgebra, tol: f64) -> Result<(bool, f64)> {
    subspace_equal(a1.space(), a2.space(), tol)
}

fn isqrt(k: usize) -> usize {
    let mut r = (k as f64).sqrt().round() as usize;
    while r * r > k {
        r -= 1;
    }
    r
}

/// A linear map from an algebra into `M_codomain_dim`, given on the
/// domain's orthonormal basis and validated as a unital *-homomorphism.
#[derive(Debug, Clone)]
pub struct Homomorphism {
    domain: FiniteCStarAlgebra,
    codomain_dim: usize,
    images: Vec<CMatrix>,
}

impl Homomorphism {
    /// Builds from images of the domain basis and validates.
    pub fn new(domain: FiniteCStarAlgebra, codomain_dim: usize, images: Vec<CMatrix>, tol: f64) -> Result<Self> {
        let h = Self::unchecked(domain, codomain_dim, images)?;
        h.validate(tol)?;
        Ok(h)
    }

    /// Builds without the homomorphism checks (shapes are still checked).
    pub fn unchecked(domain: FiniteCStarAlgebra, codomain_dim: usize, images: Vec<CMatrix>) -> Result<Self> {
        if images.len() != domain.dim() {
            return Err(Error::dims("homomorphism images", domain.dim(), images.len()));
        }
        for m in &images {
            if m.shape() != (codomain_dim, codomain_dim) {
                return Err(Error::dims(
                    "homomorphism image",
                    format!("{codomain_dim}x{codomain_dim}"),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ));
            }
        }
        Ok(Homomorphism {
            domain,
            codomain_dim,
            images,
        })
    }

    /// Builds from a map evaluated on the domain basis.
    pub fn from_fn<F: FnMut(&CMatrix) -> CMatrix>(
        domain: FiniteCStarAlgebra,
        codomain_dim: usize,
        f: F,
        tol: f64,
    ) -> Result<Self> {
        let images = domain.space().map_basis(f);
        Self::new(domain, codomain_dim, images, tol)
    }

    /// Builds from pairs `(a_k, image_k)` where the `a_k` span the domain.
    pub fn from_pairs(
        domain: FiniteCStarAlgebra,
        codomain_dim: usize,
        pairs: &[(CMatrix, CMatrix)],
        tol: f64,
    ) -> Result<Self> {
        let h = Self::from_pairs_unchecked(domain, codomain_dim, pairs, tol)?;
        h.validate(tol)?;
        Ok(h)
    }

    /// Linear extension from a spanning set, without the homomorphism checks.
    pub fn from_pairs_unchecked(
        domain: FiniteCStarAlgebra,
        codomain_dim: usize,
        pairs: &[(CMatrix, CMatrix)],
        tol: f64,
    ) -> Result<Self> {
        let d = domain.dim();
        let mut coeffs = CMatrix::zeros(d, pairs.len());
        for (k, (a, img)) in pairs.iter().enumerate() {
            if img.shape() != (codomain_dim, codomain_dim) {
                return Err(Error::dims("homomorphism image", codomain_dim, img.nrows()));
            }
            if a.shape() != (domain.ambient_dim(), domain.ambient_dim()) {
                return Err(Error::dims(
                    "homomorphism domain element",
                    domain.ambient_dim(),
                    a.nrows(),
                ));
            }
            coeffs.set_column(k, &domain.space().coeffs(a));
        }
        let (inv, cut) = crate::numkernel::pinv(&coeffs, tol);
        if cut.rank < d {
            return Err(Error::Validation(format!(
                "homomorphism pairs span only {} of {} domain dimensions",
                cut.rank, d
            )));
        }
        let images = (0..d)
            .map(|j| {
                let mut m = CMatrix::zeros(codomain_dim, codomain_dim);
                for (k, (_, img)) in pairs.iter().enumerate() {
                    m += img * inv[(k, j)];
                }
                m
            })
            .collect();
        Self::unchecked(domain, codomain_dim, images)
    }

    pub fn identity(alg: &FiniteCStarAlgebra) -> Self {
        Homomorphism {
            domain: alg.clone(),
            codomain_dim: alg.ambient_dim(),
            images: alg.basis().to_vec(),
        }
    }

    pub fn domain(&self) -> &FiniteCStarAlgebra {
        &self.domain
    }

    pub fn codomain_dim(&self) -> usize {
        self.codomain_dim
    }

    pub fn images(&self) -> &[CMatrix] {
        &self.images
    }

    /// Evaluates on any element of the domain's span (the component
    /// orthogonal to the domain is discarded).
    pub fn apply(&self, a: &CMatrix) -> CMatrix {
        let k = self.domain.space().coeffs(a);
        let mut out = CMatrix::zeros(self.codomain_dim, self.codomain_dim);
        for (img, ck) in self.images.iter().zip(k.iter()) {
            if *ck != C64::new(0.0, 0.0) {
                out += img * *ck;
            }
        }
        out
    }

    /// `self ∘ inner`; `inner` must land in `self`'s domain.
    pub fn compose_after(&self, inner: &Homomorphism, tol: f64) -> Result<Homomorphism> {
        let images: Vec<CMatrix> = inner.images.iter().map(|m| self.apply(m)).collect();
        Homomorphism::new(inner.domain.clone(), self.codomain_dim, images, tol)
    }

    /// Image of the basis, as an algebra on the codomain space.
    pub fn image_algebra(&self, tol: f64) -> Result<FiniteCStarAlgebra> {
        let space = OperatorSpace::span(self.codomain_dim, self.codomain_dim, &self.images, tol)?;
        Ok(FiniteCStarAlgebra::trusted(space, tol))
    }

    /// Largest violation of linear-algebraic homomorphism identities on
    /// random elements (used for reporting).
    pub fn defect(&self) -> f64 {
        let mut rng = seeded_rng(23);
        let id_def = (self.apply(&self.domain.unit()) - identity(self.codomain_dim)).norm();
        let mut worst = id_def;
        for _ in 0..3 {
            let x = self.domain.random_element(&mut rng);
            let y = self.domain.random_element(&mut rng);
            let scale = x.norm() * y.norm();
            let m = (self.apply(&(&x * &y)) - self.apply(&x) * self.apply(&y)).norm() / scale;
            let s = (self.apply(&x.adjoint()) - self.apply(&x).adjoint()).norm() / x.norm();
            worst = worst.max(m).max(s);
        }
        worst
    }

    /// Unital, *-preserving, multiplicative; failures name the basis element or pair.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let ct = check_tol(tol);
        let unit_img = self.apply(&self.domain.unit());
        let r = (&unit_img - identity(self.codomain_dim)).norm();
        if r > ct * (self.codomain_dim as f64).sqrt() {
            return Err(Error::Validation(format!(
                "homomorphism is not unital (residual {r:.3e})"
            )));
        }
        for (k, b) in self.domain.basis().iter().enumerate() {
            let r = (self.apply(&b.adjoint()) - self.images[k].adjoint()).norm();
            if r > ct * self.images[k].norm().max(1.0) {
                return Err(Error::Validation(format!(
                    "homomorphism is not *-preserving at basis element {k} (residual {r:.3e})"
                )));
            }
        }
        let mut rng = seeded_rng(29);
        let mut ok = true;
        for _ in 0..3 {
            let x = self.domain.random_element(&mut rng);
            let y = self.domain.random_element(&mut rng);
            let lhs = self.apply(&(&x * &y));
            let rhs = self.apply(&x) * self.apply(&y);
            if (&lhs - &rhs).norm() > ct * rhs.norm().max(x.norm() * y.norm()) {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(());
        }
        let basis = self.domain.basis();
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                let lhs = self.apply(&(&basis[i] * &basis[j]));
                let rhs = &self.images[i] * &self.images[j];
                let r = (&lhs - &rhs).norm();
                if r > ct * rhs.norm().max(1.0) {
                    return Err(Error::Validation(format!(
                        "homomorphism is not multiplicative on basis pair ({i}, {j}) (residual {r:.3e})"
                    )));
                }
            }
        }
        Err(Error::Validation(
            "homomorphism is not multiplicative on random elements".into(),
        ))
    }

    /// Kernel dimension of the linear map.
    pub fn kernel_dim(&self, tol: f64) -> usize {
        let n2 = self.codomain_dim * self.codomain_dim;
        let mut m = CMatrix::zeros(n2, self.images.len());
        for (k, img) in self.images.iter().enumerate() {
            m.set_column(k, &vectorize(img));
        }
        let (null, _) = nullspace(&m, tol);
        null.ncols()
    }
}
