//! Hilbert modules realized as operator spaces `E ⊆ B(G, H)` over an algebra
//! `B ⊆ B(G)`, with inner product `⟨x, y⟩ = x* y`, and correspondences
//! (modules with a left action by a unital *-representation on `H`).

use serde::Serialize;

use crate::cstar::{central_projections, check_tol, commutant, commutant_of_set, FiniteCStarAlgebra, Homomorphism};
use crate::error::{Error, Result};
use crate::numkernel::{
    c, hcat, identity, nullspace_with_floor, op_norm, pinv, psd_sqrt_pinv, range_isometry, solve_intertwiners, CMatrix,
    OperatorSpace, C64, NOISE_FLOOR,
};

/// Record of replacing `H` by the closed span of `E G`.
#[derive(Debug, Clone, Serialize)]
pub struct TrimReport {
    pub original_dim_h: usize,
    pub dim_h: usize,
    /// Isometry from the kept part into the original `H`.
    #[serde(skip)]
    pub embedding: CMatrix,
}

#[derive(Debug, Clone)]
pub struct HilbertModule {
    base: FiniteCStarAlgebra,
    space: OperatorSpace,
    trim: Option<TrimReport>,
}

impl HilbertModule {
    /// Wraps a space already known to be a nondegenerate right `B`-module.
    pub(crate) fn trusted(base: FiniteCStarAlgebra, space: OperatorSpace) -> Self {
        HilbertModule {
            base,
            space,
            trim: None,
        }
    }

    pub fn base(&self) -> &FiniteCStarAlgebra {
        &self.base
    }

    pub fn space(&self) -> &OperatorSpace {
        &self.space
    }

    pub fn basis(&self) -> &[CMatrix] {
        self.space.basis()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn dim_g(&self) -> usize {
        self.space.cols()
    }

    pub fn dim_h(&self) -> usize {
        self.space.rows()
    }

    pub fn trim(&self) -> Option<&TrimReport> {
        self.trim.as_ref()
    }

    pub fn contains(&self, x: &CMatrix, tol: f64) -> bool {
        self.space.contains(x, check_tol(tol))
    }

    fn require_member(&self, x: &CMatrix, tol: f64) -> Result<()> {
        if x.shape() != (self.dim_h(), self.dim_g()) {
            return Err(Error::dims(
                "module element",
                format!("{}x{}", self.dim_h(), self.dim_g()),
                format!("{}x{}", x.nrows(), x.ncols()),
            ));
        }
        let r = self.space.residual(x);
        if r > check_tol(tol) * x.norm().max(1.0) {
            return Err(Error::NotInModule { residual: r });
        }
        Ok(())
    }

    /// `⟨x, y⟩ = x* y`.
    pub fn inner_product(&self, x: &CMatrix, y: &CMatrix, tol: f64) -> Result<CMatrix> {
        self.require_member(x, tol)?;
        self.require_member(y, tol)?;
        Ok(x.adjoint() * y)
    }

    /// `[x_1 | ... | x_d]`, the map `⊕ G → H` whose range is `span E G`.
    pub fn stacked(&self) -> CMatrix {
        if self.dim() == 0 {
            return CMatrix::zeros(self.dim_h(), 0);
        }
        hcat(self.basis())
    }

    /// Checks right invariance, inner products in the base, and nondegeneracy.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let ct = check_tol(tol);
        let basis = self.basis();
        for (i, x) in basis.iter().enumerate() {
            for g in self.base.generators() {
                let xb = x * g;
                let r = self.space.residual(&xb);
                if r > ct * xb.norm().max(1.0) {
                    return Err(Error::Validation(format!(
                        "module not closed under the right action at basis element {i} (residual {r:.3e})"
                    )));
                }
            }
        }
        for (i, x) in basis.iter().enumerate() {
            for (j, y) in basis.iter().enumerate().skip(i) {
                let ip = x.adjoint() * y;
                let r = self.base.space().residual(&ip);
                if r > ct * ip.norm().max(1.0) {
                    return Err(Error::Validation(format!(
                        "inner product of basis pair ({i}, {j}) leaves the base algebra (residual {r:.3e})"
                    )));
                }
            }
        }
        let (_, cut) = range_isometry(&self.stacked(), tol);
        if cut.rank < self.dim_h() {
            return Err(Error::Validation(format!(
                "module is degenerate: E G spans {} of {} dimensions",
                cut.rank,
                self.dim_h()
            )));
        }
        Ok(())
    }

    /// Restricts `H` to the span of `E G` when it is a proper subspace.
    fn trimmed(mut self, tol: f64) -> Self {
        let (w, cut) = range_isometry(&self.stacked(), tol);
        if cut.rank < self.dim_h() {
            let basis: Vec<CMatrix> = self.basis().iter().map(|x| w.adjoint() * x).collect();
            let original = self.dim_h();
            let prior = self.trim.take();
            let embedding = match prior {
                Some(t) => t.embedding * &w,
                None => w,
            };
            self.space = OperatorSpace::from_orthonormal(cut.rank, self.dim_g(), basis);
            self.trim = Some(TrimReport {
                original_dim_h: original,
                dim_h: cut.rank,
                embedding,
            });
        }
        self
    }
}

/// Closes `generators` under the right action of `base`, orthonormalizes,
/// validates, and trims `H` to the nondegenerate part.
pub fn build_module(base: &FiniteCStarAlgebra, generators: &[CMatrix], tol: f64) -> Result<HilbertModule> {
    let g = base.ambient_dim();
    let h = generators.first().map_or(0, |x| x.nrows());
    for x in generators {
        if x.shape() != (h, g) {
            return Err(Error::dims(
                "module generator",
                format!("{h}x{g}"),
                format!("{}x{}", x.nrows(), x.ncols()),
            ));
        }
    }
    let mut candidates: Vec<CMatrix> = generators.to_vec();
    for x in generators {
        for b in base.basis() {
            candidates.push(x * b);
        }
    }
    let space = OperatorSpace::span(h, g, &candidates, tol)?;
    let module = HilbertModule::trusted(base.clone(), space).trimmed(tol);
    module.validate(tol)?;
    Ok(module)
}

/// `K(E) = span{x y*}` as an algebra on `H`.
pub fn finite_rank_algebra(e: &HilbertModule, tol: f64) -> Result<FiniteCStarAlgebra> {
    let mut rank_ones = Vec::with_capacity(e.dim() * e.dim());
    for x in e.basis() {
        for y in e.basis() {
            rank_ones.push(x * y.adjoint());
        }
    }
    let space = OperatorSpace::span(e.dim_h(), e.dim_h(), &rank_ones, tol)?;
    Ok(FiniteCStarAlgebra::trusted(space, tol))
}

/// `ρ'(b') = id_E ⊙ b'` on `H`, determined by `ρ'(b') x g = x b' g`.
pub fn commutant_lifting(e: &HilbertModule, tol: f64) -> Result<Homomorphism> {
    let bprime = commutant(e.base(), tol)?;
    lifting_from(e, &bprime, tol)
}

fn lifting_from(e: &HilbertModule, bprime: &FiniteCStarAlgebra, tol: f64) -> Result<Homomorphism> {
    let stacked = e.stacked();
    let (inv, _) = pinv(&stacked, tol);
    let ct = check_tol(tol);
    let mut images = Vec::with_capacity(bprime.dim());
    for bp in bprime.basis() {
        let moved: Vec<CMatrix> = e.basis().iter().map(|x| x * bp).collect();
        let target = hcat(&moved);
        let img = &target * &inv;
        let r = (&img * &stacked - &target).norm();
        if r > ct * target.norm().max(1.0) {
            return Err(Error::Validation(format!(
                "commutant lifting is not well defined (residual {r:.3e})"
            )));
        }
        images.push(img);
    }
    Homomorphism::new(bprime.clone(), e.dim_h(), images, tol)
}

/// `B^a(E)`, computed as the commutant of `ρ'(B')` on `H`.
pub fn adjointable_algebra(e: &HilbertModule, tol: f64) -> Result<FiniteCStarAlgebra> {
    let rho = commutant_lifting(e, tol)?;
    let image = rho.image_algebra(tol)?;
    let ba = commutant_of_set(e.dim_h(), image.generators(), tol)?;
    let k = finite_rank_algebra(e, tol)?;
    for (i, m) in k.basis().iter().enumerate() {
        if !ba.contains(m, tol) {
            return Err(Error::Validation(format!(
                "finite-rank operator {i} is not adjointable (residual {:.3e})",
                ba.space().residual(m)
            )));
        }
    }
    Ok(ba)
}

/// The module of intertwiners `{X ∈ B(G,H) : ρ'(b') X = X b'}` over `B = B''`.
pub fn module_from_representation(base: &FiniteCStarAlgebra, rho: &Homomorphism, tol: f64) -> Result<HilbertModule> {
    let bprime = rho.domain();
    if bprime.ambient_dim() != base.ambient_dim() {
        return Err(Error::dims(
            "module_from_representation: commutant ambient",
            base.ambient_dim(),
            bprime.ambient_dim(),
        ));
    }
    let gens = bprime.generators();
    let lefts: Vec<CMatrix> = gens.iter().map(|g| rho.apply(g)).collect();
    let sol = solve_intertwiners(&lefts, gens, tol)?;
    let module = HilbertModule::trusted(base.clone(), sol.space).trimmed(tol);
    module.validate(tol)?;
    Ok(module)
}

/// The ideal `B_E` generated by the inner products, with its unit `p` and
/// its compression to `p G`.
#[derive(Debug, Clone)]
pub struct Ideal {
    pub space: OperatorSpace,
    pub unit: CMatrix,
    /// Isometry `C^r → G` onto `p G`.
    pub embedding: CMatrix,
    /// `W* B_E W` as a unital algebra on `C^r`.
    pub compressed: FiniteCStarAlgebra,
}

/// Whether the inner products span the base algebra, and the ideal they span.
pub fn is_full(e: &HilbertModule, tol: f64) -> Result<(bool, Ideal)> {
    let g = e.dim_g();
    let mut ips = Vec::with_capacity(e.dim() * e.dim());
    let mut sum = CMatrix::zeros(g, g);
    for x in e.basis() {
        sum += x.adjoint() * x;
        for y in e.basis() {
            ips.push(x.adjoint() * y);
        }
    }
    let space = OperatorSpace::span(g, g, &ips, tol)?;
    let roots = psd_sqrt_pinv(&sum, tol)?;
    let (w, _) = range_isometry(&roots.support, tol);
    let compressed_basis: Vec<CMatrix> = space.basis().iter().map(|b| w.adjoint() * b * &w).collect();
    let compressed =
        FiniteCStarAlgebra::trusted(OperatorSpace::span(w.ncols(), w.ncols(), &compressed_basis, tol)?, tol);
    let full = space.dim() == e.base().dim();
    Ok((
        full,
        Ideal {
            space,
            unit: roots.support,
            embedding: w,
            compressed,
        },
    ))
}

/// `E` regarded as a full module over `B_E`, acting on `p G`.
pub fn fullification(e: &HilbertModule, tol: f64) -> Result<(HilbertModule, Ideal)> {
    let (_, ideal) = is_full(e, tol)?;
    let basis: Vec<CMatrix> = e.basis().iter().map(|x| x * &ideal.embedding).collect();
    let space = OperatorSpace::span(e.dim_h(), ideal.embedding.ncols(), &basis, tol)?;
    let module = HilbertModule::trusted(ideal.compressed.clone(), space);
    module.validate(tol)?;
    Ok((module, ideal))
}

/// Whether `ξ` is a unit vector, `⟨ξ, ξ⟩ = 1`.
pub fn verify_unit_vector(e: &HilbertModule, xi: &CMatrix, tol: f64) -> Result<bool> {
    e.require_member(xi, tol)?;
    let d = (xi.adjoint() * xi - identity(e.dim_g())).norm();
    Ok(d <= check_tol(tol) * (e.dim_g() as f64).sqrt())
}

/// A block of the base in which no element of `E` can be isometric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitVectorObstruction {
    /// Index of the minimal central projection `z` (ascending block order).
    pub block: usize,
    pub rank_of_block: usize,
    /// Dimension of `span{x z g}`; a unit vector `ξ` needs `ξ z` isometric
    /// on `z G`, which is impossible when this is smaller than `rank z`.
    pub range_rank: usize,
}

/// Searches the blocks of the base for a rank obstruction to unit vectors.
pub fn unit_vector_obstruction(e: &HilbertModule, tol: f64) -> Result<Option<UnitVectorObstruction>> {
    for (k, (z, _, _)) in central_projections(e.base(), tol)?.iter().enumerate() {
        let rank_z = range_isometry(z, tol).1.rank;
        let pieces: Vec<CMatrix> = e.basis().iter().map(|x| x * z).collect();
        let range_rank = if pieces.is_empty() {
            0
        } else {
            range_isometry(&hcat(&pieces), tol).1.rank
        };
        if range_rank < rank_z {
            return Ok(Some(UnitVectorObstruction {
                block: k,
                rank_of_block: rank_z,
                range_rank,
            }));
        }
    }
    Ok(None)
}

/// Family `(e_β, p_β)` with `⟨e_β, e_β'⟩ = δ p_β` and `Σ e_β e_β* = 1`.
#[derive(Debug, Clone)]
pub struct QuasiOns {
    pub members: Vec<(CMatrix, CMatrix)>,
}

/// Residuals of the three defining identities.
#[derive(Debug, Clone, Serialize)]
pub struct QonsCheck {
    pub orthogonality: f64,
    pub projections: f64,
    pub completeness: f64,
}

impl QonsCheck {
    pub fn max(&self) -> f64 {
        self.orthogonality.max(self.projections).max(self.completeness)
    }
}

impl QuasiOns {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn check(&self, e: &HilbertModule) -> QonsCheck {
        let mut orth: f64 = 0.0;
        let mut proj: f64 = 0.0;
        let mut sum = CMatrix::zeros(e.dim_h(), e.dim_h());
        for (i, (ei, pi)) in self.members.iter().enumerate() {
            proj = proj
                .max((pi * pi - pi).norm())
                .max((pi.adjoint() - pi).norm())
                .max(e.base().space().residual(pi));
            for (j, (ej, _)) in self.members.iter().enumerate() {
                let ip = ei.adjoint() * ej;
                let expected = if i == j {
                    pi.clone()
                } else {
                    CMatrix::zeros(ip.nrows(), ip.ncols())
                };
                orth = orth.max((ip - expected).norm());
            }
            orth = orth.max(e.space().residual(ei));
            sum += ei * ei.adjoint();
        }
        QonsCheck {
            orthogonality: orth,
            projections: proj,
            completeness: (sum - identity(e.dim_h())).norm(),
        }
    }
}

/// Greedy construction: repeatedly take the lowest-index basis element with
/// the largest residual `q x`, where `q = 1 - Σ e e*`, and normalize it by
/// the pseudo-inverse square root of its inner product.
pub fn quasi_orthonormal_system(e: &HilbertModule, tol: f64) -> Result<QuasiOns> {
    let n = e.dim_h();
    let mut q = identity(n);
    let mut members = Vec::new();
    let stop = check_tol(tol);
    loop {
        if op_norm(&q) <= stop {
            break;
        }
        let norms: Vec<f64> = e.basis().iter().map(|x| (&q * x).norm()).collect();
        let best = norms.iter().cloned().fold(0.0, f64::max);
        if best <= stop {
            return Err(Error::Stall { residual: op_norm(&q) });
        }
        let pick = norms
            .iter()
            .position(|&v| v >= best * (1.0 - 1e-9))
            .expect("maximum exists");
        let qx = &q * &e.basis()[pick];
        let m = qx.adjoint() * &qx;
        let roots = psd_sqrt_pinv(&m, tol)?;
        let member = &qx * &roots.pinv_sqrt;
        q -= &member * member.adjoint();
        members.push((member, roots.support));
        if members.len() > n * e.dim_g().max(1) + 1 {
            return Err(Error::Stall { residual: op_norm(&q) });
        }
    }
    Ok(QuasiOns { members })
}

/// A module with a unital left action on its `H`.
#[derive(Debug, Clone)]
pub struct Correspondence {
    module: HilbertModule,
    left: FiniteCStarAlgebra,
    action: Homomorphism,
}

impl Correspondence {
    pub fn new(module: HilbertModule, action: Homomorphism, tol: f64) -> Result<Self> {
        if action.codomain_dim() != module.dim_h() {
            return Err(Error::dims(
                "left action codomain",
                module.dim_h(),
                action.codomain_dim(),
            ));
        }
        let corr = Correspondence {
            left: action.domain().clone(),
            module,
            action,
        };
        corr.validate(tol)?;
        Ok(corr)
    }

    pub(crate) fn trusted(module: HilbertModule, action: Homomorphism) -> Self {
        Correspondence {
            left: action.domain().clone(),
            module,
            action,
        }
    }

    /// `E` as a `K(E)`-`B` correspondence, `K(E)` acting by multiplication.
    pub fn over_compacts(e: &HilbertModule, tol: f64) -> Result<Self> {
        let k = finite_rank_algebra(e, tol)?;
        Ok(Correspondence::trusted(e.clone(), Homomorphism::identity(&k)))
    }

    /// `B` as a `B`-`B` correspondence over itself.
    pub fn identity(base: &FiniteCStarAlgebra) -> Self {
        let module = HilbertModule::trusted(base.clone(), base.space().clone());
        Correspondence::trusted(module, Homomorphism::identity(base))
    }

    pub fn module(&self) -> &HilbertModule {
        &self.module
    }

    pub fn left(&self) -> &FiniteCStarAlgebra {
        &self.left
    }

    pub fn action(&self) -> &Homomorphism {
        &self.action
    }

    /// `φ(a) x`.
    pub fn act(&self, a: &CMatrix, x: &CMatrix) -> CMatrix {
        self.action.apply(a) * x
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        self.action.validate(tol)?;
        let ct = check_tol(tol);
        for (k, a) in self.left.generators().iter().enumerate() {
            let phi = self.action.apply(a);
            for (i, x) in self.module.basis().iter().enumerate() {
                let ax = &phi * x;
                let r = self.module.space().residual(&ax);
                if r > ct * ax.norm().max(1.0) {
                    return Err(Error::Validation(format!(
                        "left action of generator {k} moves basis element {i} out of the module (residual {r:.3e})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `E*`: adjoints of `E` in `B(H, G)`, a right `K(E)`-module with left `B`-action.
pub fn dual_module(e: &HilbertModule, tol: f64) -> Result<Correspondence> {
    let k = finite_rank_algebra(e, tol)?;
    let adj: Vec<CMatrix> = e.basis().iter().map(|x| x.adjoint()).collect();
    let space = OperatorSpace::span(e.dim_g(), e.dim_h(), &adj, tol)?;
    let module = HilbertModule::trusted(k, space).trimmed(tol);
    let base = e.base().clone();
    let action = match module.trim() {
        None => Homomorphism::identity(&base),
        Some(t) => {
            let w = t.embedding.clone();
            let images = base.basis().iter().map(|b| w.adjoint() * b * &w).collect();
            Homomorphism::new(base, w.ncols(), images, tol)?
        }
    };
    Correspondence::new(module, action, tol)
}

/// `C_B(E) = {x ∈ E : b x = x b}` for an `B`-`B` correspondence.
pub fn bimodule_center(x: &Correspondence, tol: f64) -> Result<OperatorSpace> {
    let base = x.module().base();
    if x.left().ambient_dim() != base.ambient_dim() || !crate::cstar::algebras_equal(x.left(), base, check_tol(tol))?.0
    {
        return Err(Error::Precondition(
            "bimodule center needs the left algebra to equal the base algebra".into(),
        ));
    }
    let m = x.module();
    let (h, g) = (m.dim_h(), m.dim_g());
    let gens = base.generators();
    let mut system = CMatrix::zeros(h * g * gens.len().max(1), m.dim());
    for (k, xk) in m.basis().iter().enumerate() {
        for (gi, b) in gens.iter().enumerate() {
            let comm = x.act(b, xk) - xk * b;
            system
                .view_mut((gi * h * g, k), (h * g, 1))
                .copy_from_slice(comm.as_slice());
        }
    }
    let scale = 2.0
        * gens
            .iter()
            .map(|b| b.norm() * x.action().apply(b).norm().max(1.0))
            .fold(0.0, f64::max);
    let (coeffs, _) = nullspace_with_floor(&system, tol, NOISE_FLOOR * scale);
    let mats: Vec<CMatrix> = (0..coeffs.ncols())
        .map(|j| {
            let col: Vec<C64> = coeffs.column(j).iter().cloned().collect();
            m.space().combine(&col)
        })
        .collect();
    OperatorSpace::span(h, g, &mats, tol)
}

/// Family `(e_β)` in `E` such that `(e_β*, e_β e_β*)` is a complete
/// quasi-orthonormal system of `E*`; requires `E` full.
pub fn dual_qons_family(e: &HilbertModule, tol: f64) -> Result<Vec<CMatrix>> {
    let (full, _) = is_full(e, tol)?;
    if !full {
        return Err(Error::Precondition(
            "dual quasi-orthonormal family needs a full module".into(),
        ));
    }
    let dual = dual_module(e, tol)?;
    let qons = quasi_orthonormal_system(dual.module(), tol)?;
    let family: Vec<CMatrix> = qons.members.iter().map(|(f, _)| f.adjoint()).collect();
    check_dual_family(e, &family, tol)?;
    Ok(family)
}

/// Residual of `e_β e_β'* = δ·(projection)` and `Σ ⟨e_β, e_β⟩ = 1`.
pub fn dual_family_residual(e: &HilbertModule, family: &[CMatrix]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut sum = CMatrix::zeros(e.dim_g(), e.dim_g());
    for (i, a) in family.iter().enumerate() {
        worst = worst.max(e.space().residual(a));
        for (j, b) in family.iter().enumerate() {
            let m = a * b.adjoint();
            let r = if i == j {
                (&m * &m - &m).norm().max((m.adjoint() - &m).norm())
            } else {
                m.norm()
            };
            worst = worst.max(r);
        }
        sum += a.adjoint() * a;
    }
    worst.max((sum - identity(e.dim_g())).norm())
}

pub fn check_dual_family(e: &HilbertModule, family: &[CMatrix], tol: f64) -> Result<()> {
    let r = dual_family_residual(e, family);
    if r > check_tol(tol) * (e.dim_g() as f64).sqrt().max(1.0) * 10.0 {
        return Err(Error::Precondition(format!(
            "family is not a complete quasi-orthonormal system of the dual (residual {r:.3e})"
        )));
    }
    Ok(())
}

/// The commutant `X' = {Y ∈ B(K, H) : ρ(a) Y = Y a}` of an `A`-`B`
/// correspondence `X`, as a `B'`-`A'` correspondence.
pub fn commutant_bimodule(x: &Correspondence, tol: f64) -> Result<Correspondence> {
    let a = x.left();
    let rho = x.action();
    let ct = check_tol(tol);
    if (rho.apply(&a.unit()) - identity(x.module().dim_h())).norm() > ct * (x.module().dim_h() as f64).sqrt() {
        return Err(Error::Precondition("left action is not unital".into()));
    }
    let aprime = commutant(a, tol)?;
    let gens = a.generators();
    let lefts: Vec<CMatrix> = gens.iter().map(|g| rho.apply(g)).collect();
    let sol = solve_intertwiners(&lefts, gens, tol)?;
    let module = HilbertModule::trusted(aprime, sol.space).trimmed(tol);
    module.validate(tol)?;
    let lifting = commutant_lifting(x.module(), tol)?;
    let action = match module.trim() {
        None => lifting,
        Some(t) => {
            let w = t.embedding.clone();
            let images = lifting.images().iter().map(|m| w.adjoint() * m * &w).collect();
            Homomorphism::new(lifting.domain().clone(), w.ncols(), images, tol)?
        }
    };
    Correspondence::new(module, action, tol)
}

/// Scales `x` so that its largest entry has modulus one (for display).
pub fn normalize_phase(x: &CMatrix) -> CMatrix {
    let mut best = C64::new(0.0, 0.0);
    for z in x.iter() {
        if z.norm() > best.norm() + 1e-12 {
            best = *z;
        }
    }
    if best.norm() == 0.0 {
        x.clone()
    } else {
        x * (c(1.0) / best)
    }
}
