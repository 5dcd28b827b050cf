//! Factorizations `θ(a) = u (a ⊙ id) u*` of a unital homomorphism
//! `θ: K(E) → B^a(F)` through a `B`-`C` correspondence, by four
//! constructions, together with the canonical unitaries comparing them.

use serde::Serialize;

use crate::certify::{unitarity_defect, ModuleUnitary};
use crate::cstar::{algebras_equal, check_tol, FiniteCStarAlgebra, Homomorphism};
use crate::error::{Error, Result};
use crate::hilbmod::{
    check_dual_family, commutant_bimodule, commutant_lifting, dual_module, finite_rank_algebra, is_full,
    verify_unit_vector, Correspondence, HilbertModule,
};
use crate::numkernel::{
    hcat, identity, op_norm, pinv, range_isometry, range_isometry_with_floor, solve_intertwiners, vcat, CMatrix,
    OperatorSpace, C64, NOISE_FLOOR,
};
use crate::tensorcalc::{flip_unitary, interior_tensor, Flip, TensorProduct};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mss,
    UnitVector,
    Qons,
    Commutant,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mss, Method::UnitVector, Method::Qons, Method::Commutant];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mss => "mss",
            Method::UnitVector => "unit-vector",
            Method::Qons => "qons",
            Method::Commutant => "commutant",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse {
                location: "method".into(),
                message: format!("unknown method {s:?}"),
            })
    }
}

/// The data `(E, F, θ)` of a factorization problem, validated once.
#[derive(Debug, Clone)]
pub struct Setting {
    pub e: HilbertModule,
    pub f: HilbertModule,
    pub theta: Homomorphism,
    /// `E` as a `K(E)`-`B` correspondence.
    pub e_corr: Correspondence,
    /// `F` as a `K(E)`-`C` correspondence through `θ`.
    pub f_corr: Correspondence,
    pub tol: f64,
}

impl Setting {
    pub fn new(e: HilbertModule, f: HilbertModule, theta: Homomorphism, tol: f64) -> Result<Self> {
        let k = finite_rank_algebra(&e, tol)?;
        if theta.domain().ambient_dim() != e.dim_h() || !algebras_equal(theta.domain(), &k, check_tol(tol))?.0 {
            return Err(Error::Validation(
                "θ must be defined on the finite-rank operators K(E)".into(),
            ));
        }
        if theta.codomain_dim() != f.dim_h() {
            return Err(Error::dims("θ codomain", f.dim_h(), theta.codomain_dim()));
        }
        theta.validate(tol)?;
        let f_corr = Correspondence::new(f.clone(), theta.clone(), tol)
            .map_err(|err| Error::Validation(format!("θ does not map into B^a(F): {err}")))?;
        let e_corr = Correspondence::trusted(e.clone(), Homomorphism::identity(theta.domain()));
        Ok(Setting {
            e,
            f,
            theta,
            e_corr,
            f_corr,
            tol,
        })
    }

    pub fn base(&self) -> &FiniteCStarAlgebra {
        self.e.base()
    }
}

/// Data specific to each construction, needed for the comparison formulas.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum MethodData {
    Mss {
        /// `E* ⊙ F`.
        dual_f: TensorProduct,
        /// Isometry `G_{E*} → G` if `E*` acts on a trimmed copy of `G`.
        dual_embed: CMatrix,
    },
    UnitVector {
        xi: CMatrix,
        /// Isometry onto the range of `θ(ξ ξ*)`.
        w: CMatrix,
    },
    Qons {
        family: Vec<CMatrix>,
        ws: Vec<CMatrix>,
    },
    Commutant(Box<CommutantData>),
}

#[derive(Debug, Clone)]
pub struct CommutantData {
    /// `F'_θ = {X : θ(a) X = X a}` over `ρ'(B')`, left `C'`.
    pub raw_prime: Correspondence,
    /// `F'_θ` concretized over `B'` acting on `G`.
    pub prime: Correspondence,
    pub flip: Flip,
    /// `σ_min / σ_max` of the coefficient map of `ρ'`.
    pub lifting_conditioning: f64,
    /// Rank of `span F'_θ H` compared with `dim K`.
    pub totality_rank: usize,
    /// Isometry from the space of `F''` into `W ⊙ G`.
    pub trim: CMatrix,
    /// `‖F''-action(b) − (T_w g ↦ T_w b g)‖` over a basis of `B`.
    pub action_agreement: f64,
}

#[derive(Debug, Clone)]
pub struct FactorizationResult {
    pub method: Method,
    /// The factorizing `B`-`C` correspondence.
    pub correspondence: Correspondence,
    /// `E ⊙ correspondence`.
    pub tensor: TensorProduct,
    /// `E ⊙ correspondence → F`.
    pub unitary: ModuleUnitary,
    /// `max_a ‖θ(a) − u (a ⊙ id) u*‖` over a basis of `K(E)`.
    pub theta_residual: f64,
    pub data: MethodData,
}

/// Serializable summary of a factorization.
#[derive(Debug, Clone, Serialize)]
pub struct FactorizationReport {
    pub method: Method,
    pub dim_module: usize,
    pub dim_space: usize,
    pub theta_residual: f64,
    pub unitary: ModuleUnitary,
    pub checks: Vec<(String, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unitary_matrix: Option<Vec<Vec<[f64; 2]>>>,
}

impl FactorizationResult {
    pub fn report(&self, emit_unitary: bool) -> FactorizationReport {
        let mut checks = vec![("theta".to_string(), self.theta_residual)];
        if let MethodData::Commutant(d) = &self.data {
            checks.push(("flip unitarity".into(), d.flip.flip_defect()));
            checks.push(("flip involution".into(), d.flip.involution_defect()));
            checks.push(("flip chain".into(), d.flip.chain_defect()));
            checks.push(("contraction unitarity".into(), unitarity_defect(&d.flip.contract)));
            checks.push(("left action agreement".into(), d.action_agreement));
        }
        FactorizationReport {
            method: self.method,
            dim_module: self.correspondence.module().dim(),
            dim_space: self.correspondence.module().dim_h(),
            theta_residual: self.theta_residual,
            unitary: self.unitary.clone(),
            checks,
            unitary_matrix: emit_unitary.then(|| matrix_rows(&self.unitary.map)),
        }
    }

    /// Largest residual that must vanish for the factorization to hold.
    pub fn max_residual(&self) -> f64 {
        let mut m = self.theta_residual.max(self.unitary.max_residual());
        if let MethodData::Commutant(d) = &self.data {
            m = m
                .max(d.flip.flip_defect())
                .max(d.flip.involution_defect())
                .max(d.flip.chain_defect())
                .max(unitarity_defect(&d.flip.contract))
                .max(d.action_agreement);
        }
        m
    }
}

pub(crate) fn matrix_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Builds `E ⊙ corr`, the unitary from per-generator targets, and certifies it.
fn finish(
    s: &Setting,
    method: Method,
    correspondence: Correspondence,
    targets: impl Fn(usize, &CMatrix, &TensorProduct) -> CMatrix,
    data: MethodData,
) -> Result<FactorizationResult> {
    let tensor = interior_tensor(&s.e_corr, &correspondence, s.tol)?;
    let per_x: Vec<CMatrix> =
        s.e.basis()
            .iter()
            .enumerate()
            .map(|(i, x)| targets(i, x, &tensor))
            .collect();
    let (map, cons) = tensor.space.define_map(&per_x);
    let unitary = ModuleUnitary::certify(
        format!("E⊙F[{method}] → F"),
        map,
        cons.max(tensor.lift_residual),
        &tensor.result,
        &s.f_corr,
    );
    let theta_residual = theta_residual(s, &tensor, &unitary.map);
    Ok(FactorizationResult {
        method,
        correspondence,
        tensor,
        unitary,
        theta_residual,
        data,
    })
}

fn theta_residual(s: &Setting, tensor: &TensorProduct, u: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for a in s.theta.domain().basis() {
        let lifted = tensor.result.action().apply(a);
        let r = op_norm(&(s.theta.apply(a) - u * lifted * u.adjoint()));
        worst = worst.max(r);
    }
    worst
}

/// `F_θ = E* ⊙ F` with `x ⊙ (y* ⊙ z) ↦ θ(x y*) z`.
pub fn factor_mss(s: &Setting) -> Result<FactorizationResult> {
    let tol = s.tol;
    let dual = dual_module(&s.e, tol)?;
    let dual_embed = dual
        .module()
        .trim()
        .map(|t| t.embedding.clone())
        .unwrap_or_else(|| identity(s.e.dim_g()));
    let dual_f = interior_tensor(&dual, &s.f_corr, tol)?;
    let corr = dual_f.result.clone();
    let theta = &s.theta;
    let d_basis: Vec<CMatrix> = dual.module().basis().iter().map(|d| &dual_embed * d).collect();
    let ns = dual_f.space.clone();
    finish(
        s,
        Method::Mss,
        corr,
        |_, x, _| {
            let per_dual: Vec<CMatrix> = d_basis.iter().map(|ys| theta.apply(&(x * ys))).collect();
            ns.define_map(&per_dual).0
        },
        MethodData::Mss { dual_f, dual_embed },
    )
}

/// `F_ξ = θ(ξ ξ*) F` with `b y = θ(ξ b ξ*) y` and `x ⊙ y ↦ θ(x ξ*) y`.
pub fn factor_unit_vector(s: &Setting, xi: &CMatrix) -> Result<FactorizationResult> {
    let tol = s.tol;
    if !verify_unit_vector(&s.e, xi, tol)? {
        return Err(Error::Precondition("ξ is not a unit vector".into()));
    }
    let p = s.theta.apply(&(xi * xi.adjoint()));
    let (w, _) = range_isometry_with_floor(&p, tol, NOISE_FLOOR);
    let r = w.ncols();
    let elems: Vec<CMatrix> = s.f.basis().iter().map(|y| w.adjoint() * y).collect();
    let space = OperatorSpace::span(r, s.f.dim_g(), &elems, tol)?;
    let module = HilbertModule::trusted(s.f.base().clone(), space);
    let theta = &s.theta;
    let action = Homomorphism::from_fn(
        s.base().clone(),
        r,
        |b| w.adjoint() * theta.apply(&(xi * b * xi.adjoint())) * &w,
        tol,
    )?;
    let corr = Correspondence::new(module, action, tol)?;
    let wc = w.clone();
    finish(
        s,
        Method::UnitVector,
        corr,
        |_, x, _| theta.apply(&(x * xi.adjoint())) * &wc,
        MethodData::UnitVector { xi: xi.clone(), w },
    )
}

/// `F_B = ⊕_β θ(e_β e_β*) F` with `Σ_β θ(x e_β*) y_β` as the unitary.
pub fn factor_qons(s: &Setting, family: &[CMatrix]) -> Result<FactorizationResult> {
    let tol = s.tol;
    check_dual_family(&s.e, family, tol)?;
    let theta = &s.theta;
    // θ may vanish on some e_β e_β*; those members contribute nothing.
    let ws: Vec<CMatrix> = family
        .iter()
        .map(|eb| range_isometry_with_floor(&theta.apply(&(eb * eb.adjoint())), tol, NOISE_FLOOR).0)
        .collect();
    let sizes: Vec<usize> = ws.iter().map(|w| w.ncols()).collect();
    let total: usize = sizes.iter().sum();
    let lg = s.f.dim_g();
    let mut elems = Vec::new();
    let mut offset = 0;
    for w in &ws {
        for y in s.f.basis() {
            let mut m = CMatrix::zeros(total, lg);
            m.view_mut((offset, 0), (w.ncols(), lg)).copy_from(&(w.adjoint() * y));
            elems.push(m);
        }
        offset += w.ncols();
    }
    let space = OperatorSpace::span(total, lg, &elems, tol)?;
    let module = HilbertModule::trusted(s.f.base().clone(), space);
    let action = Homomorphism::from_fn(
        s.base().clone(),
        total,
        |b| {
            let rows: Vec<CMatrix> = family
                .iter()
                .zip(&ws)
                .map(|(e1, w1)| {
                    let cols: Vec<CMatrix> = family
                        .iter()
                        .zip(&ws)
                        .map(|(e2, w2)| w1.adjoint() * theta.apply(&(e1 * b * e2.adjoint())) * w2)
                        .collect();
                    hcat(&cols)
                })
                .collect();
            vcat(&rows)
        },
        tol,
    )?;
    let corr = Correspondence::new(module, action, tol)?;
    let ws_c = ws.clone();
    finish(
        s,
        Method::Qons,
        corr,
        |_, x, _| {
            let blocks: Vec<CMatrix> = family
                .iter()
                .zip(&ws_c)
                .map(|(eb, w)| theta.apply(&(x * eb.adjoint())) * w)
                .collect();
            hcat(&blocks)
        },
        MethodData::Qons {
            family: family.to_vec(),
            ws,
        },
    )
}

/// Least-squares inverse of a faithful representation, as a homomorphism
/// from its image; returns the conditioning of the coefficient map.
fn invert_representation(rho: &Homomorphism, image: &FiniteCStarAlgebra, tol: f64) -> Result<(Homomorphism, f64)> {
    let n = rho.codomain_dim();
    let d = rho.domain().dim();
    let mut m = CMatrix::zeros(n * n, d);
    for (k, img) in rho.images().iter().enumerate() {
        m.column_mut(k).copy_from_slice(img.as_slice());
    }
    let sv = crate::numkernel::svd(&m, false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let (inv, _) = pinv(&m, tol);
    let dom = rho.domain();
    let images: Vec<CMatrix> = image
        .basis()
        .iter()
        .map(|r| {
            let c = &inv * crate::numkernel::vectorize(r);
            let coeffs: Vec<C64> = c.iter().cloned().collect();
            dom.space().combine(&coeffs)
        })
        .collect();
    let h = Homomorphism::new(image.clone(), dom.ambient_dim(), images, tol)?;
    Ok((h, if smax > 0.0 { smin / smax } else { 0.0 }))
}

/// The commutant construction: `F'_θ` as intertwiners, then `F''_θ` as its
/// commutant, with the unitary realized through the flip identification.
pub fn factor_commutant(s: &Setting) -> Result<(Correspondence, FactorizationResult)> {
    let tol = s.tol;
    let (full, _) = is_full(&s.e, tol)?;
    if !full {
        return Err(Error::Precondition(
            "commutant construction needs a full module (faithful commutant lifting)".into(),
        ));
    }
    let rho = commutant_lifting(&s.e, tol)?;
    if rho.kernel_dim(tol) != 0 {
        return Err(Error::Precondition("commutant lifting is not faithful".into()));
    }
    let r_alg = rho.image_algebra(tol)?;
    let (rho_inv, conditioning) = invert_representation(&rho, &r_alg, tol)?;

    let kgens = s.theta.domain().generators();
    let lefts: Vec<CMatrix> = kgens.iter().map(|g| s.theta.apply(g)).collect();
    let w_space = solve_intertwiners(&lefts, kgens, tol)?.space;
    if w_space.dim() == 0 {
        return Err(Error::Validation("intertwiner space of θ is zero".into()));
    }
    let totality_rank = range_isometry(&hcat(w_space.basis()), tol).1.rank;
    if totality_rank != s.f.dim_h() {
        return Err(Error::Validation(format!(
            "intertwiners span {} of {} dimensions of K",
            totality_rank,
            s.f.dim_h()
        )));
    }
    let sigma = commutant_lifting(&s.f, tol)?;
    let raw_module = HilbertModule::trusted(r_alg.clone(), w_space.clone());
    let raw_prime = Correspondence::new(raw_module, sigma.clone(), tol)?;

    let w: Vec<CMatrix> = w_space.basis().to_vec();
    let flip = flip_unitary(&s.e, &w, &rho_inv, tol)?;
    let wg = &flip.wg;
    let prime_blocks: Vec<CMatrix> = (0..w.len()).map(|j| wg.block(j)).collect();
    let prime_space = OperatorSpace::span(wg.dim(), s.e.dim_g(), &prime_blocks, tol)?;
    let bprime = rho.domain().clone();
    let prime_module = HilbertModule::trusted(bprime, prime_space);
    let cprime_images: Vec<CMatrix> = sigma
        .domain()
        .basis()
        .iter()
        .map(|c| wg.lift(&sigma.apply(c)).0)
        .collect();
    let prime_action = Homomorphism::new(sigma.domain().clone(), wg.dim(), cprime_images, tol)?;
    let prime = Correspondence::new(prime_module, prime_action, tol)?;

    let fpp_raw = commutant_bimodule(&prime, tol)?;
    let trim = fpp_raw
        .module()
        .trim()
        .map(|t| t.embedding.clone())
        .unwrap_or_else(|| identity(wg.dim()));
    // Identify C'' with C and B'' with B as the same concrete algebras.
    let fpp_module = HilbertModule::trusted(s.f.base().clone(), fpp_raw.module().space().clone());
    let fpp_action = Homomorphism::from_fn(
        s.base().clone(),
        fpp_raw.module().dim_h(),
        |b| fpp_raw.action().apply(b),
        tol,
    )?;
    let fpp = Correspondence::new(fpp_module, fpp_action, tol)?;
    let action_agreement = s
        .base()
        .basis()
        .iter()
        .map(|b| op_norm(&(&trim * fpp.action().apply(b) - flip.b_action.apply(b) * &trim)))
        .fold(0.0, f64::max);

    let wgc = wg.clone();
    let trim_c = trim.clone();
    let result = finish(
        s,
        Method::Commutant,
        fpp,
        |_, x, _| {
            let per_w: Vec<CMatrix> = w.iter().map(|wj| wj * x).collect();
            wgc.define_map(&per_w).0 * &trim_c
        },
        MethodData::Commutant(Box::new(CommutantData {
            raw_prime: raw_prime.clone(),
            prime,
            flip,
            lifting_conditioning: conditioning,
            totality_rank,
            trim,
            action_agreement,
        })),
    )?;
    Ok((raw_prime, result))
}

/// The `E*` basis as elements of `E*` in `B(H, G)` and the corresponding `y ∈ E`.
fn dual_pairs(mss: &FactorizationResult) -> Result<(Vec<CMatrix>, &TensorProduct)> {
    match &mss.data {
        MethodData::Mss { dual_f, dual_embed } => {
            let ys = dual_f.space.list().iter().map(|d| dual_embed * d).collect();
            Ok((ys, dual_f))
        }
        _ => Err(Error::Precondition("expected a result of the mss construction".into())),
    }
}

/// `F_θ → F_M` for any method through `y* ⊙ k ↦ T_y* u_M* k`; used as an
/// independent cross-check of the direct formulas.
pub fn canonical_from_mss(
    s: &Setting,
    mss: &FactorizationResult,
    other: &FactorizationResult,
) -> Result<ModuleUnitary> {
    let (ystars, dual_f) = dual_pairs(mss)?;
    let targets: Vec<CMatrix> = ystars
        .iter()
        .map(|ys| other.tensor.space.t_op(&ys.adjoint()).adjoint() * other.unitary.map.adjoint())
        .collect();
    let _ = s;
    let (map, cons) = dual_f.space.define_map(&targets);
    Ok(ModuleUnitary::certify(
        format!("F[mss] → F[{}] (contraction)", other.method),
        map,
        cons,
        &mss.correspondence,
        &other.correspondence,
    ))
}

/// The comparison unitary `a → b` between two factorizations of the same θ.
///
/// Direct formulas: mss→unit-vector, mss→qons, unit-vector→unit-vector,
/// mss→commutant and mss→mss. Every other ordered pair is composed through
/// the mss result and flagged as composed.
pub fn compare(
    s: &Setting,
    a: &FactorizationResult,
    b: &FactorizationResult,
    mss: &FactorizationResult,
) -> Result<ModuleUnitary> {
    let theta = &s.theta;
    match (&a.data, &b.data) {
        (MethodData::Mss { .. }, MethodData::Mss { .. }) => {
            let n = a.correspondence.module().dim_h();
            Ok(ModuleUnitary::certify(
                "F[mss] → F[mss]",
                identity(n),
                0.0,
                &a.correspondence,
                &b.correspondence,
            ))
        }
        (MethodData::Mss { .. }, MethodData::UnitVector { xi, w }) => {
            let (ystars, dual_f) = dual_pairs(a)?;
            let targets: Vec<CMatrix> = ystars.iter().map(|ys| w.adjoint() * theta.apply(&(xi * ys))).collect();
            let (map, cons) = dual_f.space.define_map(&targets);
            Ok(ModuleUnitary::certify(
                "F[mss] → F[unit-vector]",
                map,
                cons,
                &a.correspondence,
                &b.correspondence,
            ))
        }
        (MethodData::Mss { .. }, MethodData::Qons { family, ws }) => {
            let (ystars, dual_f) = dual_pairs(a)?;
            let targets: Vec<CMatrix> = ystars
                .iter()
                .map(|ys| {
                    let blocks: Vec<CMatrix> = family
                        .iter()
                        .zip(ws)
                        .map(|(eb, w)| w.adjoint() * theta.apply(&(eb * ys)))
                        .collect();
                    vcat(&blocks)
                })
                .collect();
            let (map, cons) = dual_f.space.define_map(&targets);
            Ok(ModuleUnitary::certify(
                "F[mss] → F[qons]",
                map,
                cons,
                &a.correspondence,
                &b.correspondence,
            ))
        }
        (MethodData::UnitVector { xi, w }, MethodData::UnitVector { xi: xi2, w: w2 }) => {
            let map = w2.adjoint() * theta.apply(&(xi2 * xi.adjoint())) * w;
            Ok(ModuleUnitary::certify(
                "F[unit-vector] → F[unit-vector']",
                map,
                0.0,
                &a.correspondence,
                &b.correspondence,
            ))
        }
        (MethodData::Mss { .. }, MethodData::Commutant(d)) => {
            // y* ⊙ w h ↦ T_w (y* h), read through T_w h ↦ w h.
            let (ystars, dual_f) = dual_pairs(a)?;
            let wg = &d.flip.wg;
            let mut cons: f64 = 0.0;
            let targets: Vec<CMatrix> = ystars
                .iter()
                .map(|ys| {
                    let per_w: Vec<CMatrix> = (0..wg.list().len()).map(|j| wg.block(j) * ys).collect();
                    let (m, r) = d.flip.wh.define_map(&per_w);
                    cons = cons.max(r);
                    d.trim.adjoint() * m * d.flip.contract.adjoint()
                })
                .collect();
            let (map, r) = dual_f.space.define_map(&targets);
            Ok(ModuleUnitary::certify(
                "F[mss] → F[commutant]",
                map,
                cons.max(r).max(d.flip.consistency),
                &a.correspondence,
                &b.correspondence,
            ))
        }
        _ => {
            let to_a = compare(s, mss, a, mss)?;
            let to_b = compare(s, mss, b, mss)?;
            let inv = to_a.inverse(&a.correspondence, &mss.correspondence);
            let mut out = inv.then(&to_b, &a.correspondence, &b.correspondence);
            out.label = format!("F[{}] → F[{}] (through mss)", a.method, b.method);
            Ok(out)
        }
    }
}

/// The canonical unitary from a method's correspondence onto a known `M`
/// with `F = E ⊙ M`: the map `Φ` solving `u (T_x h) = T^M_x Φ h`.
pub fn oracle_unitary(
    s: &Setting,
    result: &FactorizationResult,
    oracle: &Correspondence,
    t_ops: &[CMatrix],
) -> Result<ModuleUnitary> {
    if t_ops.len() != s.e.dim() {
        return Err(Error::dims("oracle embedding", s.e.dim(), t_ops.len()));
    }
    let lhs = vcat(t_ops);
    let rhs_blocks: Vec<CMatrix> = (0..s.e.dim())
        .map(|i| &result.unitary.map * result.tensor.space.t_op(&s.e.basis()[i]))
        .collect();
    let rhs = vcat(&rhs_blocks);
    let (inv, _) = pinv(&lhs, s.tol);
    let phi = &inv * &rhs;
    let cons = (&lhs * &phi - &rhs).norm() / rhs.norm().max(1.0);
    Ok(ModuleUnitary::certify(
        format!("F[{}] → M", result.method),
        phi,
        cons,
        &result.correspondence,
        oracle,
    ))
}

/// `F = E ⊙ M` and `θ(a) = a ⊙ id` for a `B`-`C` correspondence `M`.
#[derive(Debug, Clone)]
pub struct Induced {
    pub f: HilbertModule,
    pub theta: Homomorphism,
    pub tensor: TensorProduct,
}

pub fn induced_homomorphism(e: &HilbertModule, m: &Correspondence, tol: f64) -> Result<Induced> {
    let ec = Correspondence::over_compacts(e, tol)?;
    let tensor = interior_tensor(&ec, m, tol)?;
    let f = tensor.result.module().clone();
    let theta = tensor.result.action().clone();
    theta.validate(tol)?;
    Ok(Induced { f, theta, tensor })
}

/// Full, with left action an isomorphism onto `K(M)`.
pub fn is_morita_equivalence(m: &Correspondence, tol: f64) -> Result<bool> {
    let (full, _) = is_full(m.module(), tol)?;
    if !full {
        return Ok(false);
    }
    if m.action().kernel_dim(tol) != 0 {
        return Ok(false);
    }
    let k = finite_rank_algebra(m.module(), tol)?;
    let image = m.action().image_algebra(tol)?;
    Ok(algebras_equal(&image, &k, check_tol(tol))?.0)
}

/// A factorization of `θ: M_n → M_k` through a Hilbert space.
#[derive(Debug, Clone, Serialize)]
pub struct HilbertFactorization {
    pub dim: usize,
    /// Orthonormal basis: operators `C^n → C^k` (intertwiners) or vectors
    /// in `C^k` (Bhat space), stored as matrices.
    #[serde(skip)]
    pub basis: Vec<CMatrix>,
    #[serde(skip)]
    pub u: CMatrix,
    pub residual_unitary: f64,
    pub theta_residual: f64,
}

fn require_full_matrix_domain(theta: &Homomorphism) -> Result<usize> {
    let n = theta.domain().ambient_dim();
    if theta.domain().dim() != n * n {
        return Err(Error::Precondition("domain must be a full matrix algebra".into()));
    }
    Ok(n)
}

/// `H^A = {x : θ(a) x = x a}` with `x ⊗ h ↦ x h`.
pub fn hilbert_space_intertwiners(theta: &Homomorphism, tol: f64) -> Result<HilbertFactorization> {
    let n = require_full_matrix_domain(theta)?;
    let gens = theta.domain().generators();
    let lefts: Vec<CMatrix> = gens.iter().map(|g| theta.apply(g)).collect();
    let sol = solve_intertwiners(&lefts, gens, tol)?;
    // HS-orthonormal intertwiners satisfy x* x = 1/n; rescale to isometries.
    let scale = C64::new((n as f64).sqrt(), 0.0);
    let basis: Vec<CMatrix> = sol.space.basis().iter().map(|x| x * scale).collect();
    let k = theta.codomain_dim();
    let u = if basis.is_empty() {
        CMatrix::zeros(k, 0)
    } else {
        hcat(&basis)
    };
    let m = basis.len();
    let theta_residual = theta
        .domain()
        .basis()
        .iter()
        .map(|a| op_norm(&(theta.apply(a) - &u * identity(m).kronecker(a) * u.adjoint())))
        .fold(0.0, f64::max);
    Ok(HilbertFactorization {
        dim: m,
        residual_unitary: unitarity_defect(&u),
        theta_residual,
        basis,
        u,
    })
}

/// `H^B = θ(ω ω*) K` with `h ⊗ x ↦ θ(h ω*) x`.
pub fn hilbert_space_bhat(theta: &Homomorphism, omega: &CMatrix, tol: f64) -> Result<HilbertFactorization> {
    let n = require_full_matrix_domain(theta)?;
    if omega.shape() != (n, 1) || (omega.norm() - 1.0).abs() > check_tol(tol) {
        return Err(Error::Precondition("ω must be a unit vector in C^n".into()));
    }
    let (w, _) = range_isometry(&theta.apply(&(omega * omega.adjoint())), tol);
    let m = w.ncols();
    let mut cols = Vec::with_capacity(n);
    for e in 0..n {
        let h = crate::numkernel::matrix_unit(n, 1, e, 0);
        cols.push(theta.apply(&(h * omega.adjoint())) * &w);
    }
    let u = hcat(&cols);
    let theta_residual = theta
        .domain()
        .basis()
        .iter()
        .map(|a| op_norm(&(theta.apply(a) - &u * a.kronecker(&identity(m)) * u.adjoint())))
        .fold(0.0, f64::max);
    let basis = (0..m)
        .map(|j| CMatrix::from_column_slice(w.nrows(), 1, w.column(j).as_slice()))
        .collect();
    Ok(HilbertFactorization {
        dim: m,
        residual_unitary: unitarity_defect(&u),
        theta_residual,
        basis,
        u,
    })
}

/// Amplification `a ↦ a ⊗ 1_m` of `M_n`, optionally conjugated by a unitary.
pub fn amplification(n: usize, m: usize, twist: Option<&CMatrix>, tol: f64) -> Result<Homomorphism> {
    let dom = FiniteCStarAlgebra::full(n);
    Homomorphism::from_fn(
        dom,
        n * m,
        |a| {
            let amp = a.kronecker(&identity(m));
            match twist {
                Some(u) => u * amp * u.adjoint(),
                None => amp,
            }
        },
        tol,
    )
}

/// `B'`-module structure of the intertwiners for `θ = id` is `ρ'(B')`.
pub fn identity_prime_matches_commutant(s: &Setting, raw_prime: &Correspondence) -> Result<f64> {
    let rho = commutant_lifting(&s.e, s.tol)?;
    let image = rho.image_algebra(s.tol)?;
    Ok(crate::numkernel::subspace_equal(raw_prime.module().space(), image.space(), check_tol(s.tol))?.1)
}

/// Largest `‖θ(a) x − x a‖` over the given intertwiners.
pub fn intertwiner_defect(theta: &Homomorphism, xs: &[CMatrix]) -> f64 {
    let mut worst: f64 = 0.0;
    for a in theta.domain().basis() {
        let ta = theta.apply(a);
        for x in xs {
            worst = worst.max((&ta * x - x * a).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbmod::{build_module, dual_qons_family};
    use crate::numkernel::{matrix_unit, seeded_rng, DEFAULT_TOL};
    use rand::Rng;
    use rand_distr::StandardNormal;

    const TOL: f64 = DEFAULT_TOL;
    const PASS: f64 = 1e-8;

    fn b_alg() -> FiniteCStarAlgebra {
        FiniteCStarAlgebra::build_algebra(&[(1, 1), (2, 1)])
    }

    fn m3_module() -> HilbertModule {
        let e = |i, j| matrix_unit(3, 3, i, j);
        build_module(&b_alg(), &[e(1, 0), e(2, 0), e(0, 1), e(0, 2)], TOL).unwrap()
    }

    /// `B ⊕ B` as columns in `B(C^3, C^6)`.
    fn column_pair() -> HilbertModule {
        let top = vcat(&[identity(3), CMatrix::zeros(3, 3)]);
        let bottom = vcat(&[CMatrix::zeros(3, 3), identity(3)]);
        build_module(&b_alg(), &[top, bottom], TOL).unwrap()
    }

    fn random_unitary(n: usize, tag: u64) -> CMatrix {
        let mut rng = seeded_rng(tag);
        let g = CMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        g.qr().q()
    }

    /// `B` acting on `C^6` by a twisted doubling, as a correspondence over `C`.
    fn hilbert_oracle() -> Correspondence {
        let u = random_unitary(6, 11);
        let rep = Homomorphism::from_fn(b_alg(), 6, |b| &u * b.kronecker(&identity(2)) * u.adjoint(), TOL).unwrap();
        let module = HilbertModule::trusted(FiniteCStarAlgebra::scalars(1), OperatorSpace::full(6, 1));
        Correspondence::new(module, rep, TOL).unwrap()
    }

    fn setting_for(e: &HilbertModule, m: &Correspondence) -> (Setting, Induced) {
        let ind = induced_homomorphism(e, m, TOL).unwrap();
        let s = Setting::new(e.clone(), ind.f.clone(), ind.theta.clone(), TOL).unwrap();
        (s, ind)
    }

    fn assert_factorization(r: &FactorizationResult) {
        assert!(r.theta_residual < PASS, "{}: θ residual {}", r.method, r.theta_residual);
        assert!(r.unitary.passes(PASS), "{}: {:?}", r.method, r.unitary);
        assert!(r.max_residual() < PASS, "{}: {}", r.method, r.max_residual());
    }

    #[test]
    fn all_methods_factor_identity() {
        let e = m3_module();
        let (s, ind) = setting_for(&e, &Correspondence::identity(e.base()));
        let mss = factor_mss(&s).unwrap();
        assert_factorization(&mss);
        let fam = dual_qons_family(&e, TOL).unwrap();
        let q = factor_qons(&s, &fam).unwrap();
        assert_factorization(&q);
        let (_, comm) = factor_commutant(&s).unwrap();
        assert_factorization(&comm);
        for r in [&mss, &q, &comm] {
            let t_ops: Vec<CMatrix> = e.basis().iter().map(|x| ind.tensor.space.t_op(x)).collect();
            let o = oracle_unitary(&s, r, &Correspondence::identity(e.base()), &t_ops).unwrap();
            assert!(o.passes(PASS), "{}: {:?}", r.method, o);
        }
    }

    #[test]
    fn comparisons_agree_with_contraction() {
        let e = m3_module();
        let (s, _) = setting_for(&e, &hilbert_oracle());
        let mss = factor_mss(&s).unwrap();
        let fam = dual_qons_family(&e, TOL).unwrap();
        let q = factor_qons(&s, &fam).unwrap();
        let (_, comm) = factor_commutant(&s).unwrap();
        for other in [&q, &comm] {
            assert_factorization(other);
            let direct = compare(&s, &mss, other, &mss).unwrap();
            assert!(direct.passes(PASS), "{direct:?}");
            assert!(!direct.composed);
            let contracted = canonical_from_mss(&s, &mss, other).unwrap();
            assert!((&direct.map - &contracted.map).norm() < 1e-7);
        }
        let back = compare(&s, &comm, &q, &mss).unwrap();
        assert!(back.composed && back.passes(PASS), "{back:?}");
    }

    #[test]
    fn unit_vectors_and_triangle() {
        let e = column_pair();
        let (s, ind) = setting_for(&e, &hilbert_oracle());
        let mss = factor_mss(&s).unwrap();
        let xi = vcat(&[identity(3), CMatrix::zeros(3, 3)]);
        let mut v = identity(3);
        v.view_mut((1, 1), (2, 2)).copy_from(&random_unitary(2, 5));
        let (c0, s0) = (0.6, 0.8);
        let xi2 = vcat(&[identity(3) * C64::new(c0, 0.0), v * C64::new(0.0, s0)]);
        let r1 = factor_unit_vector(&s, &xi).unwrap();
        let r2 = factor_unit_vector(&s, &xi2).unwrap();
        assert_factorization(&r1);
        assert_factorization(&r2);
        let d12 = compare(&s, &r1, &r2, &mss).unwrap();
        let m1 = compare(&s, &mss, &r1, &mss).unwrap();
        let m2 = compare(&s, &mss, &r2, &mss).unwrap();
        assert!(d12.passes(PASS) && m1.passes(PASS) && m2.passes(PASS));
        let tri = op_norm(&(&d12.map * &m1.map - &m2.map));
        assert!(tri < PASS, "triangle {tri}");
        let t_ops: Vec<CMatrix> = e.basis().iter().map(|x| ind.tensor.space.t_op(x)).collect();
        let o = oracle_unitary(&s, &r1, &hilbert_oracle(), &t_ops).unwrap();
        assert!(o.passes(PASS), "{o:?}");
    }

    #[test]
    fn rejects_non_unit_vector() {
        let e = column_pair();
        let (s, _) = setting_for(&e, &Correspondence::identity(e.base()));
        let bad = vcat(&[matrix_unit(3, 3, 0, 0), CMatrix::zeros(3, 3)]);
        assert!(matches!(factor_unit_vector(&s, &bad), Err(Error::Precondition(_))));
    }

    #[test]
    fn morita_checks() {
        let e = m3_module();
        assert!(is_morita_equivalence(&Correspondence::identity(e.base()), TOL).unwrap());
        assert!(!is_morita_equivalence(&hilbert_oracle(), TOL).unwrap());
    }

    #[test]
    fn hilbert_space_factorizations() {
        let u = random_unitary(6, 3);
        let theta = amplification(3, 2, Some(&u), TOL).unwrap();
        let ha = hilbert_space_intertwiners(&theta, TOL).unwrap();
        assert_eq!(ha.dim, 2);
        assert!(ha.residual_unitary < PASS && ha.theta_residual < PASS);
        let mut omega = CMatrix::zeros(3, 1);
        omega[(1, 0)] = C64::new(0.6, 0.0);
        omega[(2, 0)] = C64::new(0.0, 0.8);
        let hb = hilbert_space_bhat(&theta, &omega, TOL).unwrap();
        assert_eq!(hb.dim, 2);
        assert!(hb.residual_unitary < PASS && hb.theta_residual < PASS);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }
}
