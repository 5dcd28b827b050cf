//! Discrete product systems `E_t = E* ⊙_t E` of a unital endomorphism of
//! `B^a(E)`, and the composition law for the mss construction.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::certify::ModuleUnitary;
use crate::cstar::{check_tol, Homomorphism};
use crate::error::{Error, Result};
use crate::factorizations::{
    factor_mss, hilbert_space_bhat, hilbert_space_intertwiners, FactorizationResult, MethodData, Setting,
};
use crate::hilbmod::{Correspondence, HilbertModule};
use crate::numkernel::{op_norm, CMatrix};
use crate::tensorcalc::{associator, interior_tensor, TensorProduct, TensorSpace};

/// `(x* ⊙ y) ⊙ (y'* ⊙ z) ↦ x* ⊙ θ₂(y y'*) z` from `F_{θ₁} ⊙ F_{θ₂}` onto
/// `F_{θ₂θ₁}`, where `θ₂` is the homomorphism of `second`.
pub fn mss_product(
    first: &FactorizationResult,
    second: &FactorizationResult,
    second_setting: &Setting,
    composite: &FactorizationResult,
    tol: f64,
) -> Result<(TensorProduct, ModuleUnitary)> {
    let (na, emb_a) = mss_parts(first)?;
    let (nb, emb_b) = mss_parts(second)?;
    let (nc, emb_c) = mss_parts(composite)?;
    let theta2 = &second_setting.theta;
    let f = &second_setting.e;
    let p = interior_tensor(&first.correspondence, &second.correspondence, tol)?;

    let ystars_b: Vec<CMatrix> = nb.list().iter().map(|d| emb_b * d).collect();
    let mut list = Vec::new();
    let mut targets = Vec::new();
    let mut cons: f64 = 0.0;
    for j in 0..na.list().len() {
        let tx = na.block(j);
        let tx_c = nc.block(j);
        for y in f.basis() {
            list.push(&tx * y);
            let per_b: Vec<CMatrix> = ystars_b.iter().map(|ys| &tx_c * theta2.apply(&(y * ys))).collect();
            let (m, r) = nb.define_map(&per_b);
            cons = cons.max(r);
            targets.push(m);
        }
    }
    if emb_a.shape() != emb_c.shape() || na.list().len() != nc.list().len() {
        return Err(Error::Validation(
            "composite and first factor use different dual modules".into(),
        ));
    }
    let nb_action = second.correspondence.action().clone();
    let spanning = TensorSpace::new(
        &list,
        &|m| nb_action.apply(m),
        second.correspondence.module().dim_h(),
        tol,
        "product spanning set",
    )?;
    let (map, r1) = spanning.define_map(&targets);
    let bridge_targets: Vec<CMatrix> = first
        .correspondence
        .module()
        .basis()
        .iter()
        .map(|z| spanning.t_op(z))
        .collect();
    let (bridge, r2) = p.space.define_map(&bridge_targets);
    let u = ModuleUnitary::certify(
        format!("F[{}]⊙F[{}] → F[composite]", first.method, second.method),
        &map * &bridge,
        cons.max(r1).max(r2).max(p.lift_residual),
        &p.result,
        &composite.correspondence,
    );
    Ok((p, u))
}

fn mss_parts(r: &FactorizationResult) -> Result<(&TensorSpace, &CMatrix)> {
    match &r.data {
        MethodData::Mss { dual_f, dual_embed } => Ok((&dual_f.space, dual_embed)),
        _ => Err(Error::Precondition("expected a result of the mss construction".into())),
    }
}

/// `U ⊙ id: X ⊙ Z → Y ⊙ Z` for `U: X → Y`, between given realizations.
fn tensor_left(u: &CMatrix, source: &TensorProduct, target: &TensorProduct) -> (CMatrix, f64) {
    let targets: Vec<CMatrix> = source
        .space
        .list()
        .iter()
        .map(|z| target.space.t_op(&(u * z)))
        .collect();
    source.space.define_map(&targets)
}

/// `id ⊙ V: X ⊙ Y → X ⊙ Y'` for `V` on the Hilbert space of `Y`.
fn tensor_right(v: &CMatrix, source: &TensorProduct, target: &TensorProduct) -> (CMatrix, f64) {
    let targets: Vec<CMatrix> = source.space.list().iter().map(|x| target.space.t_op(x) * v).collect();
    source.space.define_map(&targets)
}

#[derive(Debug, Clone)]
pub struct ProductSystem {
    pub e: HilbertModule,
    pub theta: Homomorphism,
    pub settings: Vec<Setting>,
    /// `members[t - 1]` is the mss factorization of `θ^t`.
    pub members: Vec<FactorizationResult>,
    pub mult: BTreeMap<(usize, usize), (TensorProduct, ModuleUnitary)>,
    pub tol: f64,
}

impl ProductSystem {
    pub fn steps(&self) -> usize {
        self.members.len()
    }

    pub fn member(&self, t: usize) -> &Correspondence {
        &self.members[t - 1].correspondence
    }

    fn setting(&self, t: usize) -> &Setting {
        &self.settings[t - 1]
    }

    fn result(&self, t: usize) -> &FactorizationResult {
        &self.members[t - 1]
    }
}

pub fn discrete_product_system(e: &HilbertModule, theta: &Homomorphism, n: usize, tol: f64) -> Result<ProductSystem> {
    if n == 0 {
        return Err(Error::Precondition("a product system needs at least one step".into()));
    }
    let k = theta.domain();
    let ct = check_tol(tol);
    for (i, img) in theta.images().iter().enumerate() {
        let r = k.space().residual(img);
        if theta.codomain_dim() != e.dim_h() || r > ct * img.norm().max(1.0) {
            return Err(Error::Validation(format!(
                "θ is not an endomorphism of B^a(E): image of basis element {i} leaves it (residual {r:.3e})"
            )));
        }
    }
    let mut powers = vec![theta.clone()];
    for _ in 1..n {
        let next = theta.compose_after(powers.last().unwrap(), tol)?;
        powers.push(next);
    }
    let mut settings = Vec::with_capacity(n);
    let mut members = Vec::with_capacity(n);
    for p in powers {
        let s = Setting::new(e.clone(), e.clone(), p, tol)?;
        members.push(factor_mss(&s)?);
        settings.push(s);
    }
    let mut ps = ProductSystem {
        e: e.clone(),
        theta: theta.clone(),
        settings,
        members,
        mult: BTreeMap::new(),
        tol,
    };
    for s in 1..n {
        for t in 1..=(n - s) {
            let m = mss_product(ps.result(s), ps.result(t), ps.setting(t), ps.result(s + t), tol)?;
            ps.mult.insert((s, t), m);
        }
    }
    Ok(ps)
}

#[derive(Debug, Clone, Serialize)]
pub struct MemberDims {
    pub t: usize,
    pub dim_module: usize,
    pub dim_space: usize,
    pub theta_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssociativityEntry {
    pub r: usize,
    pub s: usize,
    pub t: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductSystemReport {
    pub steps: usize,
    pub members: Vec<MemberDims>,
    /// `(s, t, max residual of the multiplication unitary)`.
    pub multiplication: Vec<(usize, usize, f64)>,
    /// `(E_r ⊙ E_s) ⊙ E_t = E_r ⊙ (E_s ⊙ E_t)`.
    pub triple: Vec<AssociativityEntry>,
    /// `(E ⊙ E_s) ⊙ E_t = E ⊙ (E_s ⊙ E_t)`, reported with `r = 0`.
    pub module: Vec<AssociativityEntry>,
    pub max_residual: f64,
}

pub fn verify_associativity(ps: &ProductSystem) -> Result<ProductSystemReport> {
    let n = ps.steps();
    let tol = ps.tol;
    let members = (1..=n)
        .map(|t| {
            let r = ps.result(t);
            MemberDims {
                t,
                dim_module: r.correspondence.module().dim(),
                dim_space: r.correspondence.module().dim_h(),
                theta_residual: r.theta_residual,
            }
        })
        .collect();
    let multiplication: Vec<(usize, usize, f64)> = ps
        .mult
        .iter()
        .map(|(&(s, t), (_, u))| (s, t, u.max_residual()))
        .collect();

    let mut triple = Vec::new();
    for r in 1..n {
        for s in 1..n {
            for t in 1..n {
                if r + s + t > n {
                    continue;
                }
                let residual = triple_residual(ps, r, s, t, tol)?;
                triple.push(AssociativityEntry { r, s, t, residual });
            }
        }
    }
    let mut module = Vec::new();
    for s in 1..n {
        for t in 1..=(n - s) {
            let residual = module_residual(ps, s, t, tol)?;
            module.push(AssociativityEntry { r: 0, s, t, residual });
        }
    }
    let max_residual = multiplication
        .iter()
        .map(|m| m.2)
        .chain(triple.iter().map(|a| a.residual))
        .chain(module.iter().map(|a| a.residual))
        .fold(0.0, f64::max);
    Ok(ProductSystemReport {
        steps: n,
        members,
        multiplication,
        triple,
        module,
        max_residual,
    })
}

fn triple_residual(ps: &ProductSystem, r: usize, s: usize, t: usize, tol: f64) -> Result<f64> {
    let (er, es, et) = (ps.member(r), ps.member(s), ps.member(t));
    let (p_rs, m_rs) = &ps.mult[&(r, s)];
    let (p_st, m_st) = &ps.mult[&(s, t)];
    let (p_rst_left, m_rs_t) = &ps.mult[&(r + s, t)];
    let (p_r_st, m_r_st) = &ps.mult[&(r, s + t)];

    let xy_z = interior_tensor(&p_rs.result, et, tol)?;
    let x_yz = interior_tensor(er, &p_st.result, tol)?;
    let assoc = associator(er, es, et, tol)?;

    // (E_r ⊙ E_s) ⊙ E_t → E_{r+s} ⊙ E_t → E_{r+s+t}
    let (left, c1) = tensor_left(&m_rs.map, &xy_z, p_rst_left);
    let path_a = &m_rs_t.map * left;
    // (E_r ⊙ E_s) ⊙ E_t → E_r ⊙ (E_s ⊙ E_t) → E_r ⊙ E_{s+t} → E_{r+s+t}
    let (right, c2) = tensor_right(&m_st.map, &x_yz, p_r_st);
    let path_b = &m_r_st.map * right * &assoc.map;
    Ok(op_norm(&(path_a - path_b)).max(c1).max(c2).max(assoc.max_residual()))
}

fn module_residual(ps: &ProductSystem, s: usize, t: usize, tol: f64) -> Result<f64> {
    let ec = &ps.setting(1).e_corr;
    let (es, et) = (ps.member(s), ps.member(t));
    let (rs, rt, rst) = (ps.result(s), ps.result(t), ps.result(s + t));
    let (p_st, m_st) = &ps.mult[&(s, t)];

    let es_t = interior_tensor(&rs.tensor.result, et, tol)?;
    let e_st = interior_tensor(ec, &p_st.result, tol)?;
    let assoc = associator(ec, es, et, tol)?;

    // (E ⊙ E_s) ⊙ E_t → E ⊙ E_t → E
    let (left, c1) = tensor_left(&rs.unitary.map, &es_t, &rt.tensor);
    let path_a = &rt.unitary.map * left;
    // (E ⊙ E_s) ⊙ E_t → E ⊙ (E_s ⊙ E_t) → E ⊙ E_{s+t} → E
    let (right, c2) = tensor_right(&m_st.map, &e_st, &rst.tensor);
    let path_b = &rst.unitary.map * right * &assoc.map;
    Ok(op_norm(&(path_a - path_b)).max(c1).max(c2).max(assoc.max_residual()))
}

/// Certified comparison `F_{θ₂θ₁} ≅ F_{θ₁} ⊙ F_{θ₂}` for the mss construction.
#[derive(Debug, Clone, Serialize)]
pub struct CompositionReport {
    pub dims: (usize, usize, usize),
    pub unitary: ModuleUnitary,
}

pub fn composition_contravariance(
    e: &HilbertModule,
    f: &HilbertModule,
    g: &HilbertModule,
    theta1: &Homomorphism,
    theta2: &Homomorphism,
    tol: f64,
) -> Result<CompositionReport> {
    let s1 = Setting::new(e.clone(), f.clone(), theta1.clone(), tol)?;
    let s2 = Setting::new(f.clone(), g.clone(), theta2.clone(), tol)?;
    let composed = theta2.compose_after(theta1, tol)?;
    let s12 = Setting::new(e.clone(), g.clone(), composed, tol)?;
    let r1 = factor_mss(&s1)?;
    let r2 = factor_mss(&s2)?;
    let r12 = factor_mss(&s12)?;
    let (_, unitary) = mss_product(&r1, &r2, &s2, &r12, tol)?;
    Ok(CompositionReport {
        dims: (
            r1.correspondence.module().dim(),
            r2.correspondence.module().dim(),
            r12.correspondence.module().dim(),
        ),
        unitary,
    })
}

/// The two tensor orders for Hilbert-space factorizations of
/// `θ₁: M_n → M_k` and `θ₂: M_k → M_l`.
#[derive(Debug, Clone, Serialize)]
pub struct HilbertComposition {
    pub dims_intertwiners: (usize, usize, usize),
    pub dims_bhat: (usize, usize, usize),
    /// `H^A₂ ⊗ H^A₁ → H^A(θ₂θ₁)`, `x₂ ⊗ x₁ ↦ x₂ x₁`.
    pub intertwiner_defect: f64,
    /// `H^B₁ ⊗ H^B₂ → H^B(θ₂θ₁)`, `x₁ ⊗ x₂ ↦ θ₂(x₁ ω₂*) x₂`.
    pub bhat_defect: f64,
}

pub fn hilbert_composition(
    theta1: &Homomorphism,
    theta2: &Homomorphism,
    omega1: &CMatrix,
    omega2: &CMatrix,
    tol: f64,
) -> Result<HilbertComposition> {
    let composed = theta2.compose_after(theta1, tol)?;
    let a1 = hilbert_space_intertwiners(theta1, tol)?;
    let a2 = hilbert_space_intertwiners(theta2, tol)?;
    let a12 = hilbert_space_intertwiners(&composed, tol)?;
    // <x, y> = (x* y)_{00} for intertwiners with scalar inner products.
    let mut va = CMatrix::zeros(a12.dim, a1.dim * a2.dim);
    for (j2, x2) in a2.basis.iter().enumerate() {
        for (j1, x1) in a1.basis.iter().enumerate() {
            let prod = x2 * x1;
            for (l, h) in a12.basis.iter().enumerate() {
                va[(l, j2 * a1.dim + j1)] = (h.adjoint() * &prod)[(0, 0)];
            }
        }
    }
    let b1 = hilbert_space_bhat(theta1, omega1, tol)?;
    let b2 = hilbert_space_bhat(theta2, omega2, tol)?;
    let b12 = hilbert_space_bhat(&composed, omega1, tol)?;
    let mut vb = CMatrix::zeros(b12.dim, b1.dim * b2.dim);
    for (j1, x1) in b1.basis.iter().enumerate() {
        let op = theta2.apply(&(x1 * omega2.adjoint()));
        for (j2, x2) in b2.basis.iter().enumerate() {
            let img = &op * x2;
            for (l, h) in b12.basis.iter().enumerate() {
                vb[(l, j1 * b2.dim + j2)] = (h.adjoint() * &img)[(0, 0)];
            }
        }
    }
    Ok(HilbertComposition {
        dims_intertwiners: (a1.dim, a2.dim, a12.dim),
        dims_bhat: (b1.dim, b2.dim, b12.dim),
        intertwiner_defect: crate::certify::unitarity_defect(&va),
        bhat_defect: crate::certify::unitarity_defect(&vb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cstar::FiniteCStarAlgebra;
    use crate::factorizations::{amplification, induced_homomorphism};
    use crate::hilbmod::build_module;
    use crate::numkernel::{matrix_unit, C64, DEFAULT_TOL};

    const TOL: f64 = DEFAULT_TOL;

    fn m3_module() -> HilbertModule {
        let b = FiniteCStarAlgebra::build_algebra(&[(1, 1), (2, 1)]);
        let e = |i, j| matrix_unit(3, 3, i, j);
        build_module(&b, &[e(1, 0), e(2, 0), e(0, 1), e(0, 2)], TOL).unwrap()
    }

    fn columns(n: usize) -> HilbertModule {
        let cols: Vec<CMatrix> = (0..n).map(|i| matrix_unit(n, 1, i, 0)).collect();
        build_module(&FiniteCStarAlgebra::scalars(1), &cols, TOL).unwrap()
    }

    #[test]
    fn identity_product_system() {
        let e = m3_module();
        let ind = induced_homomorphism(&e, &Correspondence::identity(e.base()), TOL).unwrap();
        // Re-express θ = id on E's own H.
        let theta = Homomorphism::identity(ind.theta.domain());
        let ps = discrete_product_system(&e, &theta, 4, TOL).unwrap();
        let rep = verify_associativity(&ps).unwrap();
        assert!(rep.members.iter().all(|m| m.dim_module == e.base().dim()));
        assert_eq!(rep.triple.len(), 4);
        assert!(rep.max_residual < 1e-8, "{rep:?}");
    }

    #[test]
    fn inner_automorphism_gives_lines() {
        let e = columns(3);
        let u = matrix_unit(3, 3, 0, 1) + matrix_unit(3, 3, 1, 0) * C64::new(0.0, 1.0) + matrix_unit(3, 3, 2, 2);
        let k = crate::hilbmod::finite_rank_algebra(&e, TOL).unwrap();
        let theta = Homomorphism::from_fn(k, 3, |a| &u * a * u.adjoint(), TOL).unwrap();
        let ps = discrete_product_system(&e, &theta, 3, TOL).unwrap();
        let rep = verify_associativity(&ps).unwrap();
        assert!(rep.members.iter().all(|m| m.dim_module == 1));
        assert!(rep.max_residual < 1e-8, "{rep:?}");
    }

    #[test]
    fn collapsing_endomorphism() {
        // θ(diag(a, b)) = diag(a, a) on B = C ⊕ C over itself.
        let b = FiniteCStarAlgebra::build_algebra(&[(1, 1), (1, 1)]);
        let e = build_module(&b, &[b.unit()], TOL).unwrap();
        let k = crate::hilbmod::finite_rank_algebra(&e, TOL).unwrap();
        let theta = Homomorphism::from_fn(k, 2, |m| b.unit() * m[(0, 0)], TOL).unwrap();
        let ps = discrete_product_system(&e, &theta, 4, TOL).unwrap();
        let rep = verify_associativity(&ps).unwrap();
        assert!(rep.members.iter().all(|m| m.dim_module == 2), "{:?}", rep.members);
        assert!(rep.max_residual < 1e-8, "{rep:?}");
    }

    #[test]
    fn amplification_composition() {
        let (e, f, g) = (columns(2), columns(4), columns(12));
        let t1 = amplification(2, 2, None, TOL).unwrap();
        let t2 = amplification(4, 3, None, TOL).unwrap();
        let rep = composition_contravariance(&e, &f, &g, &t1, &t2, TOL).unwrap();
        assert_eq!(rep.dims, (2, 3, 6));
        assert!(rep.unitary.passes(1e-8), "{:?}", rep.unitary);
    }

    #[test]
    fn hilbert_tensor_orders() {
        let t1 = amplification(2, 3, None, TOL).unwrap();
        let t2 = amplification(6, 2, None, TOL).unwrap();
        let mut w1 = CMatrix::zeros(2, 1);
        w1[(0, 0)] = C64::new(1.0, 0.0);
        let mut w2 = CMatrix::zeros(6, 1);
        w2[(3, 0)] = C64::new(1.0, 0.0);
        let rep = hilbert_composition(&t1, &t2, &w1, &w2, TOL).unwrap();
        assert_eq!(rep.dims_intertwiners, (3, 2, 6));
        assert_eq!(rep.dims_bhat, (3, 2, 6));
        assert!(rep.intertwiner_defect < 1e-8 && rep.bhat_defect < 1e-8, "{rep:?}");
    }
}
