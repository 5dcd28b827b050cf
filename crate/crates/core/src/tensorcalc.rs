//! Interior tensor products, realized concretely.
//!
//! For a list `x_1..x_d` in a module `X` over `B` and a representation `π` of
//! `B` on `C^n`, the Hilbert space `X ⊙_π C^n` is the quotient of
//! `C^d ⊗ C^n` by the kernel of the Gram matrix with blocks `π(x_i* x_j)`.
//! It is stored through a factorization `Gram = V* V`; the `i`-th `r × n`
//! block of `V` is the operator `T_{x_i}: h ↦ x_i ⊙ h`.

use crate::certify::ModuleUnitary;
use crate::cstar::{algebras_equal, check_tol, FiniteCStarAlgebra, Homomorphism};
use crate::error::{Error, Result};
use crate::hilbmod::{is_full, Correspondence, HilbertModule};
use crate::numkernel::{gram_quotient, hcat, pinv, CMatrix, OperatorSpace, RankCut, C64};

#[derive(Debug, Clone)]
pub struct TensorSpace {
    list: Vec<CMatrix>,
    n: usize,
    v: CMatrix,
    v_pinv: CMatrix,
    /// Maps a vectorized element of `span(list)` to coefficients on the list.
    coeff: CMatrix,
    cut: RankCut,
}

impl TensorSpace {
    /// Builds `span(list) ⊙_π C^n`.
    pub fn new(list: &[CMatrix], rep: &dyn Fn(&CMatrix) -> CMatrix, n: usize, tol: f64, context: &str) -> Result<Self> {
        let d = list.len();
        let mut gram = CMatrix::zeros(d * n, d * n);
        for i in 0..d {
            for j in i..d {
                let block = rep(&(list[i].adjoint() * &list[j]));
                if block.shape() != (n, n) {
                    return Err(Error::dims(
                        context,
                        format!("{n}x{n}"),
                        format!("{}x{}", block.nrows(), block.ncols()),
                    ));
                }
                gram.view_mut((i * n, j * n), (n, n)).copy_from(&block);
                if i != j {
                    gram.view_mut((j * n, i * n), (n, n)).copy_from(&block.adjoint());
                }
            }
        }
        let q = gram_quotient(&gram, tol, context)?;
        let coeff = if d == 0 {
            CMatrix::zeros(0, 0)
        } else {
            let (r, c) = list[0].shape();
            let mut stacked = CMatrix::zeros(r * c, d);
            for (k, x) in list.iter().enumerate() {
                stacked.column_mut(k).copy_from_slice(x.as_slice());
            }
            pinv(&stacked, tol).0
        };
        Ok(TensorSpace {
            list: list.to_vec(),
            n,
            v: q.v,
            v_pinv: q.v_pinv,
            coeff,
            cut: q.cut,
        })
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn list(&self) -> &[CMatrix] {
        &self.list
    }

    pub fn cut(&self) -> &RankCut {
        &self.cut
    }

    /// `T_{x_i}`.
    pub fn block(&self, i: usize) -> CMatrix {
        self.v.columns(i * self.n, self.n).into_owned()
    }

    /// `T_x` for `x` in the span of the list.
    pub fn t_op(&self, x: &CMatrix) -> CMatrix {
        let vx = crate::numkernel::vectorize(x);
        let k = &self.coeff * vx;
        let mut out = CMatrix::zeros(self.dim(), self.n);
        for (i, ci) in k.iter().enumerate() {
            if *ci != C64::new(0.0, 0.0) {
                out += self.block(i) * *ci;
            }
        }
        out
    }

    /// The linear map on the tensor space sending `T_{x_i} h` to `targets[i] h`,
    /// with the relative residual of that prescription.
    pub fn define_map(&self, targets: &[CMatrix]) -> (CMatrix, f64) {
        assert_eq!(targets.len(), self.list.len());
        let rows = targets.first().map_or(0, |t| t.nrows());
        if targets.is_empty() {
            return (CMatrix::zeros(rows, self.dim()), 0.0);
        }
        let big = hcat(targets);
        let map = &big * &self.v_pinv;
        let res = (&map * &self.v - &big).norm() / big.norm().max(1.0);
        (map, res)
    }

    /// `(a ⊙ id)` for an operator `a` acting on the left of the list elements.
    pub fn lift(&self, a: &CMatrix) -> (CMatrix, f64) {
        let targets: Vec<CMatrix> = self.list.iter().map(|x| self.t_op(&(a * x))).collect();
        self.define_map(&targets)
    }

    /// Writes `k = Σ T_{x_i} h_i`; returns the `h_i` stacked (`d·n` rows).
    pub fn decompose(&self, k: &CMatrix) -> CMatrix {
        &self.v_pinv * k
    }
}

/// `X ⊙ Y` for correspondences `X: A → B` and `Y: B → C`, re-concretized as an
/// `A`-`C` correspondence acting on `X ⊙ H_Y`.
#[derive(Debug, Clone)]
pub struct TensorProduct {
    pub space: TensorSpace,
    pub result: Correspondence,
    /// Largest consistency residual among the lifted left actions.
    pub lift_residual: f64,
}

fn same_algebra(a: &FiniteCStarAlgebra, b: &FiniteCStarAlgebra, tol: f64) -> Result<bool> {
    Ok(a.ambient_dim() == b.ambient_dim() && algebras_equal(a, b, check_tol(tol))?.0)
}

pub fn interior_tensor(x: &Correspondence, y: &Correspondence, tol: f64) -> Result<TensorProduct> {
    if !same_algebra(x.module().base(), y.left(), tol)? {
        return Err(Error::Precondition(
            "interior tensor product needs the base of the first factor to act on the second".into(),
        ));
    }
    let pi = y.action();
    let space = TensorSpace::new(
        x.module().basis(),
        &|m| pi.apply(m),
        y.module().dim_h(),
        tol,
        "interior tensor product Gram matrix",
    )?;
    let mut elems = Vec::with_capacity(x.module().dim() * y.module().dim());
    for i in 0..x.module().dim() {
        let t = space.block(i);
        for yj in y.module().basis() {
            elems.push(&t * yj);
        }
    }
    let mspace = OperatorSpace::span(space.dim(), y.module().dim_g(), &elems, tol)?;
    let module = HilbertModule::trusted(y.module().base().clone(), mspace);
    let mut lift_residual: f64 = 0.0;
    let images: Vec<CMatrix> = x
        .left()
        .basis()
        .iter()
        .map(|a| {
            let (m, r) = space.lift(&x.action().apply(a));
            lift_residual = lift_residual.max(r);
            m
        })
        .collect();
    let action = Homomorphism::new(x.left().clone(), space.dim(), images, tol)?;
    let result = Correspondence::new(module, action, tol)?;
    Ok(TensorProduct {
        space,
        result,
        lift_residual,
    })
}

impl TensorProduct {
    /// `x ⊙ y` as an element of the result module.
    pub fn embed(&self, x: &CMatrix, y: &CMatrix) -> CMatrix {
        self.space.t_op(x) * y
    }
}

/// The Hilbert space `G` (or `C^g`) as a module over `C` with left action of `B`.
pub fn space_as_correspondence(base: &FiniteCStarAlgebra) -> Correspondence {
    let g = base.ambient_dim();
    let scalars = FiniteCStarAlgebra::scalars(1);
    let module = HilbertModule::trusted(scalars, OperatorSpace::full(g, 1));
    Correspondence::trusted(module, Homomorphism::identity(base))
}

/// `H = E ⊙ G` and the unitary `x ⊙ g ↦ x g` onto the concrete `H`.
pub fn tensor_with_space(e: &HilbertModule, tol: f64) -> Result<(TensorProduct, ModuleUnitary)> {
    let ec = Correspondence::over_compacts(e, tol)?;
    let g = space_as_correspondence(e.base());
    let tp = interior_tensor(&ec, &g, tol)?;
    let (map, cons) = tp.space.define_map(e.basis());
    let target_module = HilbertModule::trusted(FiniteCStarAlgebra::scalars(1), OperatorSpace::full(e.dim_h(), 1));
    let target = Correspondence::trusted(target_module, ec.action().clone());
    let u = ModuleUnitary::certify("E⊙G → H", map, cons, &tp.result, &target);
    Ok((tp, u))
}

/// `E ⊙ E* ≅ K(E)` via `x ⊙ y* ↦ x y*` and `E* ⊙ E ≅ B_E` via `x* ⊙ y ↦ x* y`.
pub fn unit_identities(e: &HilbertModule, tol: f64) -> Result<(ModuleUnitary, ModuleUnitary)> {
    let ec = Correspondence::over_compacts(e, tol)?;
    let dual = crate::hilbmod::dual_module(e, tol)?;
    let k = ec.left().clone();

    let tp1 = interior_tensor(&ec, &dual, tol)?;
    let dual_embed = dual.module().trim().map(|t| t.embedding.clone());
    // E* may act on a trimmed copy of G; its vectors are W* g.
    let targets1: Vec<CMatrix> = e
        .basis()
        .iter()
        .map(|x| match &dual_embed {
            Some(w) => x * w,
            None => x.clone(),
        })
        .collect();
    let (map1, c1) = tp1.space.define_map(&targets1);
    let kmod = HilbertModule::trusted(k.clone(), k.space().clone());
    let ktarget = Correspondence::trusted(kmod, Homomorphism::identity(&k));
    let u1 = ModuleUnitary::certify("E⊙E* → K(E)", map1, c1, &tp1.result, &ktarget);

    let e_over_k = Correspondence::trusted(
        HilbertModule::trusted(e.base().clone(), e.space().clone()),
        Homomorphism::identity(&k),
    );
    let tp2 = interior_tensor(&dual, &e_over_k, tol)?;
    let (full, ideal) = is_full(e, tol)?;
    let w = ideal.embedding.clone();
    let targets2: Vec<CMatrix> = dual
        .module()
        .basis()
        .iter()
        .map(|xs| {
            let xs_g = match &dual_embed {
                Some(we) => we * xs,
                None => xs.clone(),
            };
            if full {
                xs_g
            } else {
                w.adjoint() * xs_g
            }
        })
        .collect();
    let (map2, c2) = tp2.space.define_map(&targets2);
    let b = e.base();
    let ideal_target = if full {
        Correspondence::identity(b)
    } else {
        let basis: Vec<CMatrix> = ideal.space.basis().iter().map(|m| w.adjoint() * m).collect();
        let module = HilbertModule::trusted(b.clone(), OperatorSpace::span(w.ncols(), b.ambient_dim(), &basis, tol)?);
        let images = b.basis().iter().map(|m| w.adjoint() * m * &w).collect();
        Correspondence::new(module, Homomorphism::new(b.clone(), w.ncols(), images, tol)?, tol)?
    };
    // The left B-action on E*⊙E comes from E*'s left action, which may be
    // compressed; compare on the common algebra B.
    let u2 = ModuleUnitary::certify("E*⊙E → B_E", map2, c2, &tp2.result, &ideal_target);
    Ok((u1, u2))
}

/// The canonical map `(X ⊙ Y) ⊙ Z → X ⊙ (Y ⊙ Z)` with its unitarity defect.
pub fn associator(x: &Correspondence, y: &Correspondence, z: &Correspondence, tol: f64) -> Result<ModuleUnitary> {
    let xy = interior_tensor(x, y, tol)?;
    let yz = interior_tensor(y, z, tol)?;
    let x_yz = interior_tensor(x, &yz.result, tol)?;
    // Span (X⊙Y)⊙Z over the elementary list T_x y rather than an orthonormal basis.
    let mut list = Vec::new();
    let mut targets = Vec::new();
    for (i, xi) in x.module().basis().iter().enumerate() {
        let tx = xy.space.block(i);
        let tx_outer = x_yz.space.t_op(xi);
        for yj in y.module().basis() {
            list.push(&tx * yj);
            targets.push(&tx_outer * yz.space.t_op(yj));
        }
    }
    let za = z.action().clone();
    let left_space = TensorSpace::new(&list, &|m| za.apply(m), z.module().dim_h(), tol, "associator")?;
    let (map, cons) = left_space.define_map(&targets);
    let xy_z = interior_tensor(&xy.result, z, tol)?;
    // Express the map on the orthonormal-basis realization of (X⊙Y)⊙Z.
    let bridge_targets: Vec<CMatrix> = xy.result.module().basis().iter().map(|w| left_space.t_op(w)).collect();
    let (bridge, c2) = xy_z.space.define_map(&bridge_targets);
    let full = &map * &bridge;
    Ok(ModuleUnitary::certify(
        "(X⊙Y)⊙Z → X⊙(Y⊙Z)",
        full,
        cons.max(c2),
        &xy_z.result,
        &x_yz.result,
    ))
}

/// Pieces of the identification `E ⊙ (W ⊙ G) ≅ W ⊙ (E ⊙ G) → K` for a
/// module `W ⊆ B(H, K)` over an algebra `R ⊆ B(H)` commuting with `K(E)`,
/// where `R` is identified with `B'` through `to_bprime`.
#[derive(Debug, Clone)]
pub struct Flip {
    /// `W ⊙ G` over `B'` via `to_bprime`.
    pub wg: TensorSpace,
    /// `B` acting on `W ⊙ G` by `T_w g ↦ T_w b g`.
    pub b_action: Homomorphism,
    /// `E ⊙ (W ⊙ G)`.
    pub e_wg: TensorSpace,
    /// `W ⊙ H`, `R` acting on `H` by its elements.
    pub wh: TensorSpace,
    /// `T_x T_w g ↦ T_w x g`.
    pub flip: CMatrix,
    /// `T_w x g ↦ T_x T_w g`.
    pub back: CMatrix,
    /// `T_w h ↦ w h`.
    pub contract: CMatrix,
    /// `T_x T_w g ↦ w x g`, built in one step.
    pub direct: CMatrix,
    pub consistency: f64,
}

impl Flip {
    pub fn flip_defect(&self) -> f64 {
        crate::certify::unitarity_defect(&self.flip)
    }

    /// `‖back ∘ flip − 1‖ + ‖flip ∘ back − 1‖` (operator norms).
    pub fn involution_defect(&self) -> f64 {
        let a = crate::numkernel::op_norm(&(&self.back * &self.flip - crate::numkernel::identity(self.flip.ncols())));
        let b = crate::numkernel::op_norm(&(&self.flip * &self.back - crate::numkernel::identity(self.flip.nrows())));
        a.max(b)
    }

    /// `‖direct − contract ∘ flip‖`.
    pub fn chain_defect(&self) -> f64 {
        crate::numkernel::op_norm(&(&self.direct - &self.contract * &self.flip))
    }
}

pub fn flip_unitary(e: &HilbertModule, w: &[CMatrix], to_bprime: &Homomorphism, tol: f64) -> Result<Flip> {
    let g = e.dim_g();
    let h = e.dim_h();
    for wj in w {
        if wj.ncols() != h {
            return Err(Error::dims("flip: W element columns", h, wj.ncols()));
        }
    }
    let wg = TensorSpace::new(w, &|m| to_bprime.apply(m), g, tol, "W⊙G Gram matrix")?;
    let mut cons: f64 = 0.0;
    let base = e.base();
    let b_images: Vec<CMatrix> = base
        .basis()
        .iter()
        .map(|b| {
            let targets: Vec<CMatrix> = (0..w.len()).map(|j| wg.block(j) * b).collect();
            let (m, r) = wg.define_map(&targets);
            cons = cons.max(r);
            m
        })
        .collect();
    let b_action = Homomorphism::new(base.clone(), wg.dim(), b_images, tol)?;
    let e_wg = TensorSpace::new(e.basis(), &|m| b_action.apply(m), wg.dim(), tol, "E⊙(W⊙G) Gram matrix")?;
    let wh = TensorSpace::new(w, &|m| m.clone(), h, tol, "W⊙H Gram matrix")?;

    let mut flip_targets = Vec::with_capacity(e.dim());
    let mut direct_targets = Vec::with_capacity(e.dim());
    for x in e.basis() {
        let per_w: Vec<CMatrix> = (0..w.len()).map(|j| wh.block(j) * x).collect();
        let (t, r) = wg.define_map(&per_w);
        cons = cons.max(r);
        flip_targets.push(t);
        let per_w_direct: Vec<CMatrix> = w.iter().map(|wj| wj * x).collect();
        let (t, r) = wg.define_map(&per_w_direct);
        cons = cons.max(r);
        direct_targets.push(t);
    }
    let (flip, r1) = e_wg.define_map(&flip_targets);
    let (direct, r2) = e_wg.define_map(&direct_targets);

    // Back: on H = span{x g}, for fixed w, x g ↦ T_x T_w g.
    let stacked = e.stacked();
    let (stacked_inv, _) = pinv(&stacked, tol);
    let mut back_targets = Vec::with_capacity(w.len());
    for j in 0..w.len() {
        let pieces: Vec<CMatrix> = (0..e.dim()).map(|i| e_wg.block(i) * wg.block(j)).collect();
        let big = hcat(&pieces);
        let m = &big * &stacked_inv;
        cons = cons.max((&m * &stacked - &big).norm() / big.norm().max(1.0));
        back_targets.push(m);
    }
    let (back, r3) = wh.define_map(&back_targets);
    let (contract, r4) = wh.define_map(w);
    cons = cons.max(r1).max(r2).max(r3).max(r4);
    Ok(Flip {
        wg,
        b_action,
        e_wg,
        wh,
        flip,
        back,
        contract,
        direct,
        consistency: cons,
    })
}
