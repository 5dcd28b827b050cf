//! Certified unitaries between the Hilbert spaces underlying two
//! correspondences.
//!
//! A map `U: K_s → K_t` between the spaces on which two concrete modules act
//! induces `z ↦ U z` on module elements. Certification measures how far `U`
//! is from unitary, whether it carries the source module onto the target
//! module, and whether it intertwines the left actions.

use serde::Serialize;

use crate::hilbmod::Correspondence;
use crate::numkernel::{identity, op_norm, CMatrix};

#[derive(Debug, Clone, Serialize)]
pub struct ModuleUnitary {
    pub label: String,
    pub source_dim: usize,
    pub target_dim: usize,
    pub hilbert_dims: (usize, usize),
    #[serde(skip)]
    pub map: CMatrix,
    pub residual_unitary: f64,
    pub residual_intertwine: f64,
    /// How well the defining formula determined a single linear map.
    pub residual_consistency: f64,
    /// Built by composing other certified maps rather than from a direct formula.
    pub composed: bool,
}

pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let a = op_norm(&(u.adjoint() * u - identity(u.ncols())));
    let b = op_norm(&(u * u.adjoint() - identity(u.nrows())));
    a.max(b)
}

/// Largest `‖U φ_s(a) − φ_t(a) U‖` over the source's left basis, plus the
/// largest module residual of `U z` over the source basis (relative).
pub fn intertwining_defect(u: &CMatrix, source: &Correspondence, target: &Correspondence) -> f64 {
    let sm = source.module();
    let tm = target.module();
    if u.shape() != (tm.dim_h(), sm.dim_h()) || sm.dim_g() != tm.dim_g() {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for z in sm.basis() {
        let uz = u * z;
        worst = worst.max(tm.space().residual(&uz) / z.norm().max(f64::MIN_POSITIVE));
    }
    if sm.dim() != tm.dim() {
        worst = worst.max(1.0);
    }
    for a in source.left().basis() {
        let lhs = u * source.action().apply(a);
        let rhs = target.action().apply(a) * u;
        worst = worst.max(op_norm(&(lhs - rhs)));
    }
    worst
}

impl ModuleUnitary {
    pub fn certify(
        label: impl Into<String>,
        map: CMatrix,
        consistency: f64,
        source: &Correspondence,
        target: &Correspondence,
    ) -> Self {
        ModuleUnitary {
            label: label.into(),
            source_dim: source.module().dim(),
            target_dim: target.module().dim(),
            hilbert_dims: (map.ncols(), map.nrows()),
            residual_unitary: unitarity_defect(&map),
            residual_intertwine: intertwining_defect(&map, source, target),
            residual_consistency: consistency,
            map,
            composed: false,
        }
    }

    /// `next ∘ self`, recertified between `source` and `target`.
    pub fn then(&self, next: &ModuleUnitary, source: &Correspondence, target: &Correspondence) -> Self {
        let mut out = Self::certify(
            format!("{} then {}", self.label, next.label),
            &next.map * &self.map,
            self.residual_consistency.max(next.residual_consistency),
            source,
            target,
        );
        out.composed = true;
        out
    }

    pub fn inverse(&self, source: &Correspondence, target: &Correspondence) -> Self {
        let mut out = Self::certify(
            format!("inverse of {}", self.label),
            self.map.adjoint(),
            self.residual_consistency,
            source,
            target,
        );
        out.composed = self.composed;
        out
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_unitary
            .max(self.residual_intertwine)
            .max(self.residual_consistency)
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.max_residual() <= threshold
    }
}
