//! The full module over C⊕M₂ ⊆ M₃ without unit vectors.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repfactor_core::cstar::{block_decomposition, star_isomorphic};
use repfactor_core::factorizations::is_morita_equivalence;
use repfactor_core::harness::{golden_m3, parse_instance};
use repfactor_core::hilbmod::{
    adjointable_algebra, build_module, dual_family_residual, dual_qons_family, finite_rank_algebra, is_full,
    quasi_orthonormal_system, unit_vector_obstruction, verify_unit_vector,
};
use repfactor_core::numkernel::{identity, matrix_unit, subspace_equal, svd};
use repfactor_core::{CMatrix, Correspondence, FiniteCStarAlgebra, Homomorphism, C64, DEFAULT_TOL};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/m3_golden.json")
}

fn unit(i: usize, j: usize) -> CMatrix {
    matrix_unit(3, 3, i, j)
}

/// `a E₂₁ + b E₃₁ + c E₁₂ + d E₁₃` in 1-based matrix-unit notation.
fn element(k: [C64; 4]) -> CMatrix {
    unit(1, 0) * k[0] + unit(2, 0) * k[1] + unit(0, 1) * k[2] + unit(0, 2) * k[3]
}

fn random_coeffs(rng: &mut ChaCha8Rng) -> [C64; 4] {
    std::array::from_fn(|_| C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
}

#[test]
fn fixture_file_matches_builtin() {
    let loaded = parse_instance(&fixture()).unwrap();
    let builtin = golden_m3();
    assert_eq!((loaded.e.dim_g(), loaded.e.dim_h(), loaded.e.dim()), (3, 3, 4));
    let (eq, dist) = subspace_equal(loaded.e.space(), builtin.e.space(), DEFAULT_TOL).unwrap();
    assert!(eq, "distance {dist:e}");
}

#[test]
fn module_is_full_with_compacts_equal_to_adjointables() {
    let start = Instant::now();
    let e = golden_m3().e;
    assert_eq!(e.dim(), 4);
    let (full, ideal) = is_full(&e, DEFAULT_TOL).unwrap();
    assert!(full);
    assert_eq!(ideal.space.dim(), 5);
    let k = finite_rank_algebra(&e, DEFAULT_TOL).unwrap();
    let ba = adjointable_algebra(&e, DEFAULT_TOL).unwrap();
    let (eq, dist) = subspace_equal(k.space(), ba.space(), DEFAULT_TOL).unwrap();
    assert!(eq && dist <= 1e-9, "distance {dist:e}");
    let b = FiniteCStarAlgebra::build_algebra(&[(1, 1), (2, 1)]);
    assert!(star_isomorphic(&k, &b, DEFAULT_TOL).unwrap());
    assert_eq!(block_decomposition(&k, DEFAULT_TOL).unwrap(), vec![(1, 1), (2, 1)]);
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn compacts_are_spanned_by_the_expected_matrix_units() {
    let k = finite_rank_algebra(&golden_m3().e, DEFAULT_TOL).unwrap();
    for (i, j) in [(0, 0), (1, 1), (2, 2), (1, 2), (2, 1)] {
        assert!(k.contains(&unit(i, j), DEFAULT_TOL), "E{}{}", i + 1, j + 1);
    }
    assert!(!k.contains(&unit(0, 1), DEFAULT_TOL));
}

#[test]
fn no_random_candidate_is_a_unit_vector() {
    let e = golden_m3().e;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let k = random_coeffs(&mut rng);
        let xi = element(k);
        assert!(!verify_unit_vector(&e, &xi, DEFAULT_TOL).unwrap());
        // The M₂ corner of ξ*ξ is (c̄, d̄)ᵀ(c, d): rank at most one.
        let gram = xi.adjoint() * &xi;
        let corner = gram.view((1, 1), (2, 2)).into_owned();
        let expected = CMatrix::from_fn(2, 2, |i, j| k[2 + i].conj() * k[2 + j]);
        assert!((&corner - expected).norm() < 1e-12);
        let sv = svd(&corner, false, false).singular_values;
        assert!(sv.min() <= 1e-12 * sv.max().max(1.0));
    }
    // Exact matrix units are not unit vectors either.
    assert!(!verify_unit_vector(&e, &unit(1, 0), DEFAULT_TOL).unwrap());
}

#[test]
fn rank_certificate_names_the_m2_block() {
    let e = golden_m3().e;
    let obstruction = unit_vector_obstruction(&e, DEFAULT_TOL).unwrap().expect("obstruction");
    assert_eq!(obstruction.rank_of_block, 2);
    assert_eq!(obstruction.range_rank, 1);
}

#[test]
fn dual_family_has_three_members_summing_to_one() {
    let e = golden_m3().e;
    let family = dual_qons_family(&e, DEFAULT_TOL).unwrap();
    assert_eq!(family.len(), 3);
    let sum: CMatrix = family.iter().map(|x| x.adjoint() * x).sum();
    assert!((sum - identity(3)).norm() <= 1e-9);
    assert!(dual_family_residual(&e, &family) <= 1e-9);
}

#[test]
fn documented_dual_family_passes_the_identities() {
    let e = golden_m3().e;
    let family = vec![unit(1, 0), unit(0, 1), unit(0, 2)];
    assert!(dual_family_residual(&e, &family) < 1e-14);
}

#[test]
fn quasi_orthonormal_system_invariants() {
    let e = golden_m3().e;
    let q = quasi_orthonormal_system(&e, DEFAULT_TOL).unwrap();
    assert_eq!(q.len(), 3);
    assert!(q.check(&e).max() < 1e-10);
}

#[test]
fn morita_on_fixture_and_base_over_itself() {
    let e = golden_m3().e;
    let over_k = Correspondence::over_compacts(&e, DEFAULT_TOL).unwrap();
    assert!(is_morita_equivalence(&over_k, DEFAULT_TOL).unwrap());
    let b = FiniteCStarAlgebra::build_algebra(&[(1, 1), (2, 1)]);
    assert!(is_morita_equivalence(&Correspondence::identity(&b), DEFAULT_TOL).unwrap());
}

#[test]
fn morita_fails_for_scalar_left_action_on_columns() {
    let c = FiniteCStarAlgebra::scalars(1);
    let cols = vec![matrix_unit(2, 1, 0, 0), matrix_unit(2, 1, 1, 0)];
    let m = build_module(&c, &cols, DEFAULT_TOL).unwrap();
    let scalars = FiniteCStarAlgebra::scalars(2);
    let corr = Correspondence::new(m, Homomorphism::identity(&scalars), DEFAULT_TOL).unwrap();
    assert!(!is_morita_equivalence(&corr, DEFAULT_TOL).unwrap());
}

#[test]
fn morita_fails_for_non_full_module() {
    // A row over the diagonal algebra C⊕C only reaches the first summand.
    let b = FiniteCStarAlgebra::build_algebra(&[(1, 1), (1, 1)]);
    let m = build_module(&b, &[matrix_unit(1, 2, 0, 0)], DEFAULT_TOL).unwrap();
    assert!(!is_full(&m, DEFAULT_TOL).unwrap().0);
    let corr = Correspondence::over_compacts(&m, DEFAULT_TOL).unwrap();
    assert!(!is_morita_equivalence(&corr, DEFAULT_TOL).unwrap());
}
