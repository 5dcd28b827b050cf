//! Algebraic laws of the dense kernel on random low-rank matrices.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repfactor_core::numkernel::{
    hs_inner, hs_orthonormalize, identity, nullspace, op_norm, pinv, psd_sqrt_pinv, solve_intertwiners, subspace_equal,
    svd,
};
use repfactor_core::{CMatrix, C64, DEFAULT_TOL};

const TOL: f64 = DEFAULT_TOL;
const EPS: f64 = 1e-10;

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix {
    CMatrix::from_fn(r, c, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// An `r × c` matrix of rank exactly `k` (almost surely).
fn low_rank(seed: u64, r: usize, c: usize, k: usize) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gaussian(&mut rng, r, k) * gaussian(&mut rng, k, c)
}

fn shape() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 1usize..9, 1usize..9).prop_flat_map(|(seed, r, c)| (Just(seed), Just(r), Just(c), 0..=r.min(c)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs((seed, r, c, k) in shape()) {
        let m = low_rank(seed, r, c, k);
        let d = svd(&m, true, true);
        let (u, vt) = (d.u.unwrap(), d.v_t.unwrap());
        let s = CMatrix::from_diagonal(&d.singular_values.map(|x| C64::new(x, 0.0)));
        prop_assert!(op_norm(&(&u * s * &vt - &m)) <= EPS * m.norm().max(1.0));
        prop_assert!(d.singular_values.iter().zip(d.singular_values.iter().skip(1)).all(|(a, b)| a >= b));
    }

    #[test]
    fn pseudo_inverse_laws((seed, r, c, k) in shape()) {
        let a = low_rank(seed, r, c, k);
        let (p, cut) = pinv(&a, TOL);
        prop_assert_eq!(cut.rank, k);
        let scale = a.norm().max(1.0) * p.norm().max(1.0);
        prop_assert!((&a * &p * &a - &a).norm() <= EPS * scale * a.norm().max(1.0));
        prop_assert!((&p * &a * &p - &p).norm() <= EPS * scale * p.norm().max(1.0));
        let ap = &a * &p;
        prop_assert!((&ap - ap.adjoint()).norm() <= EPS * scale);
    }

    #[test]
    fn nullspace_is_orthonormal_and_annihilated((seed, r, c, k) in shape()) {
        let a = low_rank(seed, r, c, k);
        let (n, cut) = nullspace(&a, TOL);
        prop_assert_eq!(cut.rank, k);
        prop_assert_eq!(n.ncols(), c - k);
        prop_assert!((&a * &n).norm() <= EPS * a.norm().max(1.0));
        prop_assert!((n.adjoint() * &n - identity(c - k)).norm() <= EPS);
    }

    #[test]
    fn orthonormalization_is_idempotent(seed in any::<u64>(), count in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // The extra member is a combination of the others.
        let mut mats: Vec<CMatrix> = (0..count).map(|_| gaussian(&mut rng, 2, 3)).collect();
        mats.push(&mats[0] * C64::new(2.0, -1.0) + &mats[count - 1]);
        let s1 = hs_orthonormalize(&mats, TOL).unwrap();
        prop_assert_eq!(s1.dim(), count);
        let s2 = hs_orthonormalize(s1.basis(), TOL).unwrap();
        prop_assert!(subspace_equal(&s1, &s2, TOL).unwrap().0);
        for (i, x) in s1.basis().iter().enumerate() {
            for (j, y) in s1.basis().iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((hs_inner(x, y) - C64::new(want, 0.0)).norm() <= EPS);
            }
        }
    }

    #[test]
    fn commutant_of_a_generic_hermitian(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gaussian(&mut rng, n, n);
        let h = &g + g.adjoint();
        let sol = solve_intertwiners(std::slice::from_ref(&h), std::slice::from_ref(&h), TOL).unwrap();
        // Simple spectrum: the commutant is the diagonal algebra in the eigenbasis.
        prop_assert_eq!(sol.space.dim(), n);
        for x in sol.space.basis() {
            prop_assert!((&h * x - x * &h).norm() <= 1e-8 * h.norm().max(1.0));
        }
    }

    #[test]
    fn psd_roots_and_support((seed, r, _c, k) in shape()) {
        let a = low_rank(seed, r, r, k);
        let p = &a * a.adjoint();
        let roots = psd_sqrt_pinv(&p, TOL).unwrap();
        prop_assert_eq!(roots.cut.rank, k);
        let scale = p.norm().max(1.0);
        prop_assert!((&roots.sqrt * &roots.sqrt - &p).norm() <= EPS * scale);
        prop_assert!((&roots.sqrt * &roots.pinv_sqrt - &roots.support).norm() <= 1e-8);
        prop_assert!((&roots.support * &roots.support - &roots.support).norm() <= EPS);
        prop_assert!((roots.support.trace().re - k as f64).abs() <= EPS);
    }
}
