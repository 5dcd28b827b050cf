//! Seeded random instances with a known factorizing correspondence `M`.

use std::time::Instant;

use repfactor_core::harness::{generate_random_instance, run_verification, sample_spec, RandomSpec};
use repfactor_core::tensorcalc::unit_identities;
use repfactor_core::{VerificationConfig, VerificationReport, DEFAULT_TOL};

const SEEDS: u64 = 60;
const RESIDUAL: f64 = 1e-8;
const TRIANGLE: f64 = 1e-7;

/// Dimensions predicted by block counting: `(dim E, dim M, dim F)`.
fn predicted_dims(spec: &RandomSpec) -> (usize, usize, usize) {
    let kept: Vec<usize> = (0..spec.b_blocks.len()).filter(|&i| spec.e_mult[i] > 0).collect();
    let dim_e = kept.iter().map(|&i| spec.e_mult[i] * spec.b_blocks[i].0).sum();
    let mut dim_m = 0;
    let mut dim_f = 0;
    for (j, &(c, _)) in spec.c_blocks.iter().enumerate() {
        let via_m: usize = kept.iter().map(|&i| spec.m_mult[i][j] * spec.b_blocks[i].0).sum();
        let via_f: usize = kept.iter().map(|&i| spec.m_mult[i][j] * spec.e_mult[i]).sum();
        dim_m += via_m * c;
        dim_f += via_f * c;
    }
    (dim_e, dim_m, dim_f)
}

fn check(report: &VerificationReport, name: &str) -> Option<f64> {
    report.checks.iter().find(|c| c.name == name).map(|c| c.value)
}

fn verify_seed(seed: u64) -> (RandomSpec, VerificationReport) {
    let spec = sample_spec(seed, 12);
    let inst = generate_random_instance(&spec, seed).unwrap();
    (spec, run_verification(&inst, &VerificationConfig::default()))
}

#[test]
fn every_method_recovers_the_seeded_correspondence() {
    let start = Instant::now();
    for seed in 0..SEEDS {
        let (spec, report) = verify_seed(seed);
        assert!(spec.max_ambient() <= 12);
        let failed: Vec<_> = report.failed().map(|c| c.name.clone()).collect();
        assert!(report.pass, "seed {seed}: {failed:?}");
        let (dim_e, dim_m, dim_f) = predicted_dims(&spec);
        assert_eq!((report.dims.dim_e, report.dims.dim_f), (dim_e, dim_f), "seed {seed}");
        let mut ran = 0;
        for m in report.methods.iter().filter(|m| m.status == "ok") {
            ran += 1;
            let r = m.report.as_ref().unwrap();
            assert_eq!(r.dim_module, dim_m, "seed {seed} {}", m.label);
            assert!(r.theta_residual <= RESIDUAL);
            let oracle = check(&report, &format!("oracle.{}", m.label)).expect("oracle check");
            assert!(oracle <= RESIDUAL, "seed {seed} {}: {oracle:e}", m.label);
        }
        assert!(ran >= 3, "seed {seed}: mss, qons and commutant always apply");
        for u in &report.oracle {
            assert!(
                u.residual_unitary <= RESIDUAL && u.residual_intertwine <= RESIDUAL,
                "seed {seed} {}",
                u.label
            );
        }
    }
    assert!(start.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn pairwise_comparisons_and_triangles() {
    for seed in 0..SEEDS {
        let (_, report) = verify_seed(seed);
        let ran: Vec<&str> = report
            .methods
            .iter()
            .filter(|m| m.status == "ok")
            .map(|m| m.label.as_str())
            .collect();
        for a in &ran {
            for b in &ran {
                if a == b {
                    continue;
                }
                let v = check(&report, &format!("compare.{a}->{b}")).expect("comparison");
                assert!(v <= RESIDUAL, "seed {seed} {a}->{b}: {v:e}");
            }
        }
        let direct = report.comparisons.iter().filter(|u| !u.composed).count();
        assert!(
            direct >= ran.len() - 1,
            "seed {seed}: formulas from mss exist for every method"
        );
        assert!(check(&report, "compare.triangles").unwrap() <= TRIANGLE);
    }
}

#[test]
fn unit_identities_on_every_generated_module() {
    for seed in 0..SEEDS {
        let spec = sample_spec(seed, 12);
        let inst = generate_random_instance(&spec, seed).unwrap();
        let (u1, u2) = unit_identities(&inst.e, DEFAULT_TOL).unwrap();
        for u in [&u1, &u2] {
            assert!(u.max_residual() <= RESIDUAL, "seed {seed} {}", u.label);
        }
        assert_eq!(
            u1.target_dim,
            repfactor_core::hilbmod::finite_rank_algebra(&inst.e, DEFAULT_TOL)
                .unwrap()
                .dim()
        );
    }
}

#[test]
fn generation_is_deterministic() {
    for seed in [0, 17, 41] {
        let spec = sample_spec(seed, 12);
        assert_eq!(spec, sample_spec(seed, 12));
        let a = generate_random_instance(&spec, seed).unwrap().to_json();
        let b = generate_random_instance(&spec, seed).unwrap().to_json();
        assert_eq!(a, b);
    }
}

#[test]
fn hilbert_space_spec_yields_scalar_bases() {
    let inst = generate_random_instance(&RandomSpec::hilbert(2, 3), 5).unwrap();
    assert_eq!((inst.e.dim_g(), inst.f.dim_g()), (1, 1));
    assert_eq!((inst.e.dim(), inst.f.dim()), (2, 6));
    let report = run_verification(&inst, &VerificationConfig::default());
    assert!(report.pass);
}

#[test]
fn theta_with_a_kernel() {
    // The M₂ block of B has no copy in M, so θ kills it.
    let spec = RandomSpec {
        b_blocks: vec![(1, 1), (2, 1)],
        c_blocks: vec![(2, 1)],
        e_mult: vec![1, 2],
        m_mult: vec![vec![1], vec![0]],
        endomorphism: false,
    };
    let (_, dim_m, dim_f) = predicted_dims(&spec);
    for seed in 0..10 {
        let inst = generate_random_instance(&spec, seed).unwrap();
        assert_eq!(inst.f.dim(), dim_f);
        let report = run_verification(&inst, &VerificationConfig::default());
        let failed: Vec<_> = report.failed().map(|c| c.name.clone()).collect();
        assert!(report.pass, "seed {seed}: {failed:?}");
        let ran: Vec<_> = report.methods.iter().filter(|m| m.status == "ok").collect();
        assert_eq!(ran.len(), 5, "seed {seed}: mss, two unit vectors, qons, commutant");
        assert!(ran.iter().all(|m| m.report.as_ref().unwrap().dim_module == dim_m));
    }
}
