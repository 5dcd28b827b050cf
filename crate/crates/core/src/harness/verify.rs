use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::certify::ModuleUnitary;
use crate::error::Result;
use crate::factorizations::{
    canonical_from_mss, compare, factor_commutant, factor_mss, factor_qons, factor_unit_vector, oracle_unitary,
    FactorizationReport, FactorizationResult, Method, Setting,
};
use crate::hilbmod::{dual_qons_family, fullification, is_full, unit_vector_obstruction, verify_unit_vector};
use crate::numkernel::{op_norm, DEFAULT_TOL};
use crate::tensorcalc::unit_identities;

use super::instance::Instance;

#[derive(Debug, Clone, Serialize)]
pub struct VerificationConfig {
    pub tol: f64,
    /// Bound for factorization, comparison, oracle and identity residuals.
    pub threshold: f64,
    /// Bound for `‖cmp(b,c) cmp(a,b) − cmp(a,c)‖`.
    pub triangle_threshold: f64,
    pub emit_unitaries: bool,
    /// Wall-clock timings make reports non-reproducible; off by default.
    pub timings: bool,
    /// Restrict the run to one construction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub only: Option<Method>,
}

impl VerificationConfig {
    fn wants(&self, m: Method) -> bool {
        self.only.is_none_or(|o| o == m)
    }
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            tol: DEFAULT_TOL,
            threshold: 1e-8,
            triangle_threshold: 1e-7,
            emit_unitaries: false,
            timings: false,
            only: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Dims {
    pub g: usize,
    pub h: usize,
    pub dim_e: usize,
    pub l: usize,
    pub k: usize,
    pub dim_f: usize,
    pub dim_compacts: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodOutcome {
    pub label: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<FactorizationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub instance: Option<String>,
    pub config: VerificationConfig,
    pub dims: Dims,
    pub methods: Vec<MethodOutcome>,
    pub comparisons: Vec<ModuleUnitary>,
    pub unit_identities: Vec<ModuleUnitary>,
    pub oracle: Vec<ModuleUnitary>,
    pub notes: Vec<String>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let name = self.instance.as_deref().unwrap_or("instance");
        let d = &self.dims;
        let _ = writeln!(
            out,
            "{name}: G={} H={} dim E={} L={} K={} dim F={} dim K(E)={}",
            d.g, d.h, d.dim_e, d.l, d.k, d.dim_f, d.dim_compacts
        );
        for m in &self.methods {
            let _ = writeln!(out, "  method {:<16} {}", m.label, m.status);
        }
        for n in &self.notes {
            let _ = writeln!(out, "  note: {n}");
        }
        for c in &self.checks {
            let tag = if c.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "  {tag} {:<40} {:.3e} (≤ {:.0e})", c.name, c.value, c.threshold);
        }
        let _ = writeln!(
            out,
            "{}",
            if self.pass {
                "all checks passed"
            } else {
                "some checks failed"
            }
        );
        out
    }
}

struct Run {
    label: String,
    result: FactorizationResult,
}

fn timed<T>(enabled: bool, f: impl FnOnce() -> T) -> (T, Option<f64>) {
    let start = Instant::now();
    let out = f();
    (out, enabled.then(|| start.elapsed().as_secs_f64() * 1e3))
}

fn record(
    label: String,
    outcome: Result<FactorizationResult>,
    elapsed: Option<f64>,
    cfg: &VerificationConfig,
    methods: &mut Vec<MethodOutcome>,
    checks: &mut Vec<Check>,
    runs: &mut Vec<Run>,
) {
    match outcome {
        Ok(result) => {
            checks.push(Check::new(
                format!("{label}.theta"),
                result.theta_residual,
                cfg.threshold,
            ));
            checks.push(Check::new(
                format!("{label}.unitary"),
                result.unitary.max_residual(),
                cfg.threshold,
            ));
            if let crate::factorizations::MethodData::Commutant(_) = result.data {
                checks.push(Check::new(
                    format!("{label}.chain"),
                    result.max_residual(),
                    cfg.threshold,
                ));
            }
            methods.push(MethodOutcome {
                label: label.clone(),
                status: "ok".into(),
                report: Some(result.report(cfg.emit_unitaries)),
                elapsed_ms: elapsed,
            });
            runs.push(Run { label, result });
        }
        Err(err) => {
            checks.push(Check::new(format!("{label}.ran"), 1.0, 0.0));
            methods.push(MethodOutcome {
                label,
                status: format!("error: {err}"),
                report: None,
                elapsed_ms: elapsed,
            });
        }
    }
}

fn not_applicable(label: &str, why: impl Into<String>) -> MethodOutcome {
    MethodOutcome {
        label: label.into(),
        status: format!("not applicable: {}", why.into()),
        report: None,
        elapsed_ms: None,
    }
}

/// Runs every applicable construction, all comparisons, the unit
/// identities and the oracle check. Deterministic unless timings are on.
pub fn run_verification(inst: &Instance, cfg: &VerificationConfig) -> VerificationReport {
    let tol = cfg.tol;
    let mut checks = Vec::new();
    let mut methods = Vec::new();
    let mut notes = inst.notes.clone();
    let mut comparisons = Vec::new();
    let mut oracle = Vec::new();
    let dims = Dims {
        g: inst.e.dim_g(),
        h: inst.e.dim_h(),
        dim_e: inst.e.dim(),
        l: inst.f.dim_g(),
        k: inst.f.dim_h(),
        dim_f: inst.f.dim(),
        dim_compacts: inst.theta.domain().dim(),
    };

    // Depends on E alone.
    let mut unit_ids = Vec::new();
    match unit_identities(&inst.e, tol) {
        Ok((u1, u2)) => {
            checks.push(Check::new("unit_identity.E⊙E*", u1.max_residual(), cfg.threshold));
            checks.push(Check::new("unit_identity.E*⊙E", u2.max_residual(), cfg.threshold));
            unit_ids.push(u1);
            unit_ids.push(u2);
        }
        Err(err) => {
            notes.push(format!("unit identities failed: {err}"));
            checks.push(Check::new("unit_identity.ran", 1.0, 0.0));
        }
    }

    let setting = match (&inst.theta_error, inst.setting()) {
        (None, Ok(s)) => {
            checks.push(Check::new("theta.homomorphism", inst.theta.defect(), cfg.threshold));
            Some(s)
        }
        (err, res) => {
            let msg = err
                .clone()
                .unwrap_or_else(|| res.err().map(|e| e.to_string()).unwrap_or_default());
            notes.push(format!("θ rejected: {msg}"));
            checks.push(Check::new(
                "theta.homomorphism",
                inst.theta.defect().max(1.0),
                cfg.threshold,
            ));
            None
        }
    };
    let Some(s) = setting else {
        for m in Method::ALL.into_iter().filter(|&m| cfg.wants(m)) {
            methods.push(not_applicable(m.name(), "θ failed validation"));
        }
        return finish(inst, cfg, dims, methods, comparisons, unit_ids, oracle, notes, checks);
    };

    let mut runs: Vec<Run> = Vec::new();
    if cfg.wants(Method::Mss) {
        let (mss, t) = timed(cfg.timings, || factor_mss(&s));
        record("mss".into(), mss, t, cfg, &mut methods, &mut checks, &mut runs);
    }

    let mut any_unit = false;
    let unit_vectors: &[_] = if cfg.wants(Method::UnitVector) {
        &inst.unit_vectors
    } else {
        &[]
    };
    for (i, xi) in unit_vectors.iter().enumerate() {
        let label = format!("unit-vector[{i}]");
        if !verify_unit_vector(&inst.e, xi, tol).unwrap_or(false) {
            methods.push(not_applicable(&label, "supplied vector is not a unit vector"));
            continue;
        }
        any_unit = true;
        let (r, t) = timed(cfg.timings, || factor_unit_vector(&s, xi));
        record(label, r, t, cfg, &mut methods, &mut checks, &mut runs);
    }
    if cfg.only == Some(Method::UnitVector) && !any_unit {
        checks.push(Check::new("unit-vector.ran", 1.0, 0.0));
    }
    if cfg.wants(Method::UnitVector) && !any_unit && inst.unit_vectors.is_empty() {
        let why = match unit_vector_obstruction(&inst.e, tol) {
            Ok(Some(o)) => format!(
                "no unit vector (block {} has rank {} but E reaches only {})",
                o.block, o.rank_of_block, o.range_rank
            ),
            _ => "no unit vector supplied".into(),
        };
        methods.push(not_applicable("unit-vector", why));
    }

    let family = match &inst.qons_family {
        _ if !cfg.wants(Method::Qons) => Err(None),
        Some(f) => Ok(f.clone()),
        None => dual_qons_family(&inst.e, tol).map_err(Some),
    };
    match family {
        Ok(fam) => {
            let (r, t) = timed(cfg.timings, || factor_qons(&s, &fam));
            record("qons".into(), r, t, cfg, &mut methods, &mut checks, &mut runs);
        }
        Err(None) => {}
        Err(Some(err)) => {
            checks.push(Check::new("qons.ran", 1.0, 0.0));
            methods.push(MethodOutcome {
                label: "qons".into(),
                status: format!("error: no dual family: {err}"),
                report: None,
                elapsed_ms: None,
            });
        }
    }

    let full = is_full(&inst.e, tol).map(|(f, _)| f).unwrap_or(false);
    let mut separate: Option<(Setting, Run, FactorizationResult)> = None;
    let commutant = cfg.wants(Method::Commutant);
    if commutant && full {
        let (r, t) = timed(cfg.timings, || factor_commutant(&s).map(|(_, r)| r));
        record("commutant".into(), r, t, cfg, &mut methods, &mut checks, &mut runs);
    } else if commutant {
        notes.push("E is not full; the commutant construction runs on its fullification".into());
        let fs =
            fullification(&inst.e, tol).and_then(|(ef, _)| Setting::new(ef, inst.f.clone(), inst.theta.clone(), tol));
        let (r, t) = timed(cfg.timings, || {
            fs.and_then(|fs| {
                let (_, c) = factor_commutant(&fs)?;
                let m = factor_mss(&fs)?;
                Ok((fs, c, m))
            })
        });
        match r {
            Ok((fs, c, m)) => {
                let mut tmp = Vec::new();
                record("commutant".into(), Ok(c), t, cfg, &mut methods, &mut checks, &mut tmp);
                if let Some(run) = tmp.pop() {
                    separate = Some((fs, run, m));
                }
            }
            Err(err) => record(
                "commutant".into(),
                Err(err),
                t,
                cfg,
                &mut methods,
                &mut checks,
                &mut runs,
            ),
        }
    }

    let mut dims_seen: Vec<(String, usize)> = runs
        .iter()
        .map(|r| (r.label.clone(), r.result.correspondence.module().dim()))
        .collect();
    if let Some((_, run, _)) = &separate {
        dims_seen.push((run.label.clone(), run.result.correspondence.module().dim()));
    }
    if let (Some(min), Some(max)) = (dims_seen.iter().map(|d| d.1).min(), dims_seen.iter().map(|d| d.1).max()) {
        checks.push(Check::new("dims.agree", (max - min) as f64, 0.0));
    }

    // Comparisons among runs sharing the main setting.
    if let Some(mss_idx) = runs.iter().position(|r| r.label == "mss") {
        let mss = &runs[mss_idx].result;
        let mut cache: BTreeMap<(usize, usize), ModuleUnitary> = BTreeMap::new();
        for a in 0..runs.len() {
            for b in 0..runs.len() {
                if a == b {
                    continue;
                }
                match compare(&s, &runs[a].result, &runs[b].result, mss) {
                    Ok(u) => {
                        checks.push(Check::new(
                            format!("compare.{}->{}", runs[a].label, runs[b].label),
                            u.max_residual(),
                            cfg.threshold,
                        ));
                        cache.insert((a, b), u);
                    }
                    Err(err) => {
                        notes.push(format!(
                            "comparison {} → {} failed: {err}",
                            runs[a].label, runs[b].label
                        ));
                        checks.push(Check::new(
                            format!("compare.{}->{}", runs[a].label, runs[b].label),
                            f64::INFINITY,
                            cfg.threshold,
                        ));
                    }
                }
            }
        }
        for (b, run) in runs.iter().enumerate() {
            if b == mss_idx {
                continue;
            }
            if let (Some(direct), Ok(contracted)) = (cache.get(&(mss_idx, b)), canonical_from_mss(&s, mss, &run.result))
            {
                checks.push(Check::new(
                    format!("contraction.mss->{}", run.label),
                    op_norm(&(&direct.map - &contracted.map)),
                    cfg.threshold,
                ));
            }
        }
        let mut worst_triangle: f64 = 0.0;
        let n = runs.len();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if a == b || b == c || a == c {
                        continue;
                    }
                    if let (Some(ab), Some(bc), Some(ac)) = (cache.get(&(a, b)), cache.get(&(b, c)), cache.get(&(a, c)))
                    {
                        worst_triangle = worst_triangle.max(op_norm(&(&bc.map * &ab.map - &ac.map)));
                    }
                }
            }
        }
        if n >= 3 {
            checks.push(Check::new("compare.triangles", worst_triangle, cfg.triangle_threshold));
        }
        comparisons.extend(cache.into_values());
    }
    if let Some((fs, run, m)) = &separate {
        match compare(fs, m, &run.result, m) {
            Ok(u) => {
                checks.push(Check::new("compare.mss->commutant", u.max_residual(), cfg.threshold));
                comparisons.push(u);
            }
            Err(err) => notes.push(format!("comparison mss → commutant failed: {err}")),
        }
    }

    if let Some(o) = &inst.oracle {
        checks.push(Check::new("oracle.consistency", o.consistency, cfg.threshold));
        for run in &runs {
            match oracle_unitary(&s, &run.result, &o.correspondence, &o.embedding) {
                Ok(u) => {
                    checks.push(Check::new(
                        format!("oracle.{}", run.label),
                        u.max_residual(),
                        cfg.threshold,
                    ));
                    oracle.push(u);
                }
                Err(err) => {
                    notes.push(format!("oracle comparison for {} failed: {err}", run.label));
                    checks.push(Check::new(
                        format!("oracle.{}", run.label),
                        f64::INFINITY,
                        cfg.threshold,
                    ));
                }
            }
        }
    }

    finish(inst, cfg, dims, methods, comparisons, unit_ids, oracle, notes, checks)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    inst: &Instance,
    cfg: &VerificationConfig,
    dims: Dims,
    methods: Vec<MethodOutcome>,
    comparisons: Vec<ModuleUnitary>,
    unit_identities: Vec<ModuleUnitary>,
    oracle: Vec<ModuleUnitary>,
    notes: Vec<String>,
    checks: Vec<Check>,
) -> VerificationReport {
    let pass = checks.iter().all(|c| c.pass);
    VerificationReport {
        instance: inst.name.clone(),
        config: cfg.clone(),
        dims,
        methods,
        comparisons,
        unit_identities,
        oracle,
        notes,
        checks,
        pass,
    }
}
