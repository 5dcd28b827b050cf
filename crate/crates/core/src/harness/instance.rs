use std::path::Path;

use crate::cstar::{check_tol, FiniteCStarAlgebra, Homomorphism};
use crate::error::{Error, Result};
use crate::factorizations::Setting;
use crate::hilbmod::{build_module, finite_rank_algebra, Correspondence, HilbertModule};
use crate::numkernel::{matrix_unit, op_norm, pinv, vectorize, CMatrix, DEFAULT_TOL};

use super::json::{self, decode_all, encode_all, RawAlgebra, RawInstance, RawMap, RawModule, RawOracle};

/// A known `B`-`C` correspondence `M` with `F = E ⊙ M`.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub correspondence: Correspondence,
    /// `T_x: K_M → K` for each basis element `x` of `E`.
    pub embedding: Vec<CMatrix>,
    /// Largest defect of `T_x* T_y = φ_M(⟨x, y⟩)` and `θ(a) T_x = T_{ax}`.
    pub consistency: f64,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub name: Option<String>,
    pub e: HilbertModule,
    pub f: HilbertModule,
    pub theta: Homomorphism,
    /// Present when `θ` failed validation and the instance was loaded leniently.
    pub theta_error: Option<String>,
    pub oracle: Option<Oracle>,
    pub unit_vectors: Vec<CMatrix>,
    pub qons_family: Option<Vec<CMatrix>>,
    pub notes: Vec<String>,
    pub tol: f64,
}

impl Instance {
    pub fn new(e: HilbertModule, f: HilbertModule, theta: Homomorphism, tol: f64) -> Result<Self> {
        Setting::new(e.clone(), f.clone(), theta.clone(), tol)?;
        Ok(Instance {
            name: None,
            e,
            f,
            theta,
            theta_error: None,
            oracle: None,
            unit_vectors: Vec::new(),
            qons_family: None,
            notes: Vec::new(),
            tol,
        })
    }

    pub fn setting(&self) -> Result<Setting> {
        Setting::new(self.e.clone(), self.f.clone(), self.theta.clone(), self.tol)
    }

    pub fn from_raw(raw: &RawInstance, tol: f64) -> Result<Self> {
        Self::load(raw, tol, true)
    }

    /// Like [`Instance::from_raw`] but keeps a `θ` that fails the
    /// homomorphism checks, recording the failure instead.
    pub fn from_raw_lenient(raw: &RawInstance, tol: f64) -> Result<Self> {
        Self::load(raw, tol, false)
    }

    fn load(raw: &RawInstance, tol: f64, strict: bool) -> Result<Self> {
        let e = module_from_raw(&raw.e, "E", tol)?;
        let f = module_from_raw(&raw.f, "F", tol)?;
        let k = finite_rank_algebra(&e, tol)?;
        let pairs = map_pairs(&raw.theta, "theta")?;
        let theta = Homomorphism::from_pairs_unchecked(k, f.dim_h(), &pairs, tol)?;
        let theta_error = match Setting::new(e.clone(), f.clone(), theta.clone(), tol) {
            Ok(_) => None,
            Err(err) if strict => return Err(err),
            Err(err) => Some(err.to_string()),
        };
        let oracle = match &raw.oracle {
            Some(o) if theta_error.is_none() => {
                let e_gens = decode_all(&raw.e.generators, "E.generators")?;
                Some(oracle_from_raw(o, &e, &e_gens, &theta, tol, strict)?)
            }
            _ => None,
        };
        let unit_vectors = decode_all(&raw.unit_vectors, "unit_vectors")?;
        let qons_family = raw
            .qons_family
            .as_ref()
            .map(|fam| decode_all(fam, "qons_family"))
            .transpose()?;
        Ok(Instance {
            name: raw.name.clone(),
            e,
            f,
            theta,
            theta_error,
            oracle,
            unit_vectors,
            qons_family,
            notes: raw.notes.clone(),
            tol,
        })
    }

    pub fn to_raw(&self) -> RawInstance {
        let theta = RawMap {
            domain: encode_all(self.theta.domain().basis()),
            images: encode_all(self.theta.images()),
        };
        let oracle = self.oracle.as_ref().map(|o| {
            let m = &o.correspondence;
            RawOracle {
                module: module_to_raw(m.module()),
                left_action: RawMap {
                    domain: encode_all(m.left().basis()),
                    images: encode_all(m.action().images()),
                },
                embedding: encode_all(&o.embedding),
            }
        });
        RawInstance {
            name: self.name.clone(),
            e: module_to_raw(&self.e),
            f: module_to_raw(&self.f),
            theta,
            oracle,
            unit_vectors: encode_all(&self.unit_vectors),
            qons_family: self.qons_family.as_ref().map(|f| encode_all(f)),
            notes: self.notes.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("instance serializes")
    }
}

fn algebra_from_raw(raw: &RawAlgebra, location: &str, tol: f64) -> Result<FiniteCStarAlgebra> {
    match (&raw.blocks, &raw.basis) {
        (Some(blocks), None) => {
            if blocks.iter().any(|&(n, m)| n == 0 || m == 0) {
                return Err(Error::Parse {
                    location: format!("{location}.blocks"),
                    message: "block sizes and multiplicities must be positive".into(),
                });
            }
            let alg = FiniteCStarAlgebra::build_algebra(blocks);
            if let Some(n) = raw.ambient_dim {
                if n != alg.ambient_dim() {
                    return Err(Error::dims(format!("{location}.ambient_dim"), alg.ambient_dim(), n));
                }
            }
            Ok(alg)
        }
        (None, Some(basis)) => {
            let mats = decode_all(basis, &format!("{location}.basis"))?;
            let n = raw.ambient_dim.unwrap_or(mats.first().map_or(0, |m| m.nrows()));
            FiniteCStarAlgebra::from_basis(n, &mats, tol)
        }
        _ => Err(Error::Parse {
            location: location.into(),
            message: "give exactly one of `blocks` or `basis`".into(),
        }),
    }
}

fn module_from_raw(raw: &RawModule, location: &str, tol: f64) -> Result<HilbertModule> {
    let base = algebra_from_raw(&raw.base, &format!("{location}.base"), tol)?;
    let gens = decode_all(&raw.generators, &format!("{location}.generators"))?;
    for (k, g) in gens.iter().enumerate() {
        if g.shape() != (raw.dim_h, base.ambient_dim()) {
            return Err(Error::dims(
                format!("{location}.generators[{k}]"),
                format!("{}x{}", raw.dim_h, base.ambient_dim()),
                format!("{}x{}", g.nrows(), g.ncols()),
            ));
        }
    }
    let module = build_module(&base, &gens, tol)?;
    if let Some(t) = module.trim() {
        return Err(Error::Validation(format!(
            "{location}: generators act on a {}-dimensional subspace of the declared {}-dimensional space",
            t.dim_h, t.original_dim_h
        )));
    }
    Ok(module)
}

fn module_to_raw(m: &HilbertModule) -> RawModule {
    RawModule {
        base: RawAlgebra {
            blocks: None,
            ambient_dim: Some(m.base().ambient_dim()),
            basis: Some(encode_all(m.base().basis())),
        },
        dim_h: m.dim_h(),
        generators: encode_all(m.basis()),
    }
}

fn map_pairs(raw: &RawMap, location: &str) -> Result<Vec<(CMatrix, CMatrix)>> {
    if raw.domain.len() != raw.images.len() {
        return Err(Error::Parse {
            location: location.into(),
            message: format!("{} domain elements but {} images", raw.domain.len(), raw.images.len()),
        });
    }
    let dom = decode_all(&raw.domain, &format!("{location}.domain"))?;
    let img = decode_all(&raw.images, &format!("{location}.images"))?;
    Ok(dom.into_iter().zip(img).collect())
}

fn oracle_from_raw(
    raw: &RawOracle,
    e: &HilbertModule,
    e_gens: &[CMatrix],
    theta: &Homomorphism,
    tol: f64,
    strict: bool,
) -> Result<Oracle> {
    let module = module_from_raw(&raw.module, "oracle.module", tol)?;
    let pairs = map_pairs(&raw.left_action, "oracle.left_action")?;
    let action = Homomorphism::from_pairs(e.base().clone(), module.dim_h(), &pairs, tol)?;
    let correspondence = Correspondence::new(module, action, tol)?;
    let t_gens = decode_all(&raw.embedding, "oracle.embedding")?;
    let oracle = oracle_on_basis(e, theta, correspondence, e_gens, &t_gens, tol)?;
    if strict && oracle.consistency > check_tol(tol) * 10.0 {
        return Err(Error::Validation(format!(
            "oracle embedding does not realize F = E ⊙ M (defect {:.3e})",
            oracle.consistency
        )));
    }
    Ok(oracle)
}

/// Extends `T_g` from generators to the basis of `E` through `T_{g b} = T_g φ_M(b)`.
pub fn oracle_on_basis(
    e: &HilbertModule,
    theta: &Homomorphism,
    m: Correspondence,
    generators: &[CMatrix],
    t_gens: &[CMatrix],
    tol: f64,
) -> Result<Oracle> {
    if generators.len() != t_gens.len() {
        return Err(Error::dims("oracle.embedding", generators.len(), t_gens.len()));
    }
    let k = theta.codomain_dim();
    let km = m.module().dim_h();
    for (i, t) in t_gens.iter().enumerate() {
        if t.shape() != (k, km) {
            return Err(Error::dims(
                format!("oracle.embedding[{i}]"),
                format!("{k}x{km}"),
                format!("{}x{}", t.nrows(), t.ncols()),
            ));
        }
    }
    let mut span = Vec::new();
    let mut span_t = Vec::new();
    for (g, t) in generators.iter().zip(t_gens) {
        for b in e.base().basis() {
            span.push(g * b);
            span_t.push(t * m.action().apply(b));
        }
    }
    let rows = e.dim_h() * e.dim_g();
    let mut a = CMatrix::zeros(rows, span.len());
    for (j, s) in span.iter().enumerate() {
        a.set_column(j, &vectorize(s));
    }
    let (a_inv, _) = pinv(&a, tol);
    let mut consistency: f64 = 0.0;
    let embedding: Vec<CMatrix> = e
        .basis()
        .iter()
        .map(|x| {
            let c = &a_inv * vectorize(x);
            consistency = consistency.max((&a * &c - vectorize(x)).norm());
            let mut t = CMatrix::zeros(k, km);
            for (j, tj) in span_t.iter().enumerate() {
                t += tj * c[j];
            }
            t
        })
        .collect();
    for (i, x) in e.basis().iter().enumerate() {
        for (j, y) in e.basis().iter().enumerate() {
            let lhs = embedding[i].adjoint() * &embedding[j];
            consistency = consistency.max(op_norm(&(lhs - m.action().apply(&(x.adjoint() * y)))));
        }
        for a in theta.domain().basis() {
            let ax = a * x;
            let c = &a_inv * vectorize(&ax);
            let mut t_ax = CMatrix::zeros(k, km);
            for (j, tj) in span_t.iter().enumerate() {
                t_ax += tj * c[j];
            }
            consistency = consistency.max(op_norm(&(theta.apply(a) * &embedding[i] - t_ax)));
        }
    }
    Ok(Oracle {
        correspondence: m,
        embedding,
        consistency,
    })
}

pub fn parse_instance(path: &Path) -> Result<Instance> {
    Instance::from_raw(&read_raw(path)?, DEFAULT_TOL)
}

pub fn read_raw(path: &Path) -> Result<RawInstance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    json::from_str(&text)
}

/// `E = span{E₂₁, E₃₁, E₁₂, E₁₃}` over `C ⊕ M₂` on `C³`, with `θ = id` and
/// oracle `M = B`.
pub fn golden_m3() -> Instance {
    let tol = DEFAULT_TOL;
    let b = FiniteCStarAlgebra::build_algebra(&[(1, 1), (2, 1)]);
    let u = |i, j| matrix_unit(3, 3, i, j);
    let e = build_module(&b, &[u(1, 0), u(2, 0), u(0, 1), u(0, 2)], tol).expect("golden module");
    let k = finite_rank_algebra(&e, tol).expect("compacts");
    let theta = Homomorphism::identity(&k);
    let mut inst = Instance::new(e.clone(), e.clone(), theta.clone(), tol).expect("golden instance");
    let m = Correspondence::identity(&b);
    let gens = e.basis().to_vec();
    inst.oracle = Some(oracle_on_basis(&e, &theta, m, &gens, &gens, tol).expect("golden oracle"));
    inst.name = Some("m3-golden".into());
    inst.notes.push("full module without a unit vector; θ = id".into());
    inst
}
