use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cstar::{commutant, FiniteCStarAlgebra, Homomorphism};
use crate::error::{Error, Result};
use crate::factorizations::induced_homomorphism;
use crate::hilbmod::{build_module, is_full, module_from_representation, Correspondence, HilbertModule};
use crate::numkernel::{block_diag, identity, matrix_unit, CMatrix, C64, DEFAULT_TOL};

use super::instance::{oracle_on_basis, Instance};

/// Largest ambient dimension a generated instance may have.
pub const MAX_AMBIENT: usize = 32;

/// Block data for `B` and `C`, the multiplicity of each `B` block in `E`,
/// and the multiplicity of each `(B block, C block)` pair in `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    /// `(size, multiplicity)` per block of `B` acting on `G`.
    pub b_blocks: Vec<(usize, usize)>,
    /// `(size, multiplicity)` per block of `C` acting on `L`.
    pub c_blocks: Vec<(usize, usize)>,
    pub e_mult: Vec<usize>,
    /// `m_mult[i][j]`: copies of `block_i(B) ⊗ block_j(C)^op` in `M`.
    pub m_mult: Vec<Vec<usize>>,
    /// Replace `(F, θ)` by `(E, Ad u)` for a random unitary `u ∈ K(E)`.
    #[serde(default)]
    pub endomorphism: bool,
}

impl RandomSpec {
    pub fn hilbert(n: usize, m: usize) -> Self {
        RandomSpec {
            b_blocks: vec![(1, 1)],
            c_blocks: vec![(1, 1)],
            e_mult: vec![n],
            m_mult: vec![vec![m]],
            endomorphism: false,
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InfeasibleSpec(msg));
        if self.b_blocks.is_empty() || self.c_blocks.is_empty() {
            return bad("B and C need at least one block".into());
        }
        if self
            .b_blocks
            .iter()
            .chain(&self.c_blocks)
            .any(|&(n, m)| n == 0 || m == 0)
        {
            return bad("block sizes and multiplicities must be positive".into());
        }
        if self.e_mult.len() != self.b_blocks.len() {
            return bad(format!(
                "e_mult has {} entries for {} blocks",
                self.e_mult.len(),
                self.b_blocks.len()
            ));
        }
        if self.e_mult.iter().all(|&e| e == 0) {
            return bad("E would be zero".into());
        }
        if self.m_mult.len() != self.b_blocks.len() || self.m_mult.iter().any(|r| r.len() != self.c_blocks.len()) {
            return bad("m_mult must be a (B blocks) x (C blocks) table".into());
        }
        let reaches = self
            .e_mult
            .iter()
            .zip(&self.m_mult)
            .any(|(&e, row)| e > 0 && row.iter().any(|&m| m > 0));
        if !reaches {
            return bad("E ⊙ M would be zero".into());
        }
        let g: usize = self.b_blocks.iter().map(|&(n, m)| n * m).sum();
        let h: usize = self.b_blocks.iter().zip(&self.e_mult).map(|(&(_, m), &e)| m * e).sum();
        let l: usize = self.c_blocks.iter().map(|&(n, m)| n * m).sum();
        let k: usize = self
            .b_blocks
            .iter()
            .zip(&self.m_mult)
            .map(|(&(n, _), row)| {
                row.iter()
                    .zip(&self.c_blocks)
                    .map(|(&mu, &(_, mc))| n * mc * mu)
                    .sum::<usize>()
            })
            .sum();
        for (name, d) in [("G", g), ("H", h), ("L", l), ("K_M", k)] {
            if d > MAX_AMBIENT {
                return bad(format!("{name} would have dimension {d} > {MAX_AMBIENT}"));
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        C64::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ) * (0.5f64).sqrt()
    })
}

fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    gaussian(rng, n, n).qr().q()
}

/// Isometry `C^n → C^e` (`e ≥ n`).
fn random_isometry(rng: &mut ChaCha8Rng, e: usize, n: usize) -> CMatrix {
    let q = random_unitary(rng, e);
    q.columns(0, n).into_owned()
}

fn offsets(sizes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut acc = 0;
    for s in sizes {
        out.push(acc);
        acc += s;
    }
    out
}

/// `X_i(Y)`: `G → H` acting as `Y` between block `i` of `G` (`C^n ⊗ C^m`)
/// and block `i` of `H` (`C^m ⊗ C^e`), identity on the multiplicity space.
fn block_intertwiner(spec: &RandomSpec, i: usize, y: &CMatrix) -> CMatrix {
    let g: usize = spec.b_blocks.iter().map(|&(n, m)| n * m).sum();
    let h: usize = spec.b_blocks.iter().zip(&spec.e_mult).map(|(&(_, m), &e)| m * e).sum();
    let og = offsets(spec.b_blocks.iter().map(|&(n, m)| n * m))[i];
    let oh = offsets(spec.b_blocks.iter().zip(&spec.e_mult).map(|(&(_, m), &e)| m * e))[i];
    let (n, m) = spec.b_blocks[i];
    let e = spec.e_mult[i];
    let mut x = CMatrix::zeros(h, g);
    for p in 0..m {
        for r in 0..e {
            for k in 0..n {
                x[(oh + p * e + r, og + k * m + p)] = y[(r, k)];
            }
        }
    }
    x
}

/// Entries of block `i` of an element of `build_algebra(blocks)`.
fn algebra_block(blocks: &[(usize, usize)], i: usize, b: &CMatrix) -> CMatrix {
    let o = offsets(blocks.iter().map(|&(n, m)| n * m))[i];
    let (n, m) = blocks[i];
    CMatrix::from_fn(n, n, |k, l| b[(o + k * m, o + l * m)])
}

/// Entries of block `j` of an element of the commutant of `build_algebra(blocks)`.
fn commutant_block(blocks: &[(usize, usize)], j: usize, c: &CMatrix) -> CMatrix {
    let o = offsets(blocks.iter().map(|&(n, m)| n * m))[j];
    let m = blocks[j].1;
    CMatrix::from_fn(m, m, |p, q| c[(o + p, o + q)])
}

impl RandomSpec {
    /// Dimension of `E ⊙ K_M`, the space `F` acts on.
    pub fn dim_k(&self) -> usize {
        self.e_mult
            .iter()
            .zip(&self.m_mult)
            .map(|(&e, row)| {
                e * row
                    .iter()
                    .zip(&self.c_blocks)
                    .map(|(&mu, &(_, mc))| mu * mc)
                    .sum::<usize>()
            })
            .sum()
    }

    /// Largest ambient dimension among `G`, `H`, `L`, `K_M` and `K`.
    pub fn max_ambient(&self) -> usize {
        let g: usize = self.b_blocks.iter().map(|&(n, m)| n * m).sum();
        let h: usize = self.b_blocks.iter().zip(&self.e_mult).map(|(&(_, m), &e)| m * e).sum();
        let l: usize = self.c_blocks.iter().map(|&(n, m)| n * m).sum();
        let km: usize = self
            .b_blocks
            .iter()
            .zip(&self.m_mult)
            .map(|(&(n, _), row)| {
                row.iter()
                    .zip(&self.c_blocks)
                    .map(|(&mu, &(_, mc))| n * mc * mu)
                    .sum::<usize>()
            })
            .sum();
        [g, h, l, km, self.dim_k()].into_iter().max().unwrap_or(0)
    }
}

/// A seed-determined spec with every ambient dimension at most `max_dim`.
pub fn sample_spec(seed: u64, max_dim: usize) -> RandomSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bec_0000_0000_0001);
    loop {
        let nb = rng.random_range(1..=2usize);
        let nc = rng.random_range(1..=2usize);
        let b_blocks: Vec<(usize, usize)> = (0..nb)
            .map(|_| (rng.random_range(1..=2usize), rng.random_range(1..=2usize)))
            .collect();
        let c_blocks: Vec<(usize, usize)> = (0..nc)
            .map(|_| (rng.random_range(1..=2usize), rng.random_range(1..=2usize)))
            .collect();
        let e_mult: Vec<usize> = b_blocks.iter().map(|_| rng.random_range(1..=3usize)).collect();
        let m_mult: Vec<Vec<usize>> = b_blocks
            .iter()
            .map(|_| c_blocks.iter().map(|_| rng.random_range(0..=2usize)).collect())
            .collect();
        let spec = RandomSpec {
            b_blocks,
            c_blocks,
            e_mult,
            m_mult,
            endomorphism: false,
        };
        let every_row = spec.m_mult.iter().all(|r| r.iter().any(|&m| m > 0));
        if every_row && spec.check().is_ok() && spec.max_ambient() <= max_dim {
            return spec;
        }
    }
}

/// Deterministic in `(spec, seed)`.
pub fn generate_random_instance(spec: &RandomSpec, seed: u64) -> Result<Instance> {
    spec.check()?;
    if spec.dim_k() > MAX_AMBIENT {
        return Err(Error::InfeasibleSpec(format!(
            "K would have dimension {} > {MAX_AMBIENT}",
            spec.dim_k()
        )));
    }
    let tol = DEFAULT_TOL;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut notes = vec![format!("random instance, seed {seed}")];

    // Blocks of B missing from E make E non-full; keep the fullification.
    let mut spec = spec.clone();
    if spec.e_mult.contains(&0) {
        let b_orig = FiniteCStarAlgebra::build_algebra(&spec.b_blocks);
        let e_orig = build_e(&spec, &b_orig, &identity(h_dim(&spec)), tol)?;
        let (full, ideal) = is_full(&e_orig, tol)?;
        debug_assert!(!full);
        let keep: Vec<usize> = (0..spec.b_blocks.len()).filter(|&i| spec.e_mult[i] > 0).collect();
        notes.push(format!(
            "E was not full; replaced by its fullification over B_E (dim {} of {})",
            ideal.space.dim(),
            b_orig.dim()
        ));
        spec.b_blocks = keep.iter().map(|&i| spec.b_blocks[i]).collect();
        spec.m_mult = keep.iter().map(|&i| spec.m_mult[i].clone()).collect();
        spec.e_mult = keep.iter().map(|&i| spec.e_mult[i]).collect();
    }

    let b = FiniteCStarAlgebra::build_algebra(&spec.b_blocks);
    let u_h = random_unitary(&mut rng, h_dim(&spec));
    let e = build_e(&spec, &b, &u_h, tol)?;

    let mut unit_vectors = Vec::new();
    if spec.b_blocks.iter().zip(&spec.e_mult).all(|(&(n, _), &mult)| mult >= n) {
        for _ in 0..2 {
            let mut xi = CMatrix::zeros(e.dim_h(), e.dim_g());
            for (i, (&(n, _), &mult)) in spec.b_blocks.iter().zip(&spec.e_mult).enumerate() {
                xi += block_intertwiner(&spec, i, &random_isometry(&mut rng, mult, n));
            }
            unit_vectors.push(&u_h * xi);
        }
    } else {
        notes.push("no unit vector: some block of B has multiplicity in E below its size".into());
    }

    if spec.endomorphism {
        let k = crate::hilbmod::finite_rank_algebra(&e, tol)?;
        let h = k.random_self_adjoint(&mut rng);
        let eig = crate::numkernel::hermitian_eigen(&h);
        let phases = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(0.0, l).exp()));
        let u = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
        let theta = Homomorphism::from_fn(k, e.dim_h(), |a| &u * a * u.adjoint(), tol)?;
        let mut inst = Instance::new(e.clone(), e, theta, tol)?;
        notes.push("θ = Ad u for a random unitary u in K(E)".into());
        inst.notes = notes;
        inst.unit_vectors = unit_vectors;
        inst.name = Some(format!("random-endomorphism-{seed}"));
        return Ok(inst);
    }

    let m = build_m(&spec, &b, &mut rng, tol)?;
    let ind = induced_homomorphism(&e, &m, tol)?;
    let w = random_unitary(&mut rng, ind.f.dim_h());
    let f_basis: Vec<CMatrix> = ind.f.basis().iter().map(|y| &w * y).collect();
    let f = build_module(ind.f.base(), &f_basis, tol)?;
    let images: Vec<CMatrix> = ind.theta.images().iter().map(|t| &w * t * w.adjoint()).collect();
    let theta = Homomorphism::new(ind.theta.domain().clone(), f.dim_h(), images, tol)?;
    let t_basis: Vec<CMatrix> = e.basis().iter().map(|x| &w * ind.tensor.space.t_op(x)).collect();
    let oracle = oracle_on_basis(&e, &theta, m, e.basis(), &t_basis, tol)?;

    let mut inst = Instance::new(e, f, theta, tol)?;
    inst.oracle = Some(oracle);
    inst.unit_vectors = unit_vectors;
    inst.notes = notes;
    inst.name = Some(format!("random-{seed}"));
    Ok(inst)
}

fn h_dim(spec: &RandomSpec) -> usize {
    spec.b_blocks.iter().zip(&spec.e_mult).map(|(&(_, m), &e)| m * e).sum()
}

fn build_e(spec: &RandomSpec, b: &FiniteCStarAlgebra, u_h: &CMatrix, tol: f64) -> Result<HilbertModule> {
    let mut gens = Vec::new();
    for (i, (&(n, _), &mult)) in spec.b_blocks.iter().zip(&spec.e_mult).enumerate() {
        for r in 0..mult {
            for k in 0..n {
                gens.push(u_h * block_intertwiner(spec, i, &matrix_unit(mult, n, r, k)));
            }
        }
    }
    build_module(b, &gens, tol)
}

/// `K_M = ⊕_{i,j} C^{n_i} ⊗ C^{m'_j} ⊗ C^{μ_ij}` with `B` on the first
/// factor and `C'` on the second; `M` is the intertwiner module.
fn build_m(spec: &RandomSpec, b: &FiniteCStarAlgebra, rng: &mut ChaCha8Rng, tol: f64) -> Result<Correspondence> {
    let c = FiniteCStarAlgebra::build_algebra(&spec.c_blocks);
    let cprime = commutant(&c, tol)?;
    let mut segments = Vec::new();
    for (i, row) in spec.m_mult.iter().enumerate() {
        for (j, &mu) in row.iter().enumerate() {
            if mu > 0 {
                segments.push((i, j, mu));
            }
        }
    }
    let k_dim: usize = segments
        .iter()
        .map(|&(i, j, mu)| spec.b_blocks[i].0 * spec.c_blocks[j].1 * mu)
        .sum();
    let v = random_unitary(rng, k_dim);
    let sigma = Homomorphism::from_fn(
        cprime,
        k_dim,
        |cp| {
            let parts: Vec<CMatrix> = segments
                .iter()
                .map(|&(i, j, mu)| {
                    let d = commutant_block(&spec.c_blocks, j, cp);
                    identity(spec.b_blocks[i].0).kronecker(&d).kronecker(&identity(mu))
                })
                .collect();
            &v * block_diag(&parts) * v.adjoint()
        },
        tol,
    )?;
    let module = module_from_representation(&c, &sigma, tol)?;
    let embed = module.trim().map(|t| t.embedding.clone());
    let phi = Homomorphism::from_fn(
        b.clone(),
        module.dim_h(),
        |x| {
            let parts: Vec<CMatrix> = segments
                .iter()
                .map(|&(i, j, mu)| {
                    let bi = algebra_block(&spec.b_blocks, i, x);
                    bi.kronecker(&identity(spec.c_blocks[j].1 * mu))
                })
                .collect();
            let full = &v * block_diag(&parts) * v.adjoint();
            match &embed {
                Some(w) => w.adjoint() * full * w,
                None => full,
            }
        },
        tol,
    )?;
    Correspondence::new(module, phi, tol)
}
