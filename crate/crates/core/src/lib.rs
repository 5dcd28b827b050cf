//! Factorization of unital homomorphisms between algebras of adjointable
//! operators on finite-dimensional Hilbert modules through correspondences.
//!
//! Modules are concrete: a Hilbert `B`-module is a space of operators
//! `E ⊆ B(G, H)` with `E B ⊆ E` and `x*y ∈ B`, where `B ⊆ B(G)` is a unital
//! *-algebra of matrices. All constructions are numerical and return
//! residuals so that every identification can be certified.

pub mod certify;
pub mod cstar;
pub mod error;
pub mod factorizations;
pub mod harness;
pub mod hilbmod;
pub mod numkernel;
pub mod prodsys;
pub mod tensorcalc;

pub use certify::ModuleUnitary;
pub use cstar::{FiniteCStarAlgebra, Homomorphism};
pub use error::{Error, Result};
pub use factorizations::{FactorizationReport, FactorizationResult, Method, Setting};
pub use harness::{Instance, RandomSpec, VerificationConfig, VerificationReport};
pub use hilbmod::{Correspondence, HilbertModule};
pub use numkernel::{CMatrix, C64, DEFAULT_TOL};
pub use prodsys::{ProductSystem, ProductSystemReport};
pub use tensorcalc::{TensorProduct, TensorSpace};
