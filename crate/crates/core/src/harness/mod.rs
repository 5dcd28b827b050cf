//! Instance I/O, seeded random instances with a known factorization, and
//! the verification driver.

pub mod instance;
pub mod json;
pub mod random;
pub mod verify;

pub use instance::{golden_m3, oracle_on_basis, parse_instance, read_raw, Instance, Oracle};
pub use random::{generate_random_instance, sample_spec, RandomSpec};
pub use verify::{run_verification, Check, VerificationConfig, VerificationReport};
