//! Criterion benchmarks for `repfactor-core`; see `benches/`.
