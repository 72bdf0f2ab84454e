//! Criterion benchmarks for the `sslda` fitters live in `benches/`.
