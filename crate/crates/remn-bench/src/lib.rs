//! Criterion benchmarks for the hot kernels live in `benches/`; this crate
//! has no library code of its own.
