//! Criterion benchmarks for the core metrics live in `benches/`.
