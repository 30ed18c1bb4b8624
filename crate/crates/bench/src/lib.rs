//! Criterion benchmarks for the SAG step kernels live in `benches/`.
