//! Criterion benchmarks for ordcare live under `benches/`.
