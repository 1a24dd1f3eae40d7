//! Criterion benchmarks for the extraction pipeline; see `benches/`.
