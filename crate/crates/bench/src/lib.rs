//! Criterion benchmarks for the fadogate pipeline; see `benches/`.
