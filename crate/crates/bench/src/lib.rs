//! Criterion benchmarks for the multi-dueling policies; see `benches/`.
