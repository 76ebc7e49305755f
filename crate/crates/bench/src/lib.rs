//! Criterion benchmarks for the bplgen pipeline live in `benches/`.
