//! Benchmarks for zsda-core; see `benches/`.
