//! Criterion benchmarks for convsent live under `benches/`.
