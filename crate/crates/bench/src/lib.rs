//! Criterion benchmarks for the hot loops of `stsim-core`; see `benches/`.
